#include "run_config.hpp"

#include <charconv>
#include <fstream>
#include <set>
#include <sstream>

#include <boost/algorithm/string/trim.hpp>
#include <boost/lexical_cast.hpp>
#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "repdensity/errors.hpp"

namespace repdensity::cli {

namespace {

namespace pt = boost::property_tree;

template <class T>
T value_as(const std::string& section, const std::string& key, const std::string& raw, const std::string& source) {
  try {
    if constexpr (std::is_same_v<T, bool>) {
      if (raw == "true" || raw == "1" || raw == "yes") return true;
      if (raw == "false" || raw == "0" || raw == "no") return false;
      throw boost::bad_lexical_cast();
    } else if constexpr (std::is_unsigned_v<T>) {
      if (!raw.empty() && raw.front() == '-') throw boost::bad_lexical_cast();
      return boost::lexical_cast<T>(raw);
    } else {
      return boost::lexical_cast<T>(raw);
    }
  } catch (const boost::bad_lexical_cast&) {
    throw ConfigurationError(source + ": [" + section + "] " + key + " = '" + raw + "' is not a valid value");
  }
}

std::vector<std::string> split_list(const std::string& raw) {
  std::vector<std::string> out;
  std::stringstream in(raw);
  for (std::string item; std::getline(in, item, ',');) {
    boost::algorithm::trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

nlohmann::json target_json(const SvdTarget& t) { return format_svd_target(t); }

}  // namespace

SvdTarget parse_svd_target(const std::string& text) {
  const std::string prefix = "variance:";
  try {
    if (text.rfind(prefix, 0) == 0) {
      const double fraction = boost::lexical_cast<double>(text.substr(prefix.size()));
      if (!(fraction > 0.0 && fraction <= 1.0)) {
        throw ConfigurationError("SVD variance fraction must lie in (0, 1], got '" + text + "'");
      }
      return SvdTarget::variance(fraction);
    }
    if (!text.empty() && text.front() == '-') throw boost::bad_lexical_cast();
    return SvdTarget::fixed(boost::lexical_cast<std::size_t>(text));
  } catch (const boost::bad_lexical_cast&) {
    throw ConfigurationError("invalid SVD target '" + text + "' (expected an integer or variance:<fraction>)");
  }
}

std::string format_svd_target(const SvdTarget& target) {
  if (target.kind == SvdTarget::Kind::Dims) return std::to_string(target.dims);
  // Shortest text that parses back to the same double.
  char buffer[32];
  const auto end = std::to_chars(buffer, buffer + sizeof buffer, target.fraction).ptr;
  return "variance:" + std::string(buffer, end);
}

SvdTarget RunConfig::target_for(const std::string& stage) const {
  const auto it = stage_targets.find(stage);
  return it == stage_targets.end() ? default_target : it->second;
}

void RunConfig::validate() const {
  try {
    sampler.validate();
    kl.validate();
    certify.validate();
  } catch (const ParameterError& e) {
    throw ConfigurationError(e.what());
  }
  if (!(kappa0 > 0.0)) throw ConfigurationError("prior.kappa0 must be positive");
  if (bins < 1) throw ConfigurationError("analysis.bins must be at least 1");
  const auto check_target = [](const SvdTarget& t, const std::string& name) {
    if (t.kind == SvdTarget::Kind::Dims && t.dims < 1) throw ConfigurationError(name + " must be at least 1");
    if (t.kind == SvdTarget::Kind::Variance && !(t.fraction > 0.0 && t.fraction <= 1.0)) {
      throw ConfigurationError(name + " variance fraction must lie in (0, 1]");
    }
  };
  check_target(default_target, "svd.default");
  for (const auto& [stage, t] : stage_targets) check_target(t, "svd." + stage);
}

nlohmann::json RunConfig::to_json() const {
  nlohmann::json j;
  std::vector<std::string> paths;
  for (const auto& p : datasets) paths.push_back(p.string());
  j["data"]["paths"] = paths;
  j["svd"]["default"] = target_json(default_target);
  for (const auto& [stage, t] : stage_targets) j["svd"][stage] = target_json(t);
  j["sampler"] = {{"sweeps", sampler.sweeps},
                  {"burn_in", sampler.burn_in},
                  {"thin", sampler.thin},
                  {"block_size", sampler.block_size},
                  {"resample_alpha", sampler.resample_alpha}};
  j["prior"]["kappa0"] = kappa0;
  j["kl"]["samples_per_snapshot"] = kl.samples_per_snapshot;
  j["certify"] = {{"sigma", certify.sigma},
                  {"n0", certify.n0},
                  {"n", certify.n},
                  {"alpha", certify.alpha},
                  {"batch_size", certify.batch_size}};
  j["analysis"] = {{"min_class_size", min_class_size},
                   {"memorization_threshold", memorization_threshold},
                   {"bins", bins}};
  j["run"] = {{"seed", seed}, {"output_dir", output_dir.string()}};
  return j;
}

RunConfig parse_run_config(const std::string& text, const std::string& source) {
  pt::ptree tree;
  std::istringstream in(text);
  try {
    pt::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw ConfigurationError(source + ": " + e.message() + " (line " + std::to_string(e.line()) + ")");
  }

  RunConfig c;
  for (const auto& [section, body] : tree) {
    if (!body.data().empty()) throw ConfigurationError(source + ": key '" + section + "' outside any section");
    for (const auto& [key, node] : body) {
      const std::string raw = node.data();
      const auto unknown = [&] { throw ConfigurationError(source + ": unknown key [" + section + "] " + key); };
      if (section == "data") {
        if (key != "paths") unknown();
        for (const auto& p : split_list(raw)) c.datasets.emplace_back(p);
      } else if (section == "svd") {
        if (key == "default") {
          c.default_target = parse_svd_target(raw);
        } else {
          c.stage_targets[key] = parse_svd_target(raw);
        }
      } else if (section == "sampler") {
        if (key == "sweeps") c.sampler.sweeps = value_as<std::size_t>(section, key, raw, source);
        else if (key == "burn_in") c.sampler.burn_in = value_as<std::size_t>(section, key, raw, source);
        else if (key == "thin") c.sampler.thin = value_as<std::size_t>(section, key, raw, source);
        else if (key == "block_size") c.sampler.block_size = value_as<std::size_t>(section, key, raw, source);
        else if (key == "resample_alpha") c.sampler.resample_alpha = value_as<bool>(section, key, raw, source);
        else unknown();
      } else if (section == "prior") {
        if (key != "kappa0") unknown();
        c.kappa0 = value_as<double>(section, key, raw, source);
      } else if (section == "kl") {
        if (key != "samples_per_snapshot") unknown();
        c.kl.samples_per_snapshot = value_as<std::size_t>(section, key, raw, source);
      } else if (section == "certify") {
        if (key == "sigma") c.certify.sigma = value_as<double>(section, key, raw, source);
        else if (key == "n0") c.certify.n0 = value_as<std::size_t>(section, key, raw, source);
        else if (key == "n") c.certify.n = value_as<std::size_t>(section, key, raw, source);
        else if (key == "alpha") c.certify.alpha = value_as<double>(section, key, raw, source);
        else if (key == "batch_size") c.certify.batch_size = value_as<std::size_t>(section, key, raw, source);
        else unknown();
      } else if (section == "analysis") {
        if (key == "min_class_size") c.min_class_size = value_as<std::size_t>(section, key, raw, source);
        else if (key == "memorization_threshold") c.memorization_threshold = value_as<double>(section, key, raw, source);
        else if (key == "bins") c.bins = value_as<std::size_t>(section, key, raw, source);
        else unknown();
      } else if (section == "run") {
        if (key == "seed") c.seed = value_as<std::uint64_t>(section, key, raw, source);
        else if (key == "output_dir") c.output_dir = raw;
        else unknown();
      } else {
        throw ConfigurationError(source + ": unknown section [" + section + "]");
      }
    }
  }
  c.validate();
  return c;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config " + path.string());
  std::ostringstream text;
  text << in.rdbuf();
  return parse_run_config(text.str(), path.string());
}

}  // namespace repdensity::cli
