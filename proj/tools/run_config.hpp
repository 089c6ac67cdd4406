#pragma once

// Sectioned key = value run configuration shared by the subcommands.

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "json.hpp"

#include "repdensity/certify.hpp"
#include "repdensity/dpmm.hpp"
#include "repdensity/predictive.hpp"
#include "repdensity/representation.hpp"

namespace repdensity::cli {

struct RunConfig {
  std::vector<std::filesystem::path> datasets;
  SvdTarget default_target = SvdTarget::fixed(16);
  std::map<std::string, SvdTarget> stage_targets{{"stage1", SvdTarget::fixed(16)},
                                                 {"stage2", SvdTarget::fixed(16)},
                                                 {"stage3", SvdTarget::fixed(64)},
                                                 {"stage4", SvdTarget::fixed(64)}};
  SamplerConfig sampler;
  double kappa0 = kDefaultKappa0;
  KLConfig kl;
  CertifyConfig certify;
  std::size_t min_class_size = 100;
  double memorization_threshold = 0.9;
  std::size_t bins = 50;
  std::uint64_t seed = 0;
  std::filesystem::path output_dir = ".";

  void validate() const;
  /// Target for a stage tag, falling back to the default.
  SvdTarget target_for(const std::string& stage) const;
  /// Canonical form; its hash identifies the configuration.
  nlohmann::json to_json() const;
};

/// Parses an INI-style file. Unknown sections or keys are rejected so that
/// typos cannot silently fall back to defaults.
RunConfig load_run_config(const std::filesystem::path& path);
RunConfig parse_run_config(const std::string& text, const std::string& source = "<config>");

/// "16" is a fixed dimension, "variance:0.9" a variance fraction.
SvdTarget parse_svd_target(const std::string& text);
std::string format_svd_target(const SvdTarget& target);

}  // namespace repdensity::cli
