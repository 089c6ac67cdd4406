// repdensity command-line entry point.
//
// Exit status: 0 on success, 1 for runtime and validation failures (a JSON
// error object is written to stderr), 2 for usage errors.

#include <algorithm>
#include <atomic>
#include <csignal>
#include <exception>
#include <fstream>
#include <functional>
#include <iostream>
#include <mutex>
#include <optional>
#include <set>
#include <sstream>
#include <thread>

#include "CLI11.hpp"
#include "commands.hpp"
#include "json.hpp"
#include "manifest.hpp"
#include "repdensity/certify.hpp"
#include "repdensity/class_analysis.hpp"
#include "repdensity/dpmm.hpp"
#include "repdensity/errors.hpp"
#include "repdensity/predictive.hpp"
#include "repdensity/representation.hpp"
#include "run_config.hpp"
#include "subprocess_classifier.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace repdensity;
using namespace repdensity::cli;

namespace {

// Stream ids for seeds derived from the global seed.
constexpr std::uint64_t kKlStream = 0x4b4c0000;
constexpr std::uint64_t kMatrixStream = 0x4b4d0000;
constexpr std::uint64_t kCertifyStream = 0x43520000;
constexpr std::uint64_t kSubsetStream = 0x53420000;

struct Common {
  std::string config_path;
  std::optional<std::uint64_t> seed;

  RunConfig load() const {
    RunConfig c = config_path.empty() ? RunConfig{} : load_run_config(config_path);
    if (seed) c.seed = *seed;
    c.validate();
    return c;
  }
};

void add_common(CLI::App* cmd, Common& common) {
  cmd->add_option("--config", common.config_path, "Run configuration (INI)")->check(CLI::ExistingFile);
  cmd->add_option("--seed", common.seed, "Override [run] seed");
}

void write_json_file(const fs::path& path, const json& j) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << j.dump(2) << '\n';
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create directory " + dir.string() + ": " + ec.message());
}

fs::path manifest_for(const fs::path& out) { return fs::path(out.string() + ".manifest.json"); }

const RepresentationDataset& class_rows_or_throw(const std::map<std::uint32_t, RepresentationDataset>& split,
                                                 std::uint32_t label, const std::string& source) {
  const auto it = split.find(label);
  if (it == split.end()) throw ConfigurationError("class " + std::to_string(label) + " has no rows in " + source);
  return it->second;
}

// ---------------------------------------------------------------- inspect

void run_inspect(const std::string& path) {
  const RepresentationDataset data = load_representations(path, false);
  json j;
  j["path"] = path;
  j["n"] = data.size();
  j["d"] = data.dim();
  j["stage"] = data.stage;
  j["precision"] = data.precision == Precision::F32 ? "f32" : "f64";
  std::map<std::string, std::size_t> histogram;
  for (auto label : data.labels) ++histogram[std::to_string(label)];
  j["classes"] = histogram;
  std::optional<std::size_t> bad_row;
  for (Eigen::Index i = 0; i < data.rows.rows() && !bad_row; ++i)
    if (!data.rows.row(i).allFinite()) bad_row = static_cast<std::size_t>(i);
  j["finite"] = !bad_row.has_value();
  j["first_nonfinite_row"] = bad_row ? json(*bad_row) : json(nullptr);
  std::cout << j.dump(2) << '\n';
}

// ----------------------------------------------------------------- reduce

struct ReduceArgs {
  Common common;
  std::string input, out, curve;
  std::optional<std::size_t> dims;
  std::optional<double> variance;
};

void run_reduce(const ReduceArgs& a) {
  const RunConfig config = a.common.load();
  const RepresentationDataset data = load_representations(a.input);
  SvdTarget target = config.target_for(data.stage);
  if (a.dims) target = SvdTarget::fixed(*a.dims);
  if (a.variance) target = SvdTarget::variance(*a.variance);
  const SvdResult result = svd_reduce(data, target);
  write_representations(result.data, fs::path(a.out));

  Manifest manifest("reduce", {{"input", a.input}, {"out", a.out}, {"target", format_svd_target(target)}},
                    config.to_json());
  manifest.add_input(a.input);
  manifest.add_output(a.out);
  if (!a.curve.empty()) {
    auto csv = open_csv(a.curve);
    csv << "components,variance_fraction\n";
    const auto curve = svd_variance_curve(data);
    for (std::size_t k = 0; k < curve.size(); ++k) csv << k + 1 << ',' << curve[k] << '\n';
    csv.close();
    manifest.add_output(a.curve);
  }
  manifest.set("result", {{"output_dim", result.projection.output_dim()},
                          {"variance_captured", result.projection.variance_captured}});
  manifest.write(manifest_for(a.out));
  std::cout << json{{"output_dim", result.projection.output_dim()},
                    {"variance_captured", result.projection.variance_captured}}
                   .dump()
            << '\n';
}

// -------------------------------------------------------------------- fit

struct FitArgs {
  Common common;
  std::string input, out, out_dir;
  std::optional<std::uint32_t> class_id;
  std::size_t parallel = 1;
};

SnapshotArchive fit_class(const Eigen::MatrixXd& rows, std::uint32_t label, const RunConfig& config) {
  SamplerConfig sampler = config.sampler;
  sampler.seed = derive_seed(config.seed, label);
  const NIWParams prior = derive_prior(rows, config.kappa0);
  SnapshotArchive archive;
  archive.n = static_cast<std::uint64_t>(rows.rows());
  archive.d = static_cast<std::uint64_t>(rows.cols());
  archive.snapshots = run(rows, prior, sampler);
  return archive;
}

void run_fit(const FitArgs& a) {
  const RunConfig config = a.common.load();
  const RepresentationDataset data = load_representations(a.input);
  const auto split = split_by_class(data);
  json arguments{{"input", a.input}};

  if (a.class_id) {
    if (a.out.empty()) throw ConfigurationError("fit --class needs --out <archive>");
    const auto& rows = class_rows_or_throw(split, *a.class_id, a.input);
    write_snapshot_archive(fit_class(rows.rows, *a.class_id, config), fs::path(a.out));
    arguments["class"] = *a.class_id;
    arguments["out"] = a.out;
    Manifest manifest("fit", arguments, config.to_json());
    manifest.add_input(a.input);
    manifest.add_output(a.out);
    manifest.write(manifest_for(a.out));
    return;
  }

  const fs::path dir = a.out_dir.empty() ? config.output_dir : fs::path(a.out_dir);
  ensure_dir(dir);
  std::vector<std::uint32_t> labels;
  for (const auto& [label, rows] : split) labels.push_back(label);

  // One independent chain per class; a shared counter hands out classes.
  std::atomic<std::size_t> next{0};
  std::mutex failure_mutex;
  std::exception_ptr failure;
  const auto worker = [&] {
    for (std::size_t i = next++; i < labels.size(); i = next++) {
      try {
        const auto label = labels[i];
        write_snapshot_archive(fit_class(split.at(label).rows, label, config), class_archive_path(dir, label));
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
      }
    }
  };
  {
    std::vector<std::jthread> pool;
    const std::size_t threads = std::min(worker_count(a.parallel), labels.size());
    for (std::size_t t = 1; t < threads; ++t) pool.emplace_back(worker);
    worker();
  }
  if (failure) std::rethrow_exception(failure);

  arguments["out_dir"] = dir.string();
  Manifest manifest("fit", arguments, config.to_json());
  manifest.add_input(a.input);
  for (auto label : labels) manifest.add_output(class_archive_path(dir, label));
  manifest.write(dir / "manifest.json");
}

// ---------------------------------------------------------------- density

struct DensityArgs {
  Common common;
  std::string model, train, repr, out;
  std::uint32_t class_id = 0;
};

void run_density(const DensityArgs& a) {
  const RunConfig config = a.common.load();
  const RepresentationDataset train = load_representations(a.train);
  const auto split = split_by_class(train);
  const PredictiveModel model =
      load_class_model(a.model, class_rows_or_throw(split, a.class_id, a.train).rows, config.kappa0);
  const RepresentationDataset queries = load_representations(a.repr);
  if (queries.dim() != model.dim()) {
    throw ParameterError("query dimension " + std::to_string(queries.dim()) + " does not match model dimension " +
                         std::to_string(model.dim()));
  }
  const Eigen::VectorXd logp = posterior_predictive_logpdf_rows(model, queries.rows);
  auto csv = open_csv(a.out);
  csv << "example_id,label,log_density\n";
  for (Eigen::Index i = 0; i < logp.size(); ++i) csv << i << ',' << queries.labels[static_cast<std::size_t>(i)] << ',' << logp[i] << '\n';
  csv.close();

  Manifest manifest("density",
                    {{"model", a.model}, {"train", a.train}, {"class", a.class_id}, {"repr", a.repr}, {"out", a.out}},
                    config.to_json());
  for (const auto& in : {a.model, a.train, a.repr}) manifest.add_input(in);
  manifest.add_output(a.out);
  manifest.write(manifest_for(a.out));
}

// --------------------------------------------------------------------- kl

struct KlArgs {
  Common common;
  std::string p, q, train, q_train, out;
  std::uint32_t p_class = 0;
  std::optional<std::uint32_t> q_class;
  std::optional<std::size_t> m;
};

void run_kl(const KlArgs& a) {
  RunConfig config = a.common.load();
  if (a.m) config.kl.samples_per_snapshot = *a.m;
  config.validate();
  KLConfig kl = config.kl;
  kl.seed = derive_seed(config.seed, kKlStream);

  const RepresentationDataset train = load_representations(a.train);
  const auto split = split_by_class(train);
  const auto& p_rows = class_rows_or_throw(split, a.p_class, a.train);
  const PredictiveModel p_model = load_class_model(a.p, p_rows.rows, config.kappa0);

  KLEstimate result;
  json reference;
  if (a.q == "maxent") {
    const DiagonalGaussian q = max_entropy_reference(p_rows.rows);
    result = kl_to_reference(p_model, [&](const Eigen::VectorXd& x) { return q.log_pdf(x); }, kl);
    reference = "maxent";
  } else {
    if (!a.q_class) throw ConfigurationError("kl with a model reference needs --q-class");
    const std::string q_train_path = a.q_train.empty() ? a.train : a.q_train;
    const RepresentationDataset q_train = a.q_train.empty() ? train : load_representations(a.q_train);
    const auto q_split = split_by_class(q_train);
    const PredictiveModel q_model =
        load_class_model(a.q, class_rows_or_throw(q_split, *a.q_class, q_train_path).rows, config.kappa0);
    result = kl_between_predictives(p_model, q_model, kl);
    reference = {{"archive", a.q}, {"class", *a.q_class}};
  }
  const json j{{"estimate", result.estimate},
               {"stderr", result.std_error},
               {"snapshots", result.snapshots},
               {"samples_per_snapshot", result.samples_per_snapshot},
               {"nonfinite", result.nonfinite},
               {"reference", reference},
               {"log_p_term", "snapshot_conditional"}};
  std::cout << j.dump(2) << '\n';
  if (!a.out.empty()) {
    write_json_file(a.out, j);
    Manifest manifest("kl", {{"p", a.p}, {"q", a.q}, {"train", a.train}, {"p_class", a.p_class}, {"out", a.out}},
                      config.to_json());
    manifest.add_input(a.p);
    manifest.add_input(a.train);
    if (a.q != "maxent") manifest.add_input(a.q);
    if (!a.q_train.empty()) manifest.add_input(a.q_train);
    manifest.add_output(a.out);
    manifest.write(manifest_for(a.out));
  }
}

// ---------------------------------------------------------- memorization

std::vector<double> read_score_csv(const fs::path& path, std::size_t n) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<double> scores(n, std::numeric_limits<double>::quiet_NaN());
  std::string line;
  std::getline(in, line);  // header
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::istringstream row(line);
    std::string id_text, score_text;
    std::getline(row, id_text, ',');
    std::getline(row, score_text, ',');
    try {
      const std::size_t id = std::stoull(id_text);
      if (id >= n) throw ValidationError(path.string() + ":" + std::to_string(line_no) + ": example id out of range");
      scores[id] = std::stod(score_text);
    } catch (const std::logic_error&) {
      throw FormatError(path.string() + ":" + std::to_string(line_no) + ": expected 'example_id,score'");
    }
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (std::isnan(scores[i])) throw ValidationError(path.string() + " has no score for example " + std::to_string(i));
  }
  return scores;
}

void write_score_csv(const fs::path& path, const std::vector<double>& scores) {
  auto csv = open_csv(path);
  csv << "example_id,score\n";
  for (std::size_t i = 0; i < scores.size(); ++i) csv << i << ',' << scores[i] << '\n';
}

struct MemArgs {
  Common common;
  std::string trials, out, input, subsets;
};

void run_mem_scores(const MemArgs& a) {
  const RunConfig config = a.common.load();
  const TrialRecords records = load_trial_records(a.trials);
  const auto scores = memorization_from_trials(records);
  write_score_csv(a.out, scores);
  Manifest manifest("mem-scores", {{"trials", a.trials}, {"out", a.out}}, config.to_json());
  manifest.add_input(a.trials);
  manifest.add_output(a.out);
  if (!a.subsets.empty()) {
    if (a.input.empty()) throw ConfigurationError("--subsets needs --input for class labels");
    const RepresentationDataset data = load_representations(a.input);
    if (data.size() != scores.size()) {
      throw ValidationError("trial records cover " + std::to_string(scores.size()) + " examples but " + a.input +
                            " has " + std::to_string(data.size()));
    }
    const auto s = select_memorization_subsets(scores, data.labels, config.memorization_threshold,
                                               config.min_class_size, derive_seed(config.seed, kSubsetStream));
    write_json_file(a.subsets, {{"memorized", s.memorized},
                                {"least_memorized", s.least_memorized},
                                {"random", s.random},
                                {"retained_classes", s.retained_classes}});
    manifest.add_input(a.input);
    manifest.add_output(a.subsets);
  }
  manifest.write(manifest_for(a.out));
}

// --------------------------------------------------------------- classify

void write_predictions(const fs::path& path, const RepresentationDataset& queries, const Classification& c) {
  auto csv = open_csv(path);
  csv << "example_id,truth,predicted\n";
  for (std::size_t i = 0; i < c.predicted.size(); ++i) csv << i << ',' << queries.labels[i] << ',' << c.predicted[i] << '\n';
}

json score_json(const FScores& f) {
  json per = json::object();
  for (const auto& [label, v] : f.per_class) per[std::to_string(label)] = v;
  return {{"macro_f", f.macro}, {"per_class", per}};
}

struct ClassifyArgs {
  Common common;
  std::string models, train, queries, out;
};

void run_classify(const ClassifyArgs& a) {
  const RunConfig config = a.common.load();
  const RepresentationDataset train = load_representations(a.train);
  const RepresentationDataset queries = load_representations(a.queries);
  const ClassModels models = load_class_models(train, a.models, config.kappa0);
  for (const auto& [label, rows] : split_by_class(train)) {
    if (!models.contains(label)) throw ConfigurationError("no archive for class " + std::to_string(label) + " in " + a.models);
  }
  const auto c = generative_classify(models, empirical_class_priors(train.labels), queries.rows, queries.labels);
  write_predictions(a.out, queries, c);
  const json summary = score_json(*c.scores);
  std::cout << summary.dump(2) << '\n';

  Manifest manifest("classify", {{"models", a.models}, {"train", a.train}, {"queries", a.queries}, {"out", a.out}},
                    config.to_json());
  manifest.add_input(a.train);
  manifest.add_input(a.queries);
  for (const auto& [label, m] : models) manifest.add_input(class_archive_path(a.models, label));
  manifest.add_output(a.out);
  manifest.set("scores", summary);
  manifest.write(manifest_for(a.out));
}

// ---------------------------------------------------------------- analyze

struct AnalyzeArgs {
  Common common;
  std::string input, models, out_dir, mem_scores, trials, queries;
  std::size_t parallel = 1;
};

void run_analyze(const AnalyzeArgs& a) {
  const RunConfig config = a.common.load();
  const RepresentationDataset data = load_representations(a.input);
  const ClassModels models = load_class_models(data, a.models, config.kappa0);
  const fs::path dir = a.out_dir.empty() ? config.output_dir : fs::path(a.out_dir);
  ensure_dir(dir);
  Manifest manifest("analyze", {{"input", a.input}, {"models", a.models}, {"out_dir", dir.string()}}, config.to_json());
  manifest.add_input(a.input);
  for (const auto& [label, m] : models) manifest.add_input(class_archive_path(a.models, label));
  json summary;

  // Per-class statistics and the low/high split.
  const ClassDensityReport report = class_log_density_stats(models, data);
  std::vector<double> means;
  for (const auto& c : report.classes) means.push_back(c.mean);
  std::map<std::uint32_t, int> class_group;
  if (means.size() >= 2) {
    const DensityGroups groups = detect_density_groups(means);
    for (std::size_t i = 0; i < means.size(); ++i) class_group[report.classes[i].class_id] = groups.group[i];
    summary["groups"] = {{"threshold", groups.threshold},
                         {"separation", groups.separation},
                         {"unimodal", groups.unimodal},
                         {"bimodal", groups.bimodal()}};
  }
  {
    auto csv = open_csv(dir / "class_stats.csv");
    csv << "class,count,mean,std,group\n";
    for (const auto& c : report.classes) {
      const auto g = class_group.find(c.class_id);
      csv << c.class_id << ',' << c.count << ',' << c.mean << ',' << c.std << ','
          << (g == class_group.end() ? "" : (g->second == 0 ? "low" : "high")) << '\n';
    }
  }
  manifest.add_output(dir / "class_stats.csv");
  {
    auto csv = open_csv(dir / "densities.csv");
    csv << "example_id,class,log_density\n";
    for (const auto& r : report.records) csv << r.example_id << ',' << r.class_id << ',' << r.log_density << '\n';
  }
  manifest.add_output(dir / "densities.csv");

  // Density bins, with memorization when supplied.
  std::vector<double> memorization;
  if (!a.mem_scores.empty()) {
    memorization = read_score_csv(a.mem_scores, data.size());
    manifest.add_input(a.mem_scores);
  } else if (!a.trials.empty()) {
    memorization = memorization_from_trials(load_trial_records(a.trials));
    if (memorization.size() != data.size()) throw ValidationError("trial records do not cover the input examples");
    manifest.add_input(a.trials);
  }
  const DensityBinning binning =
      density_bins(report, memorization, class_group, std::min<std::size_t>(config.bins, data.size()));
  {
    auto csv = open_csv(dir / "bins.csv");
    csv << "bin,count,mean_logp,std_logp,mean_mem,std_mem,low_frac,high_frac\n";
    for (std::size_t b = 0; b < binning.summaries.size(); ++b) {
      const auto& s = binning.summaries[b];
      csv << b << ',' << s.count << ',' << s.mean_log_density << ',' << s.std_log_density << ','
          << optional_cell(s.mean_memorization) << ',' << optional_cell(s.std_memorization) << ',' << s.low_fraction
          << ',' << s.high_fraction << '\n';
    }
  }
  manifest.add_output(dir / "bins.csv");

  // Between-class divergences for classes large enough.
  KLConfig kl = config.kl;
  kl.seed = derive_seed(config.seed, kMatrixStream);
  try {
    const KLMatrix m = between_class_kl_matrix(models, kl, config.min_class_size, worker_count(a.parallel));
    auto csv = open_csv(dir / "kl_matrix.csv");
    csv << "from,to,estimate,stderr\n";
    for (std::size_t i = 0; i < m.classes.size(); ++i)
      for (std::size_t j = 0; j < m.classes.size(); ++j)
        csv << m.classes[i] << ',' << m.classes[j] << ',' << m.estimate(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j))
            << ',' << m.std_error(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) << '\n';
    csv.close();
    manifest.add_output(dir / "kl_matrix.csv");
    summary["kl_matrix"] = {{"classes", m.classes.size()},
                            {"off_diagonal_mean", m.off_diagonal_mean},
                            {"off_diagonal_std", m.off_diagonal_std}};
  } catch (const InsufficientDataError& e) {
    summary["kl_matrix"] = {{"skipped", e.what()}};
  }

  if (!a.queries.empty()) {
    const RepresentationDataset queries = load_representations(a.queries);
    const auto c = generative_classify(models, empirical_class_priors(data.labels), queries.rows, queries.labels);
    write_predictions(dir / "predictions.csv", queries, c);
    manifest.add_input(a.queries);
    manifest.add_output(dir / "predictions.csv");
    summary["classification"] = score_json(*c.scores);
  }

  manifest.set("summary", summary);
  manifest.write(dir / "manifest.json");
  std::cout << summary.dump(2) << '\n';
}

// ---------------------------------------------------------------- certify

struct CertifyArgs {
  Common common;
  std::string points, classifier, out, densities, report;
};

void run_certify(const CertifyArgs& a) {
  const RunConfig config = a.common.load();
  const RepresentationDataset points = load_representations(a.points);
  SubprocessClassifier process(a.classifier);
  const BatchClassifier classify = [&process](const Eigen::MatrixXd& batch) { return process.classify(batch); };

  std::vector<CertifyOutcome> outcomes;
  outcomes.reserve(points.size());
  const std::uint64_t base = derive_seed(config.seed, kCertifyStream);
  for (std::size_t i = 0; i < points.size(); ++i) {
    Rng rng = make_rng(base, i);
    outcomes.push_back(certify(classify, points.rows.row(static_cast<Eigen::Index>(i)).transpose(), config.certify, rng));
  }
  process.finish();

  {
    auto csv = open_csv(a.out);
    csv << "example_id,abstain,class,p_lower,radius\n";
    for (std::size_t i = 0; i < outcomes.size(); ++i) {
      const auto& o = outcomes[i];
      csv << i << ',' << (o.abstain ? 1 : 0) << ',' << (o.abstain ? std::string() : std::to_string(o.predicted)) << ','
          << o.p_lower << ',' << (o.abstain ? std::string() : optional_cell(o.radius)) << '\n';
    }
  }
  Manifest manifest("certify", {{"points", a.points}, {"classifier", a.classifier}, {"out", a.out}}, config.to_json());
  manifest.add_input(a.points);
  manifest.add_output(a.out);

  if (!a.report.empty()) {
    if (a.densities.empty()) throw ConfigurationError("--report needs --densities to order points into bins");
    // Bins follow the same density ordering as the analysis bins.
    std::ifstream in(a.densities);
    if (!in) throw IoError("cannot open " + a.densities);
    ClassDensityReport density_report;
    std::string line;
    std::getline(in, line);
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      std::vector<std::string> cells;
      std::istringstream row(line);
      for (std::string cell; std::getline(row, cell, ',');) cells.push_back(cell);
      try {
        density_report.records.push_back({std::stoull(cells.at(0)), 0, std::stod(cells.back())});
      } catch (const std::logic_error&) {
        throw FormatError(a.densities + ": expected 'example_id,...,log_density' rows");
      }
    }
    if (density_report.records.size() != points.size()) {
      throw ValidationError(a.densities + " has " + std::to_string(density_report.records.size()) +
                            " rows but there are " + std::to_string(points.size()) + " points");
    }
    const auto binning = density_bins(density_report, {}, {}, std::min<std::size_t>(config.bins, points.size()));
    std::vector<LabelledOutcome> labelled;
    for (std::size_t b = 0; b < binning.bins.size(); ++b) {
      for (auto id : binning.bins[b]) {
        if (id >= points.size()) throw ValidationError(a.densities + ": example id " + std::to_string(id) + " out of range");
        labelled.push_back({b, static_cast<int>(points.labels[id]), outcomes[id]});
      }
    }
    auto csv = open_csv(a.report);
    csv << "bin,count,certified,classification_rate,mean_radius,std_radius,f_abstain_as_error,f_certified_only\n";
    for (const auto& r : certification_report(labelled, binning.bins.size())) {
      csv << r.bin << ',' << r.count << ',' << r.certified << ',' << r.classification_rate << ','
          << optional_cell(r.mean_radius) << ',' << optional_cell(r.std_radius) << ','
          << optional_cell(r.f_score_abstain_as_error) << ',' << optional_cell(r.f_score_certified_only) << '\n';
    }
    csv.close();
    manifest.add_input(a.densities);
    manifest.add_output(a.report);
  }
  manifest.write(manifest_for(a.out));
}

int report_error(const std::exception& e) {
  json j;
  if (const auto* err = dynamic_cast<const repdensity::Error*>(&e)) {
    j["error"] = {{"kind", err->kind()}, {"message", err->what()}};
    if (const auto* undefined = dynamic_cast<const UndefinedScoreError*>(&e)) j["error"]["example_ids"] = undefined->example_ids();
  } else if (dynamic_cast<const std::bad_alloc*>(&e) != nullptr) {
    j["error"] = {{"kind", "resource"}, {"message", "out of memory"}};
  } else {
    j["error"] = {{"kind", "internal"}, {"message", e.what()}};
  }
  std::cerr << j.dump() << '\n';
  return 1;
}

}  // namespace

int main(int argc, char** argv) {
  std::signal(SIGPIPE, SIG_IGN);

  CLI::App app{"Density analysis of neural representations with Dirichlet-process Gaussian mixtures"};
  app.require_subcommand(1);
  std::function<void()> action;

  std::string inspect_path;
  auto* inspect = app.add_subcommand("inspect", "Summarize a representation file as JSON");
  inspect->add_option("file", inspect_path, "Representation file")->required();
  inspect->callback([&] { action = [&] { run_inspect(inspect_path); }; });

  ReduceArgs reduce_args;
  auto* reduce = app.add_subcommand("reduce", "Project representations onto leading singular vectors");
  add_common(reduce, reduce_args.common);
  reduce->add_option("--input", reduce_args.input)->required();
  reduce->add_option("--out", reduce_args.out)->required();
  auto* dims_opt = reduce->add_option("--dims", reduce_args.dims, "Output dimension");
  reduce->add_option("--variance", reduce_args.variance, "Smallest dimension capturing this variance fraction")
      ->excludes(dims_opt);
  reduce->add_option("--curve", reduce_args.curve, "Write the cumulative variance curve as CSV");
  reduce->callback([&] { action = [&] { run_reduce(reduce_args); }; });

  FitArgs fit_args;
  auto* fit = app.add_subcommand("fit", "Fit per-class mixture chains and store retained snapshots");
  add_common(fit, fit_args.common);
  fit->add_option("--input", fit_args.input)->required();
  auto* class_opt = fit->add_option("--class", fit_args.class_id, "Fit a single class");
  fit->add_option("--out", fit_args.out, "Archive path (with --class)")->needs(class_opt);
  fit->add_option("--out-dir", fit_args.out_dir, "Directory for class_<id>.dpss archives (all classes)")->excludes(class_opt);
  fit->add_option("--parallel-classes", fit_args.parallel, "Classes fitted concurrently")->check(CLI::PositiveNumber);
  fit->callback([&] { action = [&] { run_fit(fit_args); }; });

  DensityArgs density_args;
  auto* density = app.add_subcommand("density", "Per-row posterior predictive log-densities as CSV");
  add_common(density, density_args.common);
  density->add_option("--model", density_args.model)->required();
  density->add_option("--train", density_args.train, "Representation file the model was fitted to")->required();
  density->add_option("--class", density_args.class_id)->required();
  density->add_option("--repr", density_args.repr, "Rows to evaluate")->required();
  density->add_option("--out", density_args.out)->required();
  density->callback([&] { action = [&] { run_density(density_args); }; });

  KlArgs kl_args;
  auto* kl = app.add_subcommand("kl", "Monte-Carlo KL divergence from a fitted predictive");
  add_common(kl, kl_args.common);
  kl->add_option("--p", kl_args.p)->required();
  kl->add_option("--train", kl_args.train, "Representation file the p model was fitted to")->required();
  kl->add_option("--p-class", kl_args.p_class)->required();
  kl->add_option("--q", kl_args.q, "Archive, or 'maxent' for the diagonal Gaussian reference")->required();
  kl->add_option("--q-train", kl_args.q_train, "Training file of the q model (defaults to --train)");
  kl->add_option("--q-class", kl_args.q_class);
  kl->add_option("--m", kl_args.m, "Samples per snapshot")->check(CLI::PositiveNumber);
  kl->add_option("--out", kl_args.out, "Also write the JSON result here");
  kl->callback([&] { action = [&] { run_kl(kl_args); }; });

  AnalyzeArgs analyze_args;
  auto* analyze = app.add_subcommand("analyze", "Class statistics, density bins and the between-class KL matrix");
  add_common(analyze, analyze_args.common);
  analyze->add_option("--input", analyze_args.input)->required();
  analyze->add_option("--models", analyze_args.models)->required();
  analyze->add_option("--out-dir", analyze_args.out_dir);
  auto* mem_opt = analyze->add_option("--mem-scores", analyze_args.mem_scores, "CSV example_id,score");
  analyze->add_option("--trials", analyze_args.trials, "Trial records to derive memorization from")->excludes(mem_opt);
  analyze->add_option("--queries", analyze_args.queries, "Also classify these rows");
  analyze->add_option("--parallel-classes", analyze_args.parallel)->check(CLI::PositiveNumber);
  analyze->callback([&] { action = [&] { run_analyze(analyze_args); }; });

  ClassifyArgs classify_args;
  auto* classify = app.add_subcommand("classify", "Generative classification with per-class predictives");
  add_common(classify, classify_args.common);
  classify->add_option("--models", classify_args.models)->required();
  classify->add_option("--train", classify_args.train)->required();
  classify->add_option("--queries", classify_args.queries)->required();
  classify->add_option("--out", classify_args.out)->required();
  classify->callback([&] { action = [&] { run_classify(classify_args); }; });

  CertifyArgs certify_args;
  auto* cert = app.add_subcommand("certify", "Randomized-smoothing certification against an external classifier");
  add_common(cert, certify_args.common);
  cert->add_option("--points", certify_args.points)->required();
  cert->add_option("--classifier", certify_args.classifier, "Shell command speaking the frame protocol")->required();
  cert->add_option("--out", certify_args.out)->required();
  cert->add_option("--densities", certify_args.densities, "CSV with example_id first and log_density last");
  cert->add_option("--report", certify_args.report, "Per-bin certification summary CSV");
  cert->callback([&] { action = [&] { run_certify(certify_args); }; });

  MemArgs mem_args;
  auto* mem = app.add_subcommand("mem-scores", "Memorization scores from trial records");
  add_common(mem, mem_args.common);
  mem->add_option("--trials", mem_args.trials)->required();
  mem->add_option("--out", mem_args.out)->required();
  mem->add_option("--input", mem_args.input, "Representation file supplying labels for --subsets");
  mem->add_option("--subsets", mem_args.subsets, "Write memorized / least / random subsets as JSON");
  mem->callback([&] { action = [&] { run_mem_scores(mem_args); }; });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }
  try {
    action();
  } catch (const std::exception& e) {
    return report_error(e);
  }
  return 0;
}
