#include "repdensity/class_analysis.hpp"

#include <algorithm>
#include <array>
#include <iterator>
#include <atomic>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <set>
#include <string>
#include <thread>

#include "repdensity/detail/binary_io.hpp"
#include "repdensity/errors.hpp"

namespace repdensity {

namespace {

constexpr char kTrialMagic[5] = "TRLS";
constexpr std::uint16_t kTrialVersion = 1;

struct MeanStd {
  double mean = 0.0;
  double std = 0.0;
};

template <typename Range>
MeanStd mean_std(const Range& values) {
  MeanStd out;
  if (values.empty()) return out;
  const double n = static_cast<double>(values.size());
  for (double v : values) out.mean += v;
  out.mean /= n;
  double ss = 0.0;
  for (double v : values) ss += (v - out.mean) * (v - out.mean);
  out.std = std::sqrt(ss / n);
  return out;
}

void write_bitmask(std::ostream& out, const std::vector<bool>& bits) {
  std::vector<char> bytes((bits.size() + 7) / 8, 0);
  for (std::size_t i = 0; i < bits.size(); ++i) {
    if (bits[i]) bytes[i / 8] = static_cast<char>(bytes[i / 8] | (1 << (i % 8)));
  }
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

std::vector<bool> read_bitmask(std::istream& in, std::size_t n, const char* what) {
  std::vector<char> bytes((n + 7) / 8);
  detail::read_exact(in, bytes.data(), bytes.size(), what);
  std::vector<bool> bits(n);
  for (std::size_t i = 0; i < n; ++i) bits[i] = (static_cast<unsigned char>(bytes[i / 8]) >> (i % 8)) & 1U;
  return bits;
}

}  // namespace

ClassDensityReport class_log_density_stats(const ClassModels& models, const RepresentationDataset& data) {
  data.validate();
  ClassDensityReport report;
  report.records.reserve(data.size());
  std::map<std::uint32_t, std::vector<double>> per_class;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto label = data.labels[i];
    auto it = models.find(label);
    if (it == models.end()) {
      throw ConfigurationError("class " + std::to_string(label) + " has rows but no fitted model");
    }
    const double logp = posterior_predictive_logpdf(it->second, data.rows.row(static_cast<Eigen::Index>(i)).transpose());
    report.records.push_back(ExampleDensity{i, label, logp});
    per_class[label].push_back(logp);
  }
  for (const auto& [label, values] : per_class) {
    const auto stats = mean_std(values);
    report.classes.push_back(ClassDensityStat{label, values.size(), stats.mean, stats.std});
  }
  std::stable_sort(report.classes.begin(), report.classes.end(),
                   [](const auto& a, const auto& b) { return a.mean < b.mean; });
  return report;
}

DensityGroups detect_density_groups(std::span<const double> class_means) {
  if (class_means.size() < 2) throw ParameterError("detect_density_groups needs at least 2 classes");
  const std::size_t k = class_means.size();
  std::vector<std::size_t> order(k);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return class_means[a] < class_means[b]; });
  std::vector<double> sorted(k);
  for (std::size_t i = 0; i < k; ++i) sorted[i] = class_means[order[i]];

  DensityGroups out;
  out.group.assign(k, 0);
  if (sorted.front() == sorted.back()) {
    out.unimodal = true;
    out.threshold = sorted.front();
    return out;
  }

  // Prefix sums give each split's within-group sum of squares in O(1).
  std::vector<double> prefix(k + 1, 0.0);
  std::vector<double> prefix_sq(k + 1, 0.0);
  for (std::size_t i = 0; i < k; ++i) {
    prefix[i + 1] = prefix[i] + sorted[i];
    prefix_sq[i + 1] = prefix_sq[i] + sorted[i] * sorted[i];
  }
  auto sse = [&](std::size_t lo, std::size_t hi) {
    const double n = static_cast<double>(hi - lo);
    const double s = prefix[hi] - prefix[lo];
    return std::max(0.0, (prefix_sq[hi] - prefix_sq[lo]) - s * s / n);
  };
  std::size_t best_split = 1;
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t split = 1; split < k; ++split) {
    const double within = sse(0, split) + sse(split, k);
    if (within < best) {
      best = within;
      best_split = split;
    }
  }

  const double n = static_cast<double>(k);
  const double total_mean = prefix[k] / n;
  const double low_mean = prefix[best_split] / static_cast<double>(best_split);
  const double high_mean = (prefix[k] - prefix[best_split]) / static_cast<double>(k - best_split);
  const double between = (static_cast<double>(best_split) * (low_mean - total_mean) * (low_mean - total_mean) +
                          static_cast<double>(k - best_split) * (high_mean - total_mean) * (high_mean - total_mean)) /
                         n;
  const double within = best / n;
  out.separation = within > 0.0 ? between / within : std::numeric_limits<double>::infinity();
  out.threshold = 0.5 * (sorted[best_split - 1] + sorted[best_split]);
  for (std::size_t i = best_split; i < k; ++i) out.group[order[i]] = 1;
  return out;
}

void TrialRecords::validate() const {
  for (std::size_t t = 0; t < trials.size(); ++t) {
    if (trials[t].included.size() != example_count || trials[t].correct.size() != example_count) {
      throw ValidationError("trial " + std::to_string(t) + " mask length does not match example count");
    }
  }
}

void write_trial_records(const TrialRecords& records, std::ostream& out) {
  records.validate();
  out.write(kTrialMagic, 4);
  detail::write_le<std::uint16_t>(out, kTrialVersion);
  detail::write_le<std::uint16_t>(out, 0);
  detail::write_le<std::uint64_t>(out, records.example_count);
  detail::write_le<std::uint64_t>(out, records.trials.size());
  for (const auto& trial : records.trials) {
    write_bitmask(out, trial.included);
    write_bitmask(out, trial.correct);
  }
  if (!out) throw IoError("failed writing trial records");
}

void write_trial_records(const TrialRecords& records, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  write_trial_records(records, out);
}

TrialRecords read_trial_records(std::istream& in, const std::string& source) {
  detail::expect_magic(in, kTrialMagic, source);
  const auto version = detail::read_le<std::uint16_t>(in, "version");
  if (version != kTrialVersion) throw FormatError(source + ": unsupported trial-record version");
  detail::read_le<std::uint16_t>(in, "reserved");
  TrialRecords records;
  records.example_count = detail::read_le<std::uint64_t>(in, "example count");
  const auto trials = detail::read_le<std::uint64_t>(in, "trial count");
  if (records.example_count > (std::uint64_t{1} << 40) || trials > (std::uint64_t{1} << 32)) {
    throw CorruptionError(source + ": implausible trial-record header");
  }
  records.trials.resize(trials);
  for (auto& trial : records.trials) {
    trial.included = read_bitmask(in, records.example_count, "inclusion mask");
    trial.correct = read_bitmask(in, records.example_count, "correctness mask");
  }
  return records;
}

TrialRecords load_trial_records(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  return read_trial_records(in, path.string());
}

std::vector<double> memorization_from_trials(const TrialRecords& records) {
  records.validate();
  const std::size_t n = records.example_count;
  std::vector<std::size_t> in_total(n, 0), in_correct(n, 0), out_total(n, 0), out_correct(n, 0);
  for (const auto& trial : records.trials) {
    for (std::size_t i = 0; i < n; ++i) {
      if (trial.included[i]) {
        ++in_total[i];
        in_correct[i] += trial.correct[i] ? 1 : 0;
      } else {
        ++out_total[i];
        out_correct[i] += trial.correct[i] ? 1 : 0;
      }
    }
  }
  std::vector<std::size_t> undefined;
  for (std::size_t i = 0; i < n; ++i) {
    if (in_total[i] == 0 || out_total[i] == 0) undefined.push_back(i);
  }
  if (!undefined.empty()) {
    std::string ids;
    for (std::size_t j = 0; j < undefined.size() && j < 20; ++j) ids += (j ? "," : "") + std::to_string(undefined[j]);
    if (undefined.size() > 20) ids += ",...";
    throw UndefinedScoreError("memorization undefined for examples never included or never excluded: " + ids,
                              std::move(undefined));
  }
  std::vector<double> scores(n);
  for (std::size_t i = 0; i < n; ++i) {
    scores[i] = static_cast<double>(in_correct[i]) / static_cast<double>(in_total[i]) -
                static_cast<double>(out_correct[i]) / static_cast<double>(out_total[i]);
  }
  return scores;
}

DensityBinning density_bins(const ClassDensityReport& report, std::span<const double> memorization,
                            const std::map<std::uint32_t, int>& class_group, std::size_t bin_count) {
  const std::size_t n = report.records.size();
  if (bin_count == 0 || bin_count > n) {
    throw ParameterError("bin count " + std::to_string(bin_count) + " must lie in [1, " + std::to_string(n) + "]");
  }
  std::vector<ExampleDensity> sorted = report.records;
  std::sort(sorted.begin(), sorted.end(), [](const auto& a, const auto& b) {
    return a.log_density < b.log_density || (a.log_density == b.log_density && a.example_id < b.example_id);
  });
  for (const auto& rec : sorted) {
    if (!memorization.empty() && rec.example_id >= memorization.size()) {
      throw ParameterError("memorization scores do not cover example " + std::to_string(rec.example_id));
    }
  }

  DensityBinning out;
  const std::size_t base = n / bin_count;
  const std::size_t extra = n % bin_count;
  std::size_t pos = 0;
  for (std::size_t b = 0; b < bin_count; ++b) {
    const std::size_t size = base + (b < extra ? 1 : 0);
    std::vector<std::size_t> ids;
    std::vector<double> logp;
    std::vector<double> mem;
    std::size_t low = 0, high = 0;
    for (std::size_t k = pos; k < pos + size; ++k) {
      const auto& rec = sorted[k];
      ids.push_back(rec.example_id);
      logp.push_back(rec.log_density);
      if (!memorization.empty()) mem.push_back(memorization[rec.example_id]);
      if (auto it = class_group.find(rec.class_id); it != class_group.end()) {
        (it->second == 0 ? low : high) += 1;
      }
    }
    pos += size;
    BinSummary summary;
    summary.count = size;
    const auto ls = mean_std(logp);
    summary.mean_log_density = ls.mean;
    summary.std_log_density = ls.std;
    if (!mem.empty()) {
      const auto ms = mean_std(mem);
      summary.mean_memorization = ms.mean;
      summary.std_memorization = ms.std;
    }
    summary.low_fraction = static_cast<double>(low) / static_cast<double>(size);
    summary.high_fraction = static_cast<double>(high) / static_cast<double>(size);
    out.bins.push_back(std::move(ids));
    out.summaries.push_back(summary);
  }
  return out;
}

KLMatrix between_class_kl_matrix(const ClassModels& models, const KLConfig& config, std::size_t min_class_size,
                                 std::size_t threads) {
  config.validate();
  KLMatrix out;
  std::vector<const PredictiveModel*> eligible;
  for (const auto& [label, model] : models) {
    if (model.data_size() >= min_class_size) {
      out.classes.push_back(label);
      eligible.push_back(&model);
    }
  }
  const std::size_t k = eligible.size();
  if (k < 2) {
    throw InsufficientDataError("between_class_kl_matrix needs at least 2 classes with >= " +
                                std::to_string(min_class_size) + " rows");
  }
  out.estimate = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(k));
  out.std_error = out.estimate;

  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t job = next++; job < k * k; job = next++) {
      const std::size_t i = job / k;
      const std::size_t j = job % k;
      KLConfig pair_config = config;
      pair_config.seed = derive_seed(config.seed, job);
      const auto kl = kl_between_predictives(*eligible[i], *eligible[j], pair_config);
      out.estimate(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = kl.estimate;
      out.std_error(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = kl.std_error;
    }
  };
  const std::size_t workers = std::max<std::size_t>(1, std::min(threads, k * k));
  if (workers == 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(worker);
  }

  std::vector<double> off;
  for (std::size_t i = 0; i < k; ++i) {
    for (std::size_t j = 0; j < k; ++j) {
      if (i != j) off.push_back(out.estimate(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)));
    }
  }
  const auto stats = mean_std(off);
  out.off_diagonal_mean = stats.mean;
  out.off_diagonal_std = stats.std;
  return out;
}

FScores macro_f_score(std::span<const int> truth, std::span<const int> predicted,
                      std::optional<int> ignore_label) {
  if (truth.size() != predicted.size()) throw ParameterError("macro_f_score: length mismatch");
  std::set<int> labels(truth.begin(), truth.end());
  labels.insert(predicted.begin(), predicted.end());
  if (ignore_label) labels.erase(*ignore_label);
  FScores out;
  if (labels.empty()) return out;
  for (int label : labels) {
    std::size_t tp = 0, fp = 0, fn = 0;
    for (std::size_t i = 0; i < truth.size(); ++i) {
      const bool t = truth[i] == label;
      const bool p = predicted[i] == label;
      tp += (t && p) ? 1 : 0;
      fp += (!t && p) ? 1 : 0;
      fn += (t && !p) ? 1 : 0;
    }
    const double f = static_cast<double>(2 * tp) / static_cast<double>(2 * tp + fp + fn);
    out.per_class[label] = f;
    out.macro += f;
  }
  out.macro /= static_cast<double>(labels.size());
  return out;
}

std::map<std::uint32_t, double> empirical_class_priors(std::span<const std::uint32_t> labels) {
  std::map<std::uint32_t, double> priors;
  for (auto label : labels) priors[label] += 1.0;
  for (auto& [label, p] : priors) p /= static_cast<double>(labels.size());
  return priors;
}

Classification generative_classify(const ClassModels& models, const std::map<std::uint32_t, double>& priors,
                                   const Eigen::Ref<const Eigen::MatrixXd>& queries,
                                   std::span<const std::uint32_t> truth) {
  double total = 0.0;
  for (const auto& [label, p] : priors) {
    if (p < 0.0) throw ParameterError("class priors must be non-negative");
    if (p > 0.0 && models.find(label) == models.end()) {
      throw ConfigurationError("class " + std::to_string(label) + " has a prior but no model");
    }
    total += p;
  }
  if (std::abs(total - 1.0) > 1e-9) throw ParameterError("class priors must sum to 1");
  for (const auto& [label, model] : models) {
    if (static_cast<Eigen::Index>(model.dim()) != queries.cols()) {
      throw ParameterError("query dimension " + std::to_string(queries.cols()) + " does not match class " +
                           std::to_string(label) + " model dimension " + std::to_string(model.dim()));
    }
  }
  if (!truth.empty() && truth.size() != static_cast<std::size_t>(queries.rows())) {
    throw ParameterError("truth length does not match query count");
  }

  Classification out;
  out.predicted.reserve(static_cast<std::size_t>(queries.rows()));
  for (Eigen::Index i = 0; i < queries.rows(); ++i) {
    double best = -std::numeric_limits<double>::infinity();
    std::uint32_t best_label = priors.empty() ? 0 : priors.begin()->first;
    bool found = false;
    for (const auto& [label, p] : priors) {  // ascending id, strict > keeps the smallest on ties
      if (p <= 0.0) continue;
      const double score = posterior_predictive_logpdf(models.at(label), queries.row(i).transpose()) + std::log(p);
      if (!found || score > best) {
        best = score;
        best_label = label;
        found = true;
      }
    }
    out.predicted.push_back(best_label);
  }
  if (!truth.empty()) {
    std::vector<int> t(truth.begin(), truth.end());
    std::vector<int> p(out.predicted.begin(), out.predicted.end());
    out.scores = macro_f_score(t, p);
  }
  return out;
}

MemorizationSubsets select_memorization_subsets(std::span<const double> scores,
                                                std::span<const std::uint32_t> labels, double threshold,
                                                std::size_t min_class_size, std::uint64_t seed) {
  if (scores.size() != labels.size()) throw ParameterError("scores and labels must be aligned");
  MemorizationSubsets out;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (scores[i] > threshold) out.memorized.push_back(i);
  }
  if (out.memorized.empty()) {
    throw EmptySubsetError("no example has a memorization score above " + std::to_string(threshold));
  }
  const std::size_t count = out.memorized.size();

  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  out.least_memorized.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(count));
  std::sort(out.least_memorized.begin(), out.least_memorized.end());

  std::vector<std::size_t> all(scores.size());
  std::iota(all.begin(), all.end(), std::size_t{0});
  Rng rng = make_rng(seed);
  std::sample(all.begin(), all.end(), std::back_inserter(out.random), count, rng);

  std::map<std::uint32_t, std::array<std::size_t, 3>> per_class;
  for (auto i : out.memorized) per_class[labels[i]][0]++;
  for (auto i : out.least_memorized) per_class[labels[i]][1]++;
  for (auto i : out.random) per_class[labels[i]][2]++;
  for (const auto& [label, counts] : per_class) {
    if (counts[0] >= min_class_size && counts[1] >= min_class_size && counts[2] >= min_class_size) {
      out.retained_classes.push_back(label);
    }
  }
  return out;
}

}  // namespace repdensity
