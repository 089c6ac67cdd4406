#pragma once

// Analyses over per-class predictive models: class log-density statistics,
// low/high density groups, memorization aggregation and binning,
// between-class KL matrices and generative classification.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "repdensity/predictive.hpp"
#include "repdensity/representation.hpp"

namespace repdensity {

using ClassModels = std::map<std::uint32_t, PredictiveModel>;

struct ExampleDensity {
  std::size_t example_id = 0;
  std::uint32_t class_id = 0;
  double log_density = 0.0;
};

struct ClassDensityStat {
  std::uint32_t class_id = 0;
  std::size_t count = 0;
  double mean = 0.0;
  double std = 0.0;  ///< population form
};

struct ClassDensityReport {
  std::vector<ClassDensityStat> classes;  ///< ascending by mean
  std::vector<ExampleDensity> records;    ///< one per example, ordered by example id
};

/// Log-density of every row of `data` under its own class model.
/// Throws ConfigurationError if a class has no model.
ClassDensityReport class_log_density_stats(const ClassModels& models, const RepresentationDataset& data);

struct DensityGroups {
  std::vector<int> group;  ///< per input class mean: 0 low, 1 high
  double threshold = 0.0;  ///< midpoint of the boundary pair
  double separation = 0.0; ///< between / within variance of the split
  bool unimodal = false;   ///< all means equal; everything in group 0

  bool bimodal(double min_separation = 1.0) const { return !unimodal && separation >= min_separation; }
};

/// Exact 1-D two-means over class mean log-densities.
DensityGroups detect_density_groups(std::span<const double> class_means);

struct TrialRecord {
  std::vector<bool> included;
  std::vector<bool> correct;
};

struct TrialRecords {
  std::size_t example_count = 0;
  std::vector<TrialRecord> trials;

  void validate() const;
};

void write_trial_records(const TrialRecords& records, std::ostream& out);
void write_trial_records(const TrialRecords& records, const std::filesystem::path& path);
TrialRecords read_trial_records(std::istream& in, const std::string& source = "<stream>");
TrialRecords load_trial_records(const std::filesystem::path& path);

/// P[correct | included] - P[correct | excluded] per example.
/// Throws UndefinedScoreError naming examples never included or never excluded.
std::vector<double> memorization_from_trials(const TrialRecords& records);

struct BinSummary {
  std::size_t count = 0;
  double mean_log_density = 0.0;
  double std_log_density = 0.0;
  std::optional<double> mean_memorization;
  std::optional<double> std_memorization;
  double low_fraction = 0.0;
  double high_fraction = 0.0;
};

struct DensityBinning {
  std::vector<std::vector<std::size_t>> bins;  ///< example ids, ascending log-density
  std::vector<BinSummary> summaries;
};

/// Sorts records by log-density (ties by example id) and cuts them into
/// `bin_count` contiguous bins, the first n % bin_count bins one larger.
/// `memorization` is indexed by example id and may be empty; `class_group`
/// maps class id to 0 (low) / 1 (high) and may be empty.
DensityBinning density_bins(const ClassDensityReport& report, std::span<const double> memorization,
                            const std::map<std::uint32_t, int>& class_group, std::size_t bin_count = 50);

struct KLMatrix {
  std::vector<std::uint32_t> classes;
  Eigen::MatrixXd estimate;  ///< (from, to)
  Eigen::MatrixXd std_error;
  double off_diagonal_mean = 0.0;
  double off_diagonal_std = 0.0;
};

/// KL between every ordered pair of classes with at least `min_class_size`
/// training rows, diagonal included. Pair (i, j) uses its own seeded stream.
/// Throws InsufficientDataError with fewer than two eligible classes.
KLMatrix between_class_kl_matrix(const ClassModels& models, const KLConfig& config,
                                 std::size_t min_class_size = 100, std::size_t threads = 1);

struct FScores {
  std::map<int, double> per_class;
  double macro = 0.0;
};

/// Macro F1 over the union of true and predicted labels. A prediction equal
/// to `ignore_label` (e.g. an abstention) counts as a miss but is not itself
/// a class.
FScores macro_f_score(std::span<const int> truth, std::span<const int> predicted,
                      std::optional<int> ignore_label = std::nullopt);

struct Classification {
  std::vector<std::uint32_t> predicted;
  std::optional<FScores> scores;
};

/// Empirical class frequencies.
std::map<std::uint32_t, double> empirical_class_priors(std::span<const std::uint32_t> labels);

/// argmax_c log p(x | c) + log p(c); ties go to the smallest class id.
Classification generative_classify(const ClassModels& models, const std::map<std::uint32_t, double>& priors,
                                   const Eigen::Ref<const Eigen::MatrixXd>& queries,
                                   std::span<const std::uint32_t> truth = {});

struct MemorizationSubsets {
  std::vector<std::size_t> memorized;
  std::vector<std::size_t> least_memorized;
  std::vector<std::size_t> random;
  std::vector<std::uint32_t> retained_classes;
};

/// memorized: score > threshold; least: the same count with the lowest
/// scores; random: the same count drawn from all examples with `seed`.
/// A class is retained when each subset holds >= min_class_size of its rows.
MemorizationSubsets select_memorization_subsets(std::span<const double> scores,
                                                std::span<const std::uint32_t> labels, double threshold = 0.9,
                                                std::size_t min_class_size = 100, std::uint64_t seed = 0);

}  // namespace repdensity
