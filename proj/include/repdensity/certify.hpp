#pragma once

// Randomized-smoothing certification statistics against a black-box
// classifier: Monte-Carlo top-class selection, one-sided Clopper-Pearson
// bound, abstention and the certified L2 radius.

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "repdensity/random.hpp"

namespace repdensity {

struct CertifyConfig {
  double sigma = 0.5;
  std::size_t n0 = 100;
  std::size_t n = 100000;
  double alpha = 0.001;
  std::uint64_t seed = 0;
  std::size_t batch_size = 1000;

  void validate() const;
};

/// Either an abstention or a prediction with certified radius.
struct CertifyOutcome {
  bool abstain = true;
  int predicted = -1;
  double radius = 0.0;
  double p_lower = 0.0;  ///< reported for abstentions too

  static CertifyOutcome abstention(double p_lower) { return {true, -1, 0.0, p_lower}; }
};

/// Classifies each row of a batch of noisy inputs. Failures should throw;
/// they are rethrown to the caller as EvaluationError.
using BatchClassifier = std::function<std::vector<int>(const Eigen::MatrixXd& batch)>;

/// Regularized incomplete beta I_x(a, b).
double regularized_beta(double x, double a, double b);

/// Exact one-sided lower bound: the alpha-quantile of Beta(k, n - k + 1),
/// found by bisection to 1e-12; 0 when k = 0.
double clopper_pearson_lower(std::size_t successes, std::size_t trials, double alpha);

/// Standard normal quantile: rational approximation plus Newton refinement.
double normal_quantile(double p);

/// Standard normal CDF.
double normal_cdf(double x);

/// Abstains unless p_lower > 1/2; otherwise radius sigma * Phi^-1(p_lower).
CertifyOutcome certification_decision(int predicted, double p_lower, double sigma);

CertifyOutcome certify(const BatchClassifier& classifier, const Eigen::Ref<const Eigen::VectorXd>& x,
                       const CertifyConfig& config, Rng& rng);

/// Counts of each predicted class over `count` noisy copies of x.
std::vector<std::size_t> sample_noise_counts(const BatchClassifier& classifier,
                                             const Eigen::Ref<const Eigen::VectorXd>& x, std::size_t count,
                                             const CertifyConfig& config, Rng& rng);

struct LabelledOutcome {
  std::size_t bin = 0;
  int truth = 0;
  CertifyOutcome outcome;
};

struct CertificationBinRow {
  std::size_t bin = 0;
  std::size_t count = 0;
  std::size_t certified = 0;
  double classification_rate = 0.0;
  std::optional<double> mean_radius;  ///< over non-abstained outcomes
  std::optional<double> std_radius;
  std::optional<double> f_score_abstain_as_error;
  std::optional<double> f_score_certified_only;
};

/// One row per bin in [0, bin_count); empty bins carry null statistics.
std::vector<CertificationBinRow> certification_report(std::span<const LabelledOutcome> outcomes,
                                                      std::size_t bin_count);

}  // namespace repdensity
