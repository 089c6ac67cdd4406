#include "repdensity/certify.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <random>
#include <string>

#include <boost/math/special_functions/beta.hpp>

#include "repdensity/class_analysis.hpp"
#include "repdensity/errors.hpp"

namespace repdensity {

void CertifyConfig::validate() const {
  if (!(sigma > 0.0)) throw ParameterError("sigma must be positive");
  if (n0 < 1) throw ParameterError("n0 must be at least 1");
  if (n < 1) throw ParameterError("n must be at least 1");
  if (!(alpha > 0.0 && alpha < 1.0)) throw ParameterError("alpha must lie in (0, 1)");
  if (batch_size < 1) throw ParameterError("batch_size must be at least 1");
}

double regularized_beta(double x, double a, double b) {
  if (x <= 0.0) return 0.0;
  if (x >= 1.0) return 1.0;
  return boost::math::ibeta(a, b, x);
}

double clopper_pearson_lower(std::size_t successes, std::size_t trials, double alpha) {
  if (trials < 1 || successes > trials) {
    throw ParameterError("clopper_pearson_lower requires 0 <= k <= n and n >= 1");
  }
  if (!(alpha > 0.0 && alpha < 1.0)) throw ParameterError("alpha must lie in (0, 1)");
  if (successes == 0) return 0.0;
  const double a = static_cast<double>(successes);
  const double b = static_cast<double>(trials - successes) + 1.0;
  // I_p(k, n - k + 1) = P[Binomial(n, p) >= k], increasing in p.
  double lo = 0.0;
  double hi = 1.0;
  while (hi - lo > 1e-12) {
    const double mid = 0.5 * (lo + hi);
    if (regularized_beta(mid, a, b) < alpha) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  return 0.5 * (lo + hi);
}

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

double normal_quantile(double p) {
  if (!(p > 0.0 && p < 1.0)) {
    if (p == 0.0) return -std::numeric_limits<double>::infinity();
    if (p == 1.0) return std::numeric_limits<double>::infinity();
    throw ParameterError("normal_quantile: probability outside [0, 1]");
  }
  // Acklam's rational approximation (relative error ~1e-9).
  static constexpr double a[] = {-3.969683028665376e+01, 2.209460984245205e+02, -2.759285104469687e+02,
                                 1.383577518672690e+02,  -3.066479806614716e+01, 2.506628277459239e+00};
  static constexpr double b[] = {-5.447609879822406e+01, 1.615858368580409e+02, -1.556989798598866e+02,
                                 6.680131188771972e+01,  -1.328068155288572e+01};
  static constexpr double c[] = {-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e+00,
                                 -2.549732539343734e+00, 4.374664141464968e+00,  2.938163982698783e+00};
  static constexpr double d[] = {7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e+00,
                                 3.754408661907416e+00};
  constexpr double p_low = 0.02425;
  const double q_upper = 1.0 - p;  // exact for p >= 0.5
  double x;
  if (p < p_low) {
    const double q = std::sqrt(-2.0 * std::log(p));
    x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  } else if (p <= 1.0 - p_low) {
    const double q = p - 0.5;
    const double r = q * q;
    x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
        (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
  } else {
    const double q = std::sqrt(-2.0 * std::log(q_upper));
    x = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  }
  // Newton refinement; the residual uses the tail on the side of p that is
  // represented exactly.
  for (int step = 0; step < 2; ++step) {
    const double density = std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi);
    const double residual = p < 0.5 ? 0.5 * std::erfc(-x / std::numbers::sqrt2) - p
                                    : q_upper - 0.5 * std::erfc(x / std::numbers::sqrt2);
    x -= residual / density;
  }
  return x;
}

std::vector<std::size_t> sample_noise_counts(const BatchClassifier& classifier,
                                             const Eigen::Ref<const Eigen::VectorXd>& x, std::size_t count,
                                             const CertifyConfig& config, Rng& rng) {
  std::normal_distribution<double> noise(0.0, config.sigma);
  std::vector<std::size_t> counts;
  Eigen::MatrixXd batch;
  for (std::size_t done = 0; done < count;) {
    const std::size_t size = std::min(config.batch_size, count - done);
    batch.resize(static_cast<Eigen::Index>(size), x.size());
    for (Eigen::Index i = 0; i < batch.rows(); ++i) {
      for (Eigen::Index j = 0; j < batch.cols(); ++j) batch(i, j) = x[j] + noise(rng);
    }
    std::vector<int> labels;
    try {
      labels = classifier(batch);
    } catch (const EvaluationError&) {
      throw;
    } catch (const std::exception& e) {
      throw EvaluationError(std::string("classifier failed: ") + e.what());
    }
    if (labels.size() != size) {
      throw EvaluationError("classifier returned " + std::to_string(labels.size()) + " labels for a batch of " +
                            std::to_string(size));
    }
    for (int label : labels) {
      if (label < 0) throw EvaluationError("classifier returned a negative class id");
      if (static_cast<std::size_t>(label) >= counts.size()) counts.resize(static_cast<std::size_t>(label) + 1, 0);
      ++counts[static_cast<std::size_t>(label)];
    }
    done += size;
  }
  return counts;
}

CertifyOutcome certification_decision(int predicted, double p_lower, double sigma) {
  if (!(p_lower > 0.5)) return CertifyOutcome::abstention(p_lower);
  return CertifyOutcome{false, predicted, sigma * normal_quantile(p_lower), p_lower};
}

CertifyOutcome certify(const BatchClassifier& classifier, const Eigen::Ref<const Eigen::VectorXd>& x,
                       const CertifyConfig& config, Rng& rng) {
  config.validate();
  const auto selection = sample_noise_counts(classifier, x, config.n0, config, rng);
  const auto top = static_cast<std::size_t>(
      std::distance(selection.begin(), std::max_element(selection.begin(), selection.end())));
  const auto estimation = sample_noise_counts(classifier, x, config.n, config, rng);
  const std::size_t k = top < estimation.size() ? estimation[top] : 0;
  return certification_decision(static_cast<int>(top), clopper_pearson_lower(k, config.n, config.alpha),
                                config.sigma);
}

std::vector<CertificationBinRow> certification_report(std::span<const LabelledOutcome> outcomes,
                                                      std::size_t bin_count) {
  std::vector<CertificationBinRow> rows(bin_count);
  std::vector<std::vector<const LabelledOutcome*>> members(bin_count);
  for (const auto& item : outcomes) {
    if (item.bin >= bin_count) throw ParameterError("outcome bin " + std::to_string(item.bin) + " out of range");
    members[item.bin].push_back(&item);
  }
  for (std::size_t b = 0; b < bin_count; ++b) {
    auto& row = rows[b];
    row.bin = b;
    row.count = members[b].size();
    if (row.count == 0) continue;
    std::vector<double> radii;
    std::vector<int> truth_all, pred_all, truth_cert, pred_cert;
    for (const auto* item : members[b]) {
      truth_all.push_back(item->truth);
      pred_all.push_back(item->outcome.abstain ? -1 : item->outcome.predicted);
      if (!item->outcome.abstain) {
        radii.push_back(item->outcome.radius);
        truth_cert.push_back(item->truth);
        pred_cert.push_back(item->outcome.predicted);
      }
    }
    row.certified = radii.size();
    row.classification_rate = static_cast<double>(row.certified) / static_cast<double>(row.count);
    row.f_score_abstain_as_error = macro_f_score(truth_all, pred_all, -1).macro;
    if (!radii.empty()) {
      double mean = 0.0;
      for (double r : radii) mean += r;
      mean /= static_cast<double>(radii.size());
      double ss = 0.0;
      for (double r : radii) ss += (r - mean) * (r - mean);
      row.mean_radius = mean;
      row.std_radius = std::sqrt(ss / static_cast<double>(radii.size()));
      row.f_score_certified_only = macro_f_score(truth_cert, pred_cert).macro;
    }
  }
  return rows;
}

}  // namespace repdensity
