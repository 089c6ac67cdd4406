#pragma once

// Monte-Carlo posterior predictive built from retained chain snapshots, and
// KL-divergence estimates against tractable references.

#include <cstdint>
#include <functional>
#include <memory>
#include <vector>

#include <Eigen/Core>

#include "repdensity/dpmm.hpp"
#include "repdensity/niw.hpp"
#include "repdensity/random.hpp"

namespace repdensity {

/// One term of a snapshot-conditional mixture.
struct MixtureTerm {
  double log_weight = 0.0;
  std::size_t count = 0;  ///< 0 for the new-component term
  StudentT density;
};

/// p(x | D, c_t): existing components weighted n_k / (n + alpha) and the
/// prior predictive weighted alpha / (n + alpha).
struct SnapshotMixture {
  double alpha = 1.0;
  std::vector<MixtureTerm> terms;  ///< existing components, then the new-component term last

  double log_pdf(const Eigen::Ref<const Eigen::VectorXd>& x, Eigen::VectorXd& scratch,
                 std::vector<double>& buffer) const;
  Eigen::VectorXd sample(Rng& rng) const;
};

class PredictiveModel {
 public:
  /// Rebuilds per-snapshot component statistics from `data`. Throws
  /// ParameterError for an empty snapshot list or mismatched sizes.
  PredictiveModel(Eigen::MatrixXd data, NIWParams prior, std::vector<Snapshot> snapshots);

  std::size_t snapshot_count() const { return mixtures_.size(); }
  std::size_t dim() const { return prior_.dim(); }
  std::size_t data_size() const { return static_cast<std::size_t>(data_->rows()); }
  const Eigen::MatrixXd& data() const { return *data_; }
  const NIWParams& prior() const { return prior_; }
  const std::vector<Snapshot>& snapshots() const { return snapshots_; }
  const SnapshotMixture& mixture(std::size_t t) const { return mixtures_.at(t); }

 private:
  std::shared_ptr<const Eigen::MatrixXd> data_;
  NIWParams prior_;
  std::vector<Snapshot> snapshots_;
  std::vector<SnapshotMixture> mixtures_;
};

/// Runs the sampler on `data` and wraps the retained snapshots.
PredictiveModel fit_predictive_model(const Eigen::MatrixXd& data, const NIWParams& prior,
                                     const SamplerConfig& config);

double conditional_predictive_logpdf(const PredictiveModel& model, std::size_t t,
                                     const Eigen::Ref<const Eigen::VectorXd>& x);

/// Log-mean-exp over snapshots of the conditional predictive.
double posterior_predictive_logpdf(const PredictiveModel& model, const Eigen::Ref<const Eigen::VectorXd>& x);

/// Row-wise posterior_predictive_logpdf.
Eigen::VectorXd posterior_predictive_logpdf_rows(const PredictiveModel& model,
                                                 const Eigen::Ref<const Eigen::MatrixXd>& rows);

struct PredictiveDraws {
  Eigen::MatrixXd draws;            ///< count x d
  std::vector<std::size_t> snapshot;  ///< source snapshot of each draw
};

/// Draws stratified across snapshots: count / T each, the first count % T
/// snapshots receive one extra draw.
PredictiveDraws sample_posterior_predictive(const PredictiveModel& model, std::size_t count, Rng& rng);

struct DiagonalGaussian {
  Eigen::VectorXd mean;
  Eigen::VectorXd variances;

  double log_pdf(const Eigen::Ref<const Eigen::VectorXd>& x) const;
};

/// Column means and population variances (floored at 1e-12).
DiagonalGaussian max_entropy_reference(const Eigen::Ref<const Eigen::MatrixXd>& data);

struct KLConfig {
  std::size_t samples_per_snapshot = 1024;
  std::uint64_t seed = 0;

  void validate() const;
};

struct KLEstimate {
  double estimate = 0.0;  ///< nats
  double std_error = 0.0; ///< Monte-Carlo standard error
  std::size_t snapshots = 0;
  std::size_t samples_per_snapshot = 0;
  std::size_t nonfinite = 0;  ///< samples where the reference returned -inf
};

using LogDensity = std::function<double(const Eigen::VectorXd&)>;

/// (1 / Tm) sum_t sum_s [log p(x_st | D, c_t) - log q(x_st)], with x_st drawn
/// from the t-th conditional predictive. The first term is the
/// snapshot-conditional density, not the snapshot average.
KLEstimate kl_to_reference(const PredictiveModel& model, const LogDensity& reference, const KLConfig& config);

/// kl_to_reference with the reference set to q_model's posterior predictive.
KLEstimate kl_between_predictives(const PredictiveModel& p_model, const PredictiveModel& q_model,
                                  const KLConfig& config);

}  // namespace repdensity
