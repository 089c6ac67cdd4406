#pragma once

// Normal-Inverse-Wishart conjugate analytics: posterior updates, incremental
// sufficient statistics with a maintained Cholesky factor of the posterior
// scale, and the multivariate Student-t posterior predictive.

#include <cstddef>

#include <Eigen/Cholesky>
#include <Eigen/Core>

#include "repdensity/random.hpp"

namespace repdensity {

/// NIW hyperparameters (mu0, kappa0, nu0, psi0).
struct NIWParams {
  Eigen::VectorXd mu0;
  double kappa0 = 1.0;
  double nu0 = 1.0;
  Eigen::MatrixXd psi0;

  std::size_t dim() const { return static_cast<std::size_t>(mu0.size()); }

  /// Throws ParameterError unless kappa0 > 0, nu0 > d - 1 and psi0 is
  /// symmetric positive definite.
  void validate() const;
};

/// Batch conjugate update over the rows of `observations`.
NIWParams posterior_update(const NIWParams& prior, const Eigen::Ref<const Eigen::MatrixXd>& observations);

/// Sufficient statistics of one mixture component. Stores the count, the
/// running sum and the lower Cholesky factor of the posterior scale matrix
/// Psi_n, which is kept current with rank-1 updates and downdates.
class ComponentStats {
 public:
  /// Empty component; its posterior is the prior.
  explicit ComponentStats(const NIWParams& prior);

  /// Batch construction from scratch (used for initialisation and as the
  /// fallback when a downdate loses positive definiteness).
  static ComponentStats from_rows(const NIWParams& prior, const Eigen::Ref<const Eigen::MatrixXd>& rows);

  std::size_t count() const { return count_; }
  const Eigen::VectorXd& sum() const { return sum_; }
  double log_det_psi() const { return log_det_; }
  std::size_t dim() const { return static_cast<std::size_t>(sum_.size()); }

  Eigen::MatrixXd chol_psi() const { return chol_.matrixL(); }
  Eigen::MatrixXd psi() const { return chol_.reconstructedMatrix(); }

  double kappa(const NIWParams& prior) const { return prior.kappa0 + static_cast<double>(count_); }
  double nu(const NIWParams& prior) const { return prior.nu0 + static_cast<double>(count_); }
  Eigen::VectorXd mean(const NIWParams& prior) const;

  /// Posterior NIW parameters implied by these statistics.
  NIWParams posterior(const NIWParams& prior) const;

  /// Rank-1 update. Throws ValidationError for non-finite input.
  void add(const Eigen::Ref<const Eigen::VectorXd>& x, const NIWParams& prior);

  /// Rank-1 downdate. Throws UnderflowError when empty and NumericalError
  /// when the downdated factor is not positive definite; in both cases the
  /// statistics are left unchanged.
  void remove(const Eigen::Ref<const Eigen::VectorXd>& x, const NIWParams& prior);

  /// Relative Frobenius distance between the maintained L L^T and a batch
  /// recomputation of Psi_n over `rows` (which must be this component's
  /// members).
  double drift_from(const NIWParams& prior, const Eigen::Ref<const Eigen::MatrixXd>& rows) const;

 private:
  void refresh_log_det();

  std::size_t count_ = 0;
  Eigen::VectorXd sum_;
  Eigen::LLT<Eigen::MatrixXd> chol_;
  double log_det_ = 0.0;
};

ComponentStats add_observation(ComponentStats stats, const Eigen::Ref<const Eigen::VectorXd>& x,
                               const NIWParams& prior);
ComponentStats remove_observation(ComponentStats stats, const Eigen::Ref<const Eigen::VectorXd>& x,
                                  const NIWParams& prior);

/// Multivariate Student-t with location, lower Cholesky factor of the scale
/// matrix, and real-valued degrees of freedom.
class StudentT {
 public:
  StudentT() = default;
  StudentT(Eigen::VectorXd location, Eigen::MatrixXd scale_chol, double dof);

  double dof() const { return dof_; }
  const Eigen::VectorXd& location() const { return location_; }
  const Eigen::MatrixXd& scale_chol() const { return scale_chol_; }
  std::size_t dim() const { return static_cast<std::size_t>(location_.size()); }

  double log_pdf(const Eigen::Ref<const Eigen::VectorXd>& x) const;
  /// Same as log_pdf but reuses caller-owned scratch storage of size dim().
  double log_pdf(const Eigen::Ref<const Eigen::VectorXd>& x, Eigen::VectorXd& scratch) const;

  /// Gaussian draw scaled by sqrt(dof / chi2(dof)).
  Eigen::VectorXd sample(Rng& rng) const;

 private:
  Eigen::VectorXd location_;
  Eigen::MatrixXd scale_chol_;
  double dof_ = 1.0;
  double log_norm_ = 0.0;
};

/// Posterior predictive of a component: Student-t with dof nu_n - d + 1,
/// location mu_n and scale Psi_n (kappa_n + 1) / (kappa_n (nu_n - d + 1)).
StudentT predictive_distribution(const ComponentStats& stats, const NIWParams& prior);

double log_predictive(const ComponentStats& stats, const NIWParams& prior,
                      const Eigen::Ref<const Eigen::VectorXd>& x);

Eigen::VectorXd sample_predictive(const ComponentStats& stats, const NIWParams& prior, Rng& rng);

}  // namespace repdensity
