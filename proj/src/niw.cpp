#include "repdensity/niw.hpp"

#include <cmath>
#include <numbers>
#include <random>
#include <string>

#include "repdensity/errors.hpp"

namespace repdensity {

namespace {

constexpr double kJitter = 1e-9;

void check_dim(const NIWParams& prior, Eigen::Index got, const char* what) {
  if (got != prior.mu0.size()) {
    throw ParameterError(std::string(what) + ": dimension " + std::to_string(got) +
                         " does not match prior dimension " + std::to_string(prior.mu0.size()));
  }
}

// Cholesky of a symmetric matrix; adds 1e-9 I (growing tenfold) on failure.
Eigen::LLT<Eigen::MatrixXd> factorize(const Eigen::MatrixXd& m) {
  Eigen::LLT<Eigen::MatrixXd> llt(m);
  double jitter = kJitter;
  for (int attempt = 0; llt.info() != Eigen::Success && attempt < 12; ++attempt) {
    Eigen::MatrixXd jittered = m;
    jittered.diagonal().array() += jitter;
    llt.compute(jittered);
    jitter *= 10.0;
  }
  if (llt.info() != Eigen::Success) {
    throw NumericalError("posterior scale matrix is not positive definite even after jitter");
  }
  return llt;
}

Eigen::MatrixXd batch_psi(const NIWParams& prior, const Eigen::Ref<const Eigen::MatrixXd>& rows) {
  const auto n = static_cast<double>(rows.rows());
  if (rows.rows() == 0) return prior.psi0;
  const Eigen::VectorXd xbar = rows.colwise().mean().transpose();
  const Eigen::MatrixXd centered = rows.rowwise() - xbar.transpose();
  const double kappa_n = prior.kappa0 + n;
  const Eigen::VectorXd shift = xbar - prior.mu0;
  Eigen::MatrixXd psi = prior.psi0 + centered.transpose() * centered +
                        (prior.kappa0 * n / kappa_n) * shift * shift.transpose();
  return 0.5 * (psi + psi.transpose());
}

}  // namespace

void NIWParams::validate() const {
  const auto d = mu0.size();
  if (!(kappa0 > 0.0)) throw ParameterError("kappa0 must be positive");
  if (!(nu0 > static_cast<double>(d) - 1.0)) throw ParameterError("nu0 must exceed d - 1");
  if (psi0.rows() != d || psi0.cols() != d) throw ParameterError("psi0 must be d x d");
  if (!psi0.allFinite() || !mu0.allFinite()) throw ParameterError("prior contains non-finite values");
  if ((psi0 - psi0.transpose()).cwiseAbs().maxCoeff() > 1e-9 * (1.0 + psi0.cwiseAbs().maxCoeff())) {
    throw ParameterError("psi0 must be symmetric");
  }
  Eigen::LLT<Eigen::MatrixXd> llt(psi0);
  if (llt.info() != Eigen::Success) throw ParameterError("psi0 must be positive definite");
}

NIWParams posterior_update(const NIWParams& prior, const Eigen::Ref<const Eigen::MatrixXd>& observations) {
  if (observations.rows() > 0) check_dim(prior, observations.cols(), "posterior_update");
  const auto n = static_cast<double>(observations.rows());
  NIWParams post;
  post.kappa0 = prior.kappa0 + n;
  post.nu0 = prior.nu0 + n;
  if (observations.rows() == 0) {
    post.mu0 = prior.mu0;
  } else {
    post.mu0 = (prior.kappa0 * prior.mu0 + observations.colwise().sum().transpose()) / post.kappa0;
  }
  post.psi0 = batch_psi(prior, observations);
  return post;
}

ComponentStats::ComponentStats(const NIWParams& prior)
    : sum_(Eigen::VectorXd::Zero(prior.mu0.size())), chol_(factorize(prior.psi0)) {
  refresh_log_det();
}

ComponentStats ComponentStats::from_rows(const NIWParams& prior, const Eigen::Ref<const Eigen::MatrixXd>& rows) {
  ComponentStats stats(prior);
  if (rows.rows() == 0) return stats;
  check_dim(prior, rows.cols(), "ComponentStats::from_rows");
  if (!rows.allFinite()) throw ValidationError("component rows contain non-finite values");
  stats.count_ = static_cast<std::size_t>(rows.rows());
  stats.sum_ = rows.colwise().sum().transpose();
  stats.chol_ = factorize(batch_psi(prior, rows));
  stats.refresh_log_det();
  return stats;
}

Eigen::VectorXd ComponentStats::mean(const NIWParams& prior) const {
  return (prior.kappa0 * prior.mu0 + sum_) / kappa(prior);
}

NIWParams ComponentStats::posterior(const NIWParams& prior) const {
  return NIWParams{mean(prior), kappa(prior), nu(prior), psi()};
}

void ComponentStats::add(const Eigen::Ref<const Eigen::VectorXd>& x, const NIWParams& prior) {
  check_dim(prior, x.size(), "add_observation");
  if (!x.allFinite()) throw ValidationError("add_observation: non-finite observation");
  const double k = kappa(prior);
  const Eigen::VectorXd v = std::sqrt(k / (k + 1.0)) * (x - mean(prior));
  chol_.rankUpdate(v, 1.0);
  if (chol_.info() != Eigen::Success) {
    // An update of a PD factor cannot fail in exact arithmetic; recover from
    // the dense matrix if it does numerically.
    chol_ = factorize(chol_.reconstructedMatrix());
  }
  ++count_;
  sum_ += x;
  refresh_log_det();
}

void ComponentStats::remove(const Eigen::Ref<const Eigen::VectorXd>& x, const NIWParams& prior) {
  check_dim(prior, x.size(), "remove_observation");
  if (count_ == 0) throw UnderflowError("remove_observation on an empty component");
  if (count_ == 1) {
    *this = ComponentStats(prior);
    return;
  }
  const double k = kappa(prior);
  const Eigen::VectorXd v = std::sqrt(k / (k - 1.0)) * (x - mean(prior));
  Eigen::LLT<Eigen::MatrixXd> downdated = chol_;
  downdated.rankUpdate(v, -1.0);
  if (downdated.info() != Eigen::Success || !downdated.matrixLLT().diagonal().allFinite() ||
      (downdated.matrixLLT().diagonal().array() <= 0.0).any()) {
    throw NumericalError("Cholesky downdate lost positive definiteness");
  }
  chol_ = std::move(downdated);
  --count_;
  sum_ -= x;
  refresh_log_det();
}

double ComponentStats::drift_from(const NIWParams& prior, const Eigen::Ref<const Eigen::MatrixXd>& rows) const {
  const Eigen::MatrixXd batch = batch_psi(prior, rows);
  return (psi() - batch).norm() / batch.norm();
}

void ComponentStats::refresh_log_det() {
  log_det_ = 2.0 * chol_.matrixLLT().diagonal().array().log().sum();
}

ComponentStats add_observation(ComponentStats stats, const Eigen::Ref<const Eigen::VectorXd>& x,
                               const NIWParams& prior) {
  stats.add(x, prior);
  return stats;
}

ComponentStats remove_observation(ComponentStats stats, const Eigen::Ref<const Eigen::VectorXd>& x,
                                  const NIWParams& prior) {
  stats.remove(x, prior);
  return stats;
}

StudentT::StudentT(Eigen::VectorXd location, Eigen::MatrixXd scale_chol, double dof)
    : location_(std::move(location)), scale_chol_(std::move(scale_chol)), dof_(dof) {
  const double d = static_cast<double>(location_.size());
  log_norm_ = std::lgamma(0.5 * (dof_ + d)) - std::lgamma(0.5 * dof_) -
              0.5 * d * std::log(dof_ * std::numbers::pi) -
              scale_chol_.diagonal().array().log().sum();
}

double StudentT::log_pdf(const Eigen::Ref<const Eigen::VectorXd>& x) const {
  Eigen::VectorXd scratch(location_.size());
  return log_pdf(x, scratch);
}

double StudentT::log_pdf(const Eigen::Ref<const Eigen::VectorXd>& x, Eigen::VectorXd& scratch) const {
  scratch = x - location_;
  scale_chol_.triangularView<Eigen::Lower>().solveInPlace(scratch);
  const double d = static_cast<double>(location_.size());
  return log_norm_ - 0.5 * (dof_ + d) * std::log1p(scratch.squaredNorm() / dof_);
}

Eigen::VectorXd StudentT::sample(Rng& rng) const {
  std::normal_distribution<double> normal(0.0, 1.0);
  std::gamma_distribution<double> chi2(0.5 * dof_, 2.0);
  Eigen::VectorXd z(location_.size());
  for (Eigen::Index i = 0; i < z.size(); ++i) z[i] = normal(rng);
  const double u = chi2(rng);
  const Eigen::VectorXd shaped = scale_chol_.triangularView<Eigen::Lower>() * z;
  return location_ + std::sqrt(dof_ / u) * shaped;
}

StudentT predictive_distribution(const ComponentStats& stats, const NIWParams& prior) {
  const double d = static_cast<double>(prior.dim());
  const double kappa_n = stats.kappa(prior);
  const double dof = stats.nu(prior) - d + 1.0;
  const double scale = std::sqrt((kappa_n + 1.0) / (kappa_n * dof));
  return StudentT(stats.mean(prior), scale * stats.chol_psi(), dof);
}

double log_predictive(const ComponentStats& stats, const NIWParams& prior,
                      const Eigen::Ref<const Eigen::VectorXd>& x) {
  check_dim(prior, x.size(), "log_predictive");
  return predictive_distribution(stats, prior).log_pdf(x);
}

Eigen::VectorXd sample_predictive(const ComponentStats& stats, const NIWParams& prior, Rng& rng) {
  return predictive_distribution(stats, prior).sample(rng);
}

}  // namespace repdensity
