#include "repdensity/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <random>

#include <Eigen/Cholesky>

#include "repdensity/errors.hpp"

namespace repdensity {

GaussianMixture::GaussianMixture(std::vector<double> weights, std::vector<Eigen::VectorXd> means,
                                 std::vector<Eigen::MatrixXd> covariances)
    : weights_(std::move(weights)), means_(std::move(means)), covariances_(std::move(covariances)) {
  if (weights_.empty() || weights_.size() != means_.size() || weights_.size() != covariances_.size()) {
    throw ParameterError("mixture needs matching, non-empty weights, means and covariances");
  }
  const double total = std::accumulate(weights_.begin(), weights_.end(), 0.0);
  if (!(total > 0.0)) throw ParameterError("mixture weights must have positive sum");
  const auto d = means_.front().size();
  for (std::size_t k = 0; k < weights_.size(); ++k) {
    weights_[k] /= total;
    if (means_[k].size() != d || covariances_[k].rows() != d || covariances_[k].cols() != d) {
      throw ParameterError("mixture component dimensions disagree");
    }
    Eigen::LLT<Eigen::MatrixXd> llt(covariances_[k]);
    if (llt.info() != Eigen::Success) throw ParameterError("mixture covariance not positive definite");
    chols_.push_back(llt.matrixL());
    log_norms_.push_back(-0.5 * static_cast<double>(d) * std::log(2.0 * std::numbers::pi) -
                         chols_.back().diagonal().array().log().sum());
  }
}

GaussianMixture GaussianMixture::single(Eigen::VectorXd mean, Eigen::MatrixXd covariance) {
  return GaussianMixture({1.0}, {std::move(mean)}, {std::move(covariance)});
}

double GaussianMixture::log_pdf(const Eigen::Ref<const Eigen::VectorXd>& x) const {
  std::vector<double> terms(weights_.size());
  for (std::size_t k = 0; k < weights_.size(); ++k) {
    const Eigen::VectorXd z = chols_[k].triangularView<Eigen::Lower>().solve(x - means_[k]);
    terms[k] = std::log(weights_[k]) + log_norms_[k] - 0.5 * z.squaredNorm();
  }
  const double top = *std::max_element(terms.begin(), terms.end());
  double acc = 0.0;
  for (double t : terms) acc += std::exp(t - top);
  return top + std::log(acc);
}

Eigen::VectorXd GaussianMixture::log_pdf_rows(const Eigen::Ref<const Eigen::MatrixXd>& rows) const {
  Eigen::VectorXd out(rows.rows());
  for (Eigen::Index i = 0; i < rows.rows(); ++i) out[i] = log_pdf(rows.row(i).transpose());
  return out;
}

Eigen::MatrixXd GaussianMixture::sample(std::size_t count, Rng& rng) const {
  std::discrete_distribution<std::size_t> pick(weights_.begin(), weights_.end());
  std::normal_distribution<double> normal(0.0, 1.0);
  const auto d = static_cast<Eigen::Index>(dim());
  Eigen::MatrixXd out(static_cast<Eigen::Index>(count), d);
  Eigen::VectorXd z(d);
  for (Eigen::Index i = 0; i < out.rows(); ++i) {
    const std::size_t k = pick(rng);
    for (Eigen::Index j = 0; j < d; ++j) z[j] = normal(rng);
    out.row(i) = (means_[k] + chols_[k] * z).transpose();
  }
  return out;
}

Eigen::VectorXd GaussianMixture::mean() const {
  Eigen::VectorXd m = Eigen::VectorXd::Zero(means_.front().size());
  for (std::size_t k = 0; k < weights_.size(); ++k) m += weights_[k] * means_[k];
  return m;
}

Eigen::MatrixXd GaussianMixture::covariance() const {
  const Eigen::VectorXd m = mean();
  Eigen::MatrixXd cov = Eigen::MatrixXd::Zero(m.size(), m.size());
  for (std::size_t k = 0; k < weights_.size(); ++k) {
    const Eigen::VectorXd delta = means_[k] - m;
    cov += weights_[k] * (covariances_[k] + delta * delta.transpose());
  }
  return cov;
}

RepresentationDataset sample_labelled(const std::vector<GaussianMixture>& classes, std::size_t per_class,
                                      Rng& rng, const std::string& stage) {
  if (classes.empty()) throw ParameterError("sample_labelled needs at least one class");
  RepresentationDataset out;
  out.stage = stage;
  const auto d = static_cast<Eigen::Index>(classes.front().dim());
  out.rows.resize(static_cast<Eigen::Index>(classes.size() * per_class), d);
  for (std::size_t c = 0; c < classes.size(); ++c) {
    out.rows.middleRows(static_cast<Eigen::Index>(c * per_class), static_cast<Eigen::Index>(per_class)) =
        classes[c].sample(per_class, rng);
    out.labels.insert(out.labels.end(), per_class, static_cast<std::uint32_t>(c));
  }
  return out;
}

GaussianMixture cube_mixture(std::size_t d, double spread, const Eigen::VectorXd& offset) {
  if (d < 3) throw ParameterError("cube_mixture needs d >= 3");
  if (!(spread > 0.0 && spread < 1.0)) throw ParameterError("cube_mixture spread must lie in (0, 1)");
  const double half = std::sqrt(spread);
  Eigen::MatrixXd cov = Eigen::MatrixXd::Identity(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(d));
  cov.diagonal().head(3).setConstant(1.0 - spread);
  std::vector<double> weights(8, 1.0);
  std::vector<Eigen::VectorXd> means;
  std::vector<Eigen::MatrixXd> covs(8, cov);
  for (int corner = 0; corner < 8; ++corner) {
    Eigen::VectorXd m = offset;
    for (int axis = 0; axis < 3; ++axis) m[axis] += ((corner >> axis) & 1) ? half : -half;
    means.push_back(m);
  }
  return GaussianMixture(std::move(weights), std::move(means), std::move(covs));
}

}  // namespace repdensity
