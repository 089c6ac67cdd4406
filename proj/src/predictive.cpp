#include "repdensity/predictive.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numbers>
#include <random>
#include <string>

#include "repdensity/errors.hpp"

namespace repdensity {

namespace {

constexpr double kVarianceFloor = 1e-12;

double log_sum_exp(const std::vector<double>& values) {
  const double top = *std::max_element(values.begin(), values.end());
  if (!std::isfinite(top)) return top;
  double acc = 0.0;
  for (double v : values) acc += std::exp(v - top);
  return top + std::log(acc);
}

SnapshotMixture build_mixture(const Eigen::MatrixXd& data, const NIWParams& prior, const Snapshot& snapshot) {
  if (snapshot.assignments.size() != static_cast<std::size_t>(data.rows())) {
    throw ParameterError("snapshot has " + std::to_string(snapshot.assignments.size()) +
                         " assignments but data has " + std::to_string(data.rows()) + " rows");
  }
  if (!(snapshot.alpha > 0.0)) throw ParameterError("snapshot alpha must be positive");
  std::map<ComponentId, std::vector<Eigen::Index>> members;
  for (std::size_t i = 0; i < snapshot.assignments.size(); ++i) {
    members[snapshot.assignments[i]].push_back(static_cast<Eigen::Index>(i));
  }
  const double n = static_cast<double>(data.rows());
  const double log_total = std::log(n + snapshot.alpha);
  SnapshotMixture mixture;
  mixture.alpha = snapshot.alpha;
  std::size_t counted = 0;
  for (const auto& [id, rows] : members) {
    Eigen::MatrixXd block(static_cast<Eigen::Index>(rows.size()), data.cols());
    for (std::size_t r = 0; r < rows.size(); ++r) block.row(static_cast<Eigen::Index>(r)) = data.row(rows[r]);
    const ComponentStats stats = ComponentStats::from_rows(prior, block);
    mixture.terms.push_back(MixtureTerm{std::log(static_cast<double>(rows.size())) - log_total, rows.size(),
                                        predictive_distribution(stats, prior)});
    counted += rows.size();
  }
  // sum n_k + alpha = n + alpha
  if (counted != snapshot.assignments.size()) throw NumericalError("mixture weights do not normalize");
  mixture.terms.push_back(MixtureTerm{std::log(snapshot.alpha) - log_total, 0,
                                      predictive_distribution(ComponentStats(prior), prior)});
  return mixture;
}

}  // namespace

double SnapshotMixture::log_pdf(const Eigen::Ref<const Eigen::VectorXd>& x, Eigen::VectorXd& scratch,
                                std::vector<double>& buffer) const {
  buffer.resize(terms.size());
  for (std::size_t k = 0; k < terms.size(); ++k) {
    buffer[k] = terms[k].log_weight + terms[k].density.log_pdf(x, scratch);
  }
  return log_sum_exp(buffer);
}

Eigen::VectorXd SnapshotMixture::sample(Rng& rng) const {
  const double u = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
  double acc = 0.0;
  for (const auto& term : terms) {
    acc += std::exp(term.log_weight);
    if (u < acc) return term.density.sample(rng);
  }
  return terms.back().density.sample(rng);
}

PredictiveModel::PredictiveModel(Eigen::MatrixXd data, NIWParams prior, std::vector<Snapshot> snapshots)
    : data_(std::make_shared<const Eigen::MatrixXd>(std::move(data))),
      prior_(std::move(prior)),
      snapshots_(std::move(snapshots)) {
  if (snapshots_.empty()) throw ParameterError("a predictive model needs at least one snapshot");
  if (data_->cols() != prior_.mu0.size()) throw ParameterError("data dimension does not match prior");
  mixtures_.reserve(snapshots_.size());
  for (const auto& snap : snapshots_) mixtures_.push_back(build_mixture(*data_, prior_, snap));
}

PredictiveModel fit_predictive_model(const Eigen::MatrixXd& data, const NIWParams& prior,
                                     const SamplerConfig& config) {
  return PredictiveModel(data, prior, run(data, prior, config));
}

double conditional_predictive_logpdf(const PredictiveModel& model, std::size_t t,
                                     const Eigen::Ref<const Eigen::VectorXd>& x) {
  if (static_cast<std::size_t>(x.size()) != model.dim()) throw ParameterError("query dimension mismatch");
  Eigen::VectorXd scratch(x.size());
  std::vector<double> buffer;
  return model.mixture(t).log_pdf(x, scratch, buffer);
}

double posterior_predictive_logpdf(const PredictiveModel& model, const Eigen::Ref<const Eigen::VectorXd>& x) {
  if (static_cast<std::size_t>(x.size()) != model.dim()) throw ParameterError("query dimension mismatch");
  Eigen::VectorXd scratch(x.size());
  std::vector<double> buffer;
  std::vector<double> per_snapshot(model.snapshot_count());
  for (std::size_t t = 0; t < model.snapshot_count(); ++t) {
    per_snapshot[t] = model.mixture(t).log_pdf(x, scratch, buffer);
  }
  return log_sum_exp(per_snapshot) - std::log(static_cast<double>(model.snapshot_count()));
}

Eigen::VectorXd posterior_predictive_logpdf_rows(const PredictiveModel& model,
                                                 const Eigen::Ref<const Eigen::MatrixXd>& rows) {
  Eigen::VectorXd out(rows.rows());
  for (Eigen::Index i = 0; i < rows.rows(); ++i) {
    out[i] = posterior_predictive_logpdf(model, rows.row(i).transpose());
  }
  return out;
}

PredictiveDraws sample_posterior_predictive(const PredictiveModel& model, std::size_t count, Rng& rng) {
  if (count < 1) throw ParameterError("sample_posterior_predictive: count must be positive");
  const std::size_t snapshots = model.snapshot_count();
  PredictiveDraws out;
  out.draws.resize(static_cast<Eigen::Index>(count), static_cast<Eigen::Index>(model.dim()));
  out.snapshot.reserve(count);
  std::size_t row = 0;
  for (std::size_t t = 0; t < snapshots; ++t) {
    const std::size_t quota = count / snapshots + (t < count % snapshots ? 1 : 0);
    for (std::size_t s = 0; s < quota; ++s, ++row) {
      out.draws.row(static_cast<Eigen::Index>(row)) = model.mixture(t).sample(rng).transpose();
      out.snapshot.push_back(t);
    }
  }
  return out;
}

double DiagonalGaussian::log_pdf(const Eigen::Ref<const Eigen::VectorXd>& x) const {
  const auto d = static_cast<double>(mean.size());
  return -0.5 * (d * std::log(2.0 * std::numbers::pi) + variances.array().log().sum() +
                 ((x - mean).array().square() / variances.array()).sum());
}

DiagonalGaussian max_entropy_reference(const Eigen::Ref<const Eigen::MatrixXd>& data) {
  if (data.rows() < 2) throw InsufficientDataError("max_entropy_reference needs at least 2 rows");
  DiagonalGaussian q;
  q.mean = data.colwise().mean().transpose();
  q.variances = ((data.rowwise() - q.mean.transpose()).array().square().colwise().sum() /
                 static_cast<double>(data.rows()))
                    .transpose()
                    .cwiseMax(kVarianceFloor);
  return q;
}

void KLConfig::validate() const {
  if (samples_per_snapshot < 1) throw ParameterError("samples_per_snapshot must be at least 1");
}

KLEstimate kl_to_reference(const PredictiveModel& model, const LogDensity& reference, const KLConfig& config) {
  config.validate();
  Rng rng = make_rng(config.seed);
  Eigen::VectorXd scratch(static_cast<Eigen::Index>(model.dim()));
  std::vector<double> buffer;
  KLEstimate out;
  out.snapshots = model.snapshot_count();
  out.samples_per_snapshot = config.samples_per_snapshot;
  // Welford running mean / variance of the per-sample log ratio.
  double mean = 0.0;
  double m2 = 0.0;
  std::size_t count = 0;
  for (std::size_t t = 0; t < model.snapshot_count(); ++t) {
    const auto& mixture = model.mixture(t);
    for (std::size_t s = 0; s < config.samples_per_snapshot; ++s) {
      const Eigen::VectorXd x = mixture.sample(rng);
      const double log_q = reference(x);
      if (std::isinf(log_q) && log_q < 0.0) {
        ++out.nonfinite;
        continue;
      }
      const double term = mixture.log_pdf(x, scratch, buffer) - log_q;
      ++count;
      const double delta = term - mean;
      mean += delta / static_cast<double>(count);
      m2 += delta * (term - mean);
    }
  }
  if (out.nonfinite > 0) {
    out.estimate = std::numeric_limits<double>::infinity();
    out.std_error = std::numeric_limits<double>::infinity();
    return out;
  }
  out.estimate = mean;
  out.std_error = count > 1 ? std::sqrt(m2 / static_cast<double>(count - 1) / static_cast<double>(count)) : 0.0;
  return out;
}

KLEstimate kl_between_predictives(const PredictiveModel& p_model, const PredictiveModel& q_model,
                                  const KLConfig& config) {
  if (p_model.dim() != q_model.dim()) throw ParameterError("kl_between_predictives: dimension mismatch");
  return kl_to_reference(
      p_model, [&q_model](const Eigen::VectorXd& x) { return posterior_predictive_logpdf(q_model, x); }, config);
}

}  // namespace repdensity
