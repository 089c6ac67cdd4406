#pragma once

// Synthetic Gaussian-mixture generators with exact log-densities, used to
// produce representation files with a known ground truth.

#include <cstdint>
#include <vector>

#include <Eigen/Core>

#include "repdensity/random.hpp"
#include "repdensity/representation.hpp"

namespace repdensity {

class GaussianMixture {
 public:
  /// Weights are normalised; covariances must be positive definite.
  GaussianMixture(std::vector<double> weights, std::vector<Eigen::VectorXd> means,
                  std::vector<Eigen::MatrixXd> covariances);

  static GaussianMixture single(Eigen::VectorXd mean, Eigen::MatrixXd covariance);

  std::size_t dim() const { return static_cast<std::size_t>(means_.front().size()); }
  std::size_t components() const { return weights_.size(); }
  const std::vector<Eigen::VectorXd>& means() const { return means_; }
  const std::vector<double>& weights() const { return weights_; }

  double log_pdf(const Eigen::Ref<const Eigen::VectorXd>& x) const;
  Eigen::VectorXd log_pdf_rows(const Eigen::Ref<const Eigen::MatrixXd>& rows) const;

  Eigen::MatrixXd sample(std::size_t count, Rng& rng) const;
  /// Overall covariance (within plus between components).
  Eigen::MatrixXd covariance() const;
  Eigen::VectorXd mean() const;

 private:
  std::vector<double> weights_;
  std::vector<Eigen::VectorXd> means_;
  std::vector<Eigen::MatrixXd> covariances_;
  std::vector<Eigen::MatrixXd> chols_;
  std::vector<double> log_norms_;
};

/// Labelled dataset with `per_class` rows from each mixture, class ids 0..k-1.
RepresentationDataset sample_labelled(const std::vector<GaussianMixture>& classes, std::size_t per_class,
                                      Rng& rng, const std::string& stage = "synthetic");

/// Eight-component mixture in d >= 3 dimensions with means on the vertices
/// of a cube of half-width sqrt(spread) in the first three coordinates and
/// within-component variance 1 - spread there, so every coordinate has total
/// variance 1 (the same as N(offset, I)). Requires 0 < spread < 1.
GaussianMixture cube_mixture(std::size_t d, double spread, const Eigen::VectorXd& offset);

}  // namespace repdensity
