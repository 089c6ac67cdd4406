#pragma once

// Representation datasets: binary "REPR" I/O, SVD reduction, per-class
// splitting and the data-derived NIW prior.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "repdensity/niw.hpp"

namespace repdensity {

enum class Precision : std::uint8_t { F32 = 4, F64 = 8 };

/// n x d pooled activations with one class label per row.
struct RepresentationDataset {
  Eigen::MatrixXd rows;
  std::vector<std::uint32_t> labels;
  std::string stage;
  Precision precision = Precision::F64;

  std::size_t size() const { return static_cast<std::size_t>(rows.rows()); }
  std::size_t dim() const { return static_cast<std::size_t>(rows.cols()); }

  /// Label count matches rows and every value is finite; throws
  /// ValidationError naming the first non-finite row otherwise.
  void validate() const;
};

void write_representations(const RepresentationDataset& data, std::ostream& out);
void write_representations(const RepresentationDataset& data, const std::filesystem::path& path);

/// Structural problems always throw; `check_values = false` skips the
/// finiteness check so that a file can still be inspected.
RepresentationDataset read_representations(std::istream& in, const std::string& source = "<stream>",
                                           bool check_values = true);
RepresentationDataset load_representations(const std::filesystem::path& path, bool check_values = true);

/// Centered truncated SVD basis.
struct SvdProjection {
  Eigen::VectorXd center;
  Eigen::MatrixXd basis;            ///< d x d' right-singular vectors
  Eigen::VectorXd singular_values;  ///< retained, non-increasing
  double variance_captured = 0.0;

  std::size_t input_dim() const { return static_cast<std::size_t>(basis.rows()); }
  std::size_t output_dim() const { return static_cast<std::size_t>(basis.cols()); }
};

/// Either a fixed output dimension or the smallest dimension capturing at
/// least a variance fraction.
struct SvdTarget {
  enum class Kind { Dims, Variance };
  Kind kind = Kind::Dims;
  std::size_t dims = 0;
  double fraction = 1.0;

  static SvdTarget fixed(std::size_t d) { return {Kind::Dims, d, 1.0}; }
  static SvdTarget variance(double f) { return {Kind::Variance, 0, f}; }
};

struct SvdResult {
  RepresentationDataset data;
  SvdProjection projection;
};

SvdResult svd_reduce(const RepresentationDataset& data, const SvdTarget& target);

/// Fraction of variance captured by the leading k singular vectors, for
/// k = 1..min(n, d). Non-decreasing and ending at 1 (for non-constant data).
std::vector<double> svd_variance_curve(const RepresentationDataset& data);

/// Applies an existing projection to other data (e.g. held-out queries).
RepresentationDataset apply_projection(const SvdProjection& projection, const RepresentationDataset& data);

inline constexpr double kDefaultKappa0 = 1.0;

/// nu0 = d + 2, mu0 = column mean and
/// psi0 = diag(population variance, floored at 1e-9) * (nu0 - d - 1), so the
/// prior-expected component covariance is the empirical diagonal covariance.
/// kappa0 defaults to 1. Much smaller values make the fresh-component
/// predictive so wide that its tail mass dominates divergence estimates.
NIWParams derive_prior(const Eigen::Ref<const Eigen::MatrixXd>& rows, double kappa0 = kDefaultKappa0);
inline NIWParams derive_prior(const RepresentationDataset& data, double kappa0 = kDefaultKappa0) {
  return derive_prior(data.rows, kappa0);
}

/// Rows per class, in original order.
std::map<std::uint32_t, RepresentationDataset> split_by_class(const RepresentationDataset& data);

/// Original row indices per class, in order (parallel to split_by_class).
std::map<std::uint32_t, std::vector<std::size_t>> class_row_indices(const RepresentationDataset& data);

/// Copy of the selected rows (labels, stage and precision carried over).
RepresentationDataset select_rows(const RepresentationDataset& data, const std::vector<std::size_t>& indices);

}  // namespace repdensity
