#include "repdensity/representation.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <string>

#include <Eigen/SVD>

#include "repdensity/detail/binary_io.hpp"
#include "repdensity/errors.hpp"

namespace repdensity {

namespace {

constexpr char kMagic[5] = "REPR";
constexpr std::uint16_t kVersion = 1;
constexpr double kVarianceFloor = 1e-9;

}  // namespace

void RepresentationDataset::validate() const {
  if (labels.size() != size()) {
    throw ValidationError("label count " + std::to_string(labels.size()) + " does not match row count " +
                          std::to_string(size()));
  }
  for (Eigen::Index i = 0; i < rows.rows(); ++i) {
    if (!rows.row(i).allFinite()) {
      throw ValidationError("non-finite value in row " + std::to_string(i));
    }
  }
}

void write_representations(const RepresentationDataset& data, std::ostream& out) {
  data.validate();
  if (data.stage.size() > std::numeric_limits<std::uint16_t>::max()) {
    throw ParameterError("stage tag longer than 65535 bytes");
  }
  out.write(kMagic, 4);
  detail::write_le<std::uint16_t>(out, kVersion);
  detail::write_le<std::uint8_t>(out, static_cast<std::uint8_t>(data.precision));
  detail::write_le<std::uint8_t>(out, 0);
  detail::write_le<std::uint64_t>(out, data.size());
  detail::write_le<std::uint64_t>(out, data.dim());
  detail::write_le<std::uint16_t>(out, static_cast<std::uint16_t>(data.stage.size()));
  out.write(data.stage.data(), static_cast<std::streamsize>(data.stage.size()));
  for (auto label : data.labels) detail::write_le<std::uint32_t>(out, label);
  for (Eigen::Index i = 0; i < data.rows.rows(); ++i) {
    for (Eigen::Index j = 0; j < data.rows.cols(); ++j) {
      if (data.precision == Precision::F32) {
        detail::write_le<float>(out, static_cast<float>(data.rows(i, j)));
      } else {
        detail::write_le<double>(out, data.rows(i, j));
      }
    }
  }
  if (!out) throw IoError("failed writing representation stream");
}

void write_representations(const RepresentationDataset& data, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  write_representations(data, out);
}

RepresentationDataset read_representations(std::istream& in, const std::string& source, bool check_values) {
  detail::expect_magic(in, kMagic, source);
  const auto version = detail::read_le<std::uint16_t>(in, "version");
  if (version != kVersion) {
    throw FormatError(source + ": unsupported version " + std::to_string(version));
  }
  const auto precision = detail::read_le<std::uint8_t>(in, "precision");
  if (precision != 4 && precision != 8) {
    throw FormatError(source + ": unsupported precision marker " + std::to_string(precision));
  }
  detail::read_le<std::uint8_t>(in, "reserved byte");
  const auto n = detail::read_le<std::uint64_t>(in, "row count");
  const auto d = detail::read_le<std::uint64_t>(in, "dimension");
  const auto tag_len = detail::read_le<std::uint16_t>(in, "stage tag length");

  RepresentationDataset data;
  data.precision = static_cast<Precision>(precision);
  data.stage.resize(tag_len);
  detail::read_exact(in, data.stage.data(), tag_len, "stage tag");

  // Refuse absurd headers before allocating.
  constexpr std::uint64_t kMaxElements = std::uint64_t{1} << 40;
  if (n > kMaxElements || d > kMaxElements || (d != 0 && n > kMaxElements / d)) {
    throw CorruptionError(source + ": header declares an implausible size");
  }

  data.labels.resize(n);
  for (std::uint64_t i = 0; i < n; ++i) data.labels[i] = detail::read_le<std::uint32_t>(in, "labels");

  data.rows.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d));
  for (std::uint64_t i = 0; i < n; ++i) {
    for (std::uint64_t j = 0; j < d; ++j) {
      const double value = data.precision == Precision::F32
                               ? static_cast<double>(detail::read_le<float>(in, "matrix payload"))
                               : detail::read_le<double>(in, "matrix payload");
      data.rows(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = value;
    }
  }
  if (check_values) data.validate();
  return data;
}

RepresentationDataset load_representations(const std::filesystem::path& path, bool check_values) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  return read_representations(in, path.string(), check_values);
}

namespace {

struct CenteredSvd {
  Eigen::VectorXd center;
  Eigen::MatrixXd v;       // d x d, columns sorted by singular value
  Eigen::VectorXd sigma;   // length d, zero padded when n < d
};

CenteredSvd centered_svd(const Eigen::MatrixXd& rows) {
  CenteredSvd out;
  out.center = rows.colwise().mean().transpose();
  const Eigen::MatrixXd centered = rows.rowwise() - out.center.transpose();
  Eigen::BDCSVD<Eigen::MatrixXd> svd(centered, Eigen::ComputeFullV);
  const auto d = rows.cols();
  out.v = svd.matrixV();
  out.sigma = Eigen::VectorXd::Zero(d);
  out.sigma.head(svd.singularValues().size()) = svd.singularValues();
  // Fix signs so the largest-magnitude entry of each basis vector is positive.
  for (Eigen::Index j = 0; j < d; ++j) {
    Eigen::Index arg = 0;
    out.v.col(j).cwiseAbs().maxCoeff(&arg);
    if (out.v(arg, j) < 0.0) out.v.col(j) *= -1.0;
  }
  return out;
}

std::vector<double> cumulative_fraction(const Eigen::VectorXd& sigma) {
  const double total = sigma.squaredNorm();
  std::vector<double> curve(static_cast<std::size_t>(sigma.size()));
  double acc = 0.0;
  for (Eigen::Index k = 0; k < sigma.size(); ++k) {
    acc += sigma[k] * sigma[k];
    curve[static_cast<std::size_t>(k)] = total > 0.0 ? std::min(1.0, acc / total) : 1.0;
  }
  return curve;
}

}  // namespace

SvdResult svd_reduce(const RepresentationDataset& data, const SvdTarget& target) {
  data.validate();
  if (data.size() < 2) throw InsufficientDataError("svd_reduce needs at least 2 rows");
  const std::size_t d = data.dim();
  if (target.kind == SvdTarget::Kind::Dims && (target.dims > d || target.dims == 0)) {
    throw ParameterError("svd_reduce: target dimension " + std::to_string(target.dims) +
                         " outside [1, " + std::to_string(d) + "]");
  }
  if (target.kind == SvdTarget::Kind::Variance && !(target.fraction > 0.0 && target.fraction <= 1.0)) {
    throw ParameterError("svd_reduce: variance fraction must lie in (0, 1]");
  }

  const CenteredSvd svd = centered_svd(data.rows);
  const auto curve = cumulative_fraction(svd.sigma);

  std::size_t keep = target.dims;
  if (target.kind == SvdTarget::Kind::Variance) {
    keep = d;
    for (std::size_t k = 0; k < curve.size(); ++k) {
      if (curve[k] >= target.fraction - 1e-12) {
        keep = k + 1;
        break;
      }
    }
  }

  SvdResult result;
  auto& proj = result.projection;
  proj.center = svd.center;
  proj.basis = svd.v.leftCols(static_cast<Eigen::Index>(keep));
  proj.singular_values = svd.sigma.head(static_cast<Eigen::Index>(keep));
  proj.variance_captured = curve[keep - 1];
  result.data = apply_projection(proj, data);
  return result;
}

std::vector<double> svd_variance_curve(const RepresentationDataset& data) {
  data.validate();
  if (data.size() < 2) throw InsufficientDataError("svd_variance_curve needs at least 2 rows");
  return cumulative_fraction(centered_svd(data.rows).sigma);
}

RepresentationDataset apply_projection(const SvdProjection& projection, const RepresentationDataset& data) {
  if (data.dim() != projection.input_dim()) {
    throw ParameterError("apply_projection: data dimension " + std::to_string(data.dim()) +
                         " does not match projection input " + std::to_string(projection.input_dim()));
  }
  RepresentationDataset out;
  out.rows = (data.rows.rowwise() - projection.center.transpose()) * projection.basis;
  out.labels = data.labels;
  out.stage = data.stage;
  out.precision = data.precision;
  return out;
}

NIWParams derive_prior(const Eigen::Ref<const Eigen::MatrixXd>& rows, double kappa0) {
  if (rows.rows() < 2) throw InsufficientDataError("derive_prior needs at least 2 rows");
  if (rows.cols() < 1) throw ParameterError("derive_prior needs at least one dimension");
  const auto d = static_cast<double>(rows.cols());
  NIWParams prior;
  prior.mu0 = rows.colwise().mean().transpose();
  if (!(kappa0 > 0.0) || !std::isfinite(kappa0)) throw ParameterError("kappa0 must be positive and finite");
  prior.kappa0 = kappa0;
  prior.nu0 = d + 2.0;
  const Eigen::VectorXd variances =
      ((rows.rowwise() - prior.mu0.transpose()).array().square().colwise().sum() /
       static_cast<double>(rows.rows()))
          .transpose()
          .cwiseMax(kVarianceFloor);
  prior.psi0 = (variances * (prior.nu0 - d - 1.0)).asDiagonal();
  return prior;
}

std::map<std::uint32_t, std::vector<std::size_t>> class_row_indices(const RepresentationDataset& data) {
  std::map<std::uint32_t, std::vector<std::size_t>> out;
  for (std::size_t i = 0; i < data.labels.size(); ++i) out[data.labels[i]].push_back(i);
  return out;
}

RepresentationDataset select_rows(const RepresentationDataset& data, const std::vector<std::size_t>& indices) {
  RepresentationDataset out;
  out.rows.resize(static_cast<Eigen::Index>(indices.size()), data.rows.cols());
  out.labels.reserve(indices.size());
  for (std::size_t r = 0; r < indices.size(); ++r) {
    out.rows.row(static_cast<Eigen::Index>(r)) = data.rows.row(static_cast<Eigen::Index>(indices[r]));
    out.labels.push_back(data.labels[indices[r]]);
  }
  out.stage = data.stage;
  out.precision = data.precision;
  return out;
}

std::map<std::uint32_t, RepresentationDataset> split_by_class(const RepresentationDataset& data) {
  std::map<std::uint32_t, RepresentationDataset> out;
  for (const auto& [label, indices] : class_row_indices(data)) out.emplace(label, select_rows(data, indices));
  return out;
}

}  // namespace repdensity
