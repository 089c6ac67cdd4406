#include "commands.hpp"

#include <cstdlib>
#include <fstream>
#include <limits>
#include <sstream>

#include "repdensity/errors.hpp"

namespace repdensity::cli {

std::size_t worker_count(std::size_t requested) {
  std::size_t n = std::max<std::size_t>(requested, 1);
  if (const char* cap = std::getenv("REPDENSITY_THREADS"); cap != nullptr && *cap != '\0') {
    char* end = nullptr;
    const unsigned long long value = std::strtoull(cap, &end, 10);
    if (end == cap || *end != '\0' || value == 0) {
      throw ConfigurationError("REPDENSITY_THREADS must be a positive integer, got '" + std::string(cap) + "'");
    }
    n = std::min<std::size_t>(n, value);
  }
  return n;
}

std::filesystem::path class_archive_path(const std::filesystem::path& dir, std::uint32_t class_id) {
  return dir / ("class_" + std::to_string(class_id) + ".dpss");
}

PredictiveModel load_class_model(const std::filesystem::path& archive_path, const Eigen::MatrixXd& class_rows,
                                 double kappa0) {
  const SnapshotArchive archive = read_snapshot_archive(archive_path);
  if (archive.n != static_cast<std::uint64_t>(class_rows.rows()) ||
      archive.d != static_cast<std::uint64_t>(class_rows.cols())) {
    throw ValidationError(archive_path.string() + " was fitted to " + std::to_string(archive.n) + "x" +
                          std::to_string(archive.d) + " rows but the training class has " +
                          std::to_string(class_rows.rows()) + "x" + std::to_string(class_rows.cols()));
  }
  return PredictiveModel(class_rows, derive_prior(class_rows, kappa0), archive.snapshots);
}

ClassModels load_class_models(const RepresentationDataset& train, const std::filesystem::path& dir, double kappa0) {
  if (!std::filesystem::is_directory(dir)) throw IoError("model directory " + dir.string() + " does not exist");
  ClassModels models;
  for (const auto& [label, rows] : split_by_class(train)) {
    const auto path = class_archive_path(dir, label);
    if (std::filesystem::exists(path)) models.emplace(label, load_class_model(path, rows.rows, kappa0));
  }
  return models;
}

std::ofstream open_csv(const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out.precision(std::numeric_limits<double>::max_digits10);
  return out;
}

std::string optional_cell(const std::optional<double>& value) {
  if (!value) return "";
  std::ostringstream s;
  s.precision(std::numeric_limits<double>::max_digits10);
  s << *value;
  return s.str();
}

}  // namespace repdensity::cli
