#pragma once

// Shared plumbing for the subcommands: CSV output, model loading, worker
// counts.

#include <cstdint>
#include <filesystem>
#include <map>
#include <fstream>
#include <optional>
#include <string>

#include "repdensity/class_analysis.hpp"
#include "run_config.hpp"

namespace repdensity::cli {

/// Requested workers capped by REPDENSITY_THREADS, at least 1.
std::size_t worker_count(std::size_t requested);

std::filesystem::path class_archive_path(const std::filesystem::path& dir, std::uint32_t class_id);

/// Rebuilds the predictive model of one class from its archive and the
/// class's training rows; the prior is re-derived from those rows.
PredictiveModel load_class_model(const std::filesystem::path& archive, const Eigen::MatrixXd& class_rows,
                                 double kappa0);

/// Models for every class of `train` that has an archive in `dir`.
ClassModels load_class_models(const RepresentationDataset& train, const std::filesystem::path& dir, double kappa0);

/// Opens a file for writing with full double precision.
std::ofstream open_csv(const std::filesystem::path& path);

/// Empty for a missing value.
std::string optional_cell(const std::optional<double>& value);

}  // namespace repdensity::cli
