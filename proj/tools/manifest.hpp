#pragma once

// Run manifests: resolved configuration, its hash, library versions and
// SHA-256 checksums of inputs and outputs.

#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"

namespace repdensity::cli {

std::string sha256_hex(const std::string& bytes);
std::string sha256_file(const std::filesystem::path& path);

nlohmann::json version_info();

class Manifest {
 public:
  Manifest(std::string command, nlohmann::json arguments, nlohmann::json config);

  void add_input(const std::filesystem::path& path);
  void add_output(const std::filesystem::path& path);
  void set(const std::string& key, nlohmann::json value) { extra_[key] = std::move(value); }

  /// Writes the manifest; output paths are recorded relative to its directory
  /// when they live below it.
  void write(const std::filesystem::path& path) const;

 private:
  std::string command_;
  nlohmann::json arguments_;
  nlohmann::json config_;
  nlohmann::json extra_ = nlohmann::json::object();
  std::vector<std::filesystem::path> inputs_;
  std::vector<std::filesystem::path> outputs_;
};

}  // namespace repdensity::cli
