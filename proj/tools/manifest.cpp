#include "manifest.hpp"

#include <chrono>
#include <fstream>
#include <iomanip>
#include <sstream>

#include <Eigen/Core>
#include <boost/version.hpp>
#include <openssl/evp.h>
#include <openssl/opensslv.h>

#include "repdensity/errors.hpp"

#ifndef REPDENSITY_VERSION
#define REPDENSITY_VERSION "unknown"
#endif

namespace repdensity::cli {

std::string sha256_hex(const std::string& bytes) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int length = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), digest, &length, EVP_sha256(), nullptr) != 1) {
    throw IoError("SHA-256 computation failed");
  }
  std::ostringstream hex;
  for (unsigned int i = 0; i < length; ++i) hex << std::hex << std::setw(2) << std::setfill('0') << int{digest[i]};
  return hex.str();
}

std::string sha256_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string() + " for hashing");
  std::ostringstream bytes;
  bytes << in.rdbuf();
  return sha256_hex(bytes.str());
}

nlohmann::json version_info() {
  std::ostringstream eigen;
  eigen << EIGEN_WORLD_VERSION << '.' << EIGEN_MAJOR_VERSION << '.' << EIGEN_MINOR_VERSION;
  return {{"repdensity", REPDENSITY_VERSION},
          {"eigen", eigen.str()},
          {"boost", BOOST_LIB_VERSION},
          {"openssl", OPENSSL_VERSION_TEXT},
          {"compiler", __VERSION__}};
}

Manifest::Manifest(std::string command, nlohmann::json arguments, nlohmann::json config)
    : command_(std::move(command)), arguments_(std::move(arguments)), config_(std::move(config)) {}

void Manifest::add_input(const std::filesystem::path& path) { inputs_.push_back(path); }
void Manifest::add_output(const std::filesystem::path& path) { outputs_.push_back(path); }

void Manifest::write(const std::filesystem::path& path) const {
  const auto base = path.parent_path().empty() ? std::filesystem::path(".") : path.parent_path();
  const auto label = [&](const std::filesystem::path& p) {
    const auto rel = std::filesystem::proximate(p, base);
    const auto text = rel.generic_string();
    return text.rfind("..", 0) == 0 ? p.generic_string() : text;
  };
  nlohmann::json j;
  j["command"] = command_;
  j["arguments"] = arguments_;
  j["config"] = config_;
  j["config_sha256"] = sha256_hex(config_.dump());
  j["versions"] = version_info();
  j["inputs"] = nlohmann::json::object();
  for (const auto& p : inputs_) j["inputs"][p.generic_string()] = sha256_file(p);
  j["outputs"] = nlohmann::json::object();
  for (const auto& p : outputs_) j["outputs"][label(p)] = sha256_file(p);
  for (const auto& [k, v] : extra_.items()) j[k] = v;
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::ostringstream stamp;
  stamp << std::put_time(std::gmtime(&now), "%Y-%m-%dT%H:%M:%SZ");
  j["created"] = stamp.str();

  std::ofstream out(path);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << j.dump(2) << '\n';
  if (!out) throw IoError("failed writing " + path.string());
}

}  // namespace repdensity::cli
