#pragma once

// Black-box classifier running as a child process. Each batch is written to
// its standard input as one frame (u64 count, u64 d, count*d f64, all
// little-endian) and the child answers with `count` lines, one class id per
// line. A frame with count = 0 ends the session.

#include <cstdio>
#include <string>
#include <vector>

#include <sys/types.h>

#include <Eigen/Core>

namespace repdensity::cli {

class SubprocessClassifier {
 public:
  /// Runs `command` through /bin/sh -c.
  explicit SubprocessClassifier(const std::string& command);
  ~SubprocessClassifier();

  SubprocessClassifier(const SubprocessClassifier&) = delete;
  SubprocessClassifier& operator=(const SubprocessClassifier&) = delete;

  std::vector<int> classify(const Eigen::MatrixXd& batch);

  /// Sends the end frame and waits for the child; throws EvaluationError if
  /// it exits with a non-zero status.
  void finish();

 private:
  void write_all(const void* data, std::size_t size);

  std::string command_;
  pid_t pid_ = -1;
  int to_child_ = -1;
  std::FILE* from_child_ = nullptr;
};

}  // namespace repdensity::cli
