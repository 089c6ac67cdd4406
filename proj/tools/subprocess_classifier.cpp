#include "subprocess_classifier.hpp"

#include <cerrno>
#include <cstdint>
#include <cstdlib>
#include <cstring>

#include <fcntl.h>
#include <sys/wait.h>
#include <unistd.h>

#include "repdensity/errors.hpp"

namespace repdensity::cli {

SubprocessClassifier::SubprocessClassifier(const std::string& command) : command_(command) {
  int in_pipe[2];
  int out_pipe[2];
  if (pipe2(in_pipe, O_CLOEXEC) != 0 || pipe2(out_pipe, O_CLOEXEC) != 0) {
    throw EvaluationError("cannot create pipes for classifier: " + std::string(std::strerror(errno)));
  }
  pid_ = fork();
  if (pid_ < 0) throw EvaluationError("cannot fork classifier: " + std::string(std::strerror(errno)));
  if (pid_ == 0) {
    dup2(in_pipe[0], STDIN_FILENO);
    dup2(out_pipe[1], STDOUT_FILENO);
    execl("/bin/sh", "sh", "-c", command.c_str(), static_cast<char*>(nullptr));
    _exit(127);
  }
  close(in_pipe[0]);
  close(out_pipe[1]);
  to_child_ = in_pipe[1];
  from_child_ = fdopen(out_pipe[0], "r");
  if (from_child_ == nullptr) throw EvaluationError("cannot read classifier output");
}

SubprocessClassifier::~SubprocessClassifier() {
  try {
    finish();
  } catch (...) {
  }
}

void SubprocessClassifier::write_all(const void* data, std::size_t size) {
  const auto* p = static_cast<const char*>(data);
  while (size > 0) {
    const ssize_t written = write(to_child_, p, size);
    if (written < 0) {
      if (errno == EINTR) continue;
      throw EvaluationError("classifier '" + command_ + "' stopped reading input: " + std::strerror(errno));
    }
    p += written;
    size -= static_cast<std::size_t>(written);
  }
}

std::vector<int> SubprocessClassifier::classify(const Eigen::MatrixXd& batch) {
  if (pid_ < 0) throw EvaluationError("classifier session already finished");
  std::string frame;
  frame.reserve(16 + static_cast<std::size_t>(batch.size()) * 8);
  const auto put = [&](auto value) {
    char bytes[sizeof(value)];
    std::memcpy(bytes, &value, sizeof(value));
    frame.append(bytes, sizeof(value));
  };
  put(static_cast<std::uint64_t>(batch.rows()));
  put(static_cast<std::uint64_t>(batch.cols()));
  for (Eigen::Index i = 0; i < batch.rows(); ++i)
    for (Eigen::Index j = 0; j < batch.cols(); ++j) put(batch(i, j));
  write_all(frame.data(), frame.size());

  std::vector<int> labels;
  labels.reserve(static_cast<std::size_t>(batch.rows()));
  char line[64];
  for (Eigen::Index i = 0; i < batch.rows(); ++i) {
    if (std::fgets(line, sizeof line, from_child_) == nullptr) {
      throw EvaluationError("classifier '" + command_ + "' closed its output after " + std::to_string(i) + " of " +
                            std::to_string(batch.rows()) + " labels");
    }
    char* end = nullptr;
    errno = 0;
    const long value = std::strtol(line, &end, 10);
    while (end != nullptr && (*end == '\n' || *end == '\r' || *end == ' ')) ++end;
    if (errno != 0 || end == line || (end != nullptr && *end != '\0') || value < 0 || value > INT32_MAX) {
      throw EvaluationError("classifier '" + command_ + "' wrote an invalid class id: " + std::string(line));
    }
    labels.push_back(static_cast<int>(value));
  }
  return labels;
}

void SubprocessClassifier::finish() {
  if (pid_ < 0) return;
  const pid_t pid = pid_;
  pid_ = -1;
  const std::uint64_t zero[2] = {0, 0};
  // A child that already quit on its own is judged by its exit status alone.
  [[maybe_unused]] const ssize_t ignored = write(to_child_, zero, sizeof zero);
  close(to_child_);
  std::fclose(from_child_);
  int status = 0;
  while (waitpid(pid, &status, 0) < 0 && errno == EINTR) {
  }
  if (!WIFEXITED(status) || WEXITSTATUS(status) != 0) {
    throw EvaluationError("classifier '" + command_ + "' exited abnormally (status " + std::to_string(status) + ")");
  }
}

}  // namespace repdensity::cli
