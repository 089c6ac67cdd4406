#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace repdensity {

/// Base of every error raised by the library. `kind()` is a stable,
/// machine-readable tag used by the CLI error JSON.
class Error : public std::runtime_error {
 public:
  Error(std::string kind, const std::string& message)
      : std::runtime_error(message), kind_(std::move(kind)) {}

  const std::string& kind() const noexcept { return kind_; }

 private:
  std::string kind_;
};

#define REPDENSITY_DEFINE_ERROR(Name, tag)                       \
  class Name : public Error {                                    \
   public:                                                       \
    explicit Name(const std::string& message) : Error(tag, message) {} \
  };

REPDENSITY_DEFINE_ERROR(FormatError, "format")
REPDENSITY_DEFINE_ERROR(CorruptionError, "corruption")
REPDENSITY_DEFINE_ERROR(ValidationError, "validation")
REPDENSITY_DEFINE_ERROR(ParameterError, "parameter")
REPDENSITY_DEFINE_ERROR(InsufficientDataError, "insufficient_data")
REPDENSITY_DEFINE_ERROR(NumericalError, "numerical")
REPDENSITY_DEFINE_ERROR(UnderflowError, "underflow")
REPDENSITY_DEFINE_ERROR(ConfigurationError, "configuration")
REPDENSITY_DEFINE_ERROR(EmptySubsetError, "empty_subset")
REPDENSITY_DEFINE_ERROR(EvaluationError, "evaluation")
REPDENSITY_DEFINE_ERROR(IoError, "io")

#undef REPDENSITY_DEFINE_ERROR

/// Memorization score undefined for some examples (never included or never
/// excluded in any trial).
class UndefinedScoreError : public Error {
 public:
  UndefinedScoreError(const std::string& message, std::vector<std::size_t> ids)
      : Error("undefined_score", message), ids_(std::move(ids)) {}

  const std::vector<std::size_t>& example_ids() const noexcept { return ids_; }

 private:
  std::vector<std::size_t> ids_;
};

}  // namespace repdensity
