#ifndef VFKIT_ERROR_HPP
#define VFKIT_ERROR_HPP

#include <stdexcept>
#include <string>

namespace vfkit {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
  /// Machine-readable category used in CLI error records.
  [[nodiscard]] virtual const char* kind() const noexcept { return "error"; }
  /// True when the failure comes from the environment rather than user input.
  [[nodiscard]] virtual bool infrastructure() const noexcept { return false; }
};

class ParseError : public Error {
 public:
  ParseError(const std::string& file, std::size_t line, const std::string& what)
      : Error(file + ":" + std::to_string(line) + ": " + what), file_(file), line_(line) {}
  [[nodiscard]] const char* kind() const noexcept override { return "parse"; }
  [[nodiscard]] const std::string& file() const noexcept { return file_; }
  [[nodiscard]] std::size_t line() const noexcept { return line_; }

 private:
  std::string file_;
  std::size_t line_;
};

class ReferenceError : public Error {
 public:
  using Error::Error;
  [[nodiscard]] const char* kind() const noexcept override { return "dangling_reference"; }
};

class DuplicateIdError : public Error {
 public:
  using Error::Error;
  [[nodiscard]] const char* kind() const noexcept override { return "duplicate_id"; }
};

class InvariantError : public Error {
 public:
  using Error::Error;
  [[nodiscard]] const char* kind() const noexcept override { return "invariant"; }
};

class DomainError : public Error {
 public:
  using Error::Error;
  [[nodiscard]] const char* kind() const noexcept override { return "domain"; }
};

/// Metric requested on an instance where it is not defined (e.g. no wrong solutions).
class UndefinedMetricError : public Error {
 public:
  using Error::Error;
  [[nodiscard]] const char* kind() const noexcept override { return "undefined_metric"; }
};

class ConfigError : public Error {
 public:
  using Error::Error;
  [[nodiscard]] const char* kind() const noexcept override { return "config"; }
};

class NoFitError : public Error {
 public:
  using Error::Error;
  [[nodiscard]] const char* kind() const noexcept override { return "no_fit"; }
};

class ReplayMissError : public Error {
 public:
  explicit ReplayMissError(const std::string& hash)
      : Error("replay store has no record for prompt hash " + hash), hash_(hash) {}
  [[nodiscard]] const char* kind() const noexcept override { return "replay_miss"; }
  [[nodiscard]] const std::string& hash() const noexcept { return hash_; }

 private:
  std::string hash_;
};

/// The ground-truth program of a problem cannot be built or run at all.
class GroundTruthError : public Error {
 public:
  using Error::Error;
  [[nodiscard]] const char* kind() const noexcept override { return "ground_truth"; }
};

/// Sandbox, filesystem, network or checker failures. Never a verdict.
class InfraError : public Error {
 public:
  using Error::Error;
  [[nodiscard]] const char* kind() const noexcept override { return "infrastructure"; }
  [[nodiscard]] bool infrastructure() const noexcept override { return true; }
};

}  // namespace vfkit

#endif  // VFKIT_ERROR_HPP
