#pragma once

#include <stdexcept>
#include <string>

namespace tagstrain {

/// Precondition violated by an argument value (bad box, bad spec, ...).
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// Zero-length reference segment in a landmark grid.
class DegenerateGeometry : public DomainError {
 public:
  using DomainError::DomainError;
};

/// Tensor or array shapes that do not fit together.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Configuration document with unknown keys or ill-typed values.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// File could not be read, written or parsed. The message carries the path.
class IoError : public std::runtime_error {
 public:
  IoError(const std::string& path, const std::string& what)
      : std::runtime_error(path + ": " + what), path_(path) {}
  const std::string& path() const noexcept { return path_; }

 private:
  std::string path_;
};

}  // namespace tagstrain
