#pragma once

#include <stdexcept>
#include <string>

namespace rbc {

// Bad configuration values, unresolvable paths, malformed config files.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Non-finite values, divergence, degenerate metric inputs.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Corrupt or inconsistent on-disk artifacts (checksums, manifests,
// checkpoints, PGM files).
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A checkpoint whose spec block does not match the expected network spec.
class SpecMismatchError : public FormatError {
 public:
  SpecMismatchError(std::string field, const std::string& detail)
      : FormatError("spec mismatch in field '" + field + "': " + detail),
        field_(std::move(field)) {}

  const std::string& field() const noexcept { return field_; }

 private:
  std::string field_;
};

}  // namespace rbc
