#pragma once

#include <stdexcept>
#include <string>

namespace adacur {

// Invalid search/benchmark configuration, rejected before any scorer call.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Remote scorer unreachable, returned a non-200 status, or sent a malformed
// payload, after the retry policy was exhausted.
class TransportError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// On-disk container damaged: bad magic, truncation, or CRC mismatch.
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Container format version not understood by this build.
class VersionError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Numerical factorization (SVD) failed to converge.
class FactorizationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Index build aborted partway; message names the failing query/items.
class BuildError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace adacur
