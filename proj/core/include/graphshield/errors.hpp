#pragma once

#include <stdexcept>
#include <string>

namespace gshield {

// Error taxonomy mirrored by the CLI exit codes: usage errors exit 1,
// data errors (validation/parse/io/replay) exit 2, remote-backend
// failures exit 3.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class UsageError : public Error {
 public:
  using Error::Error;
};

// Invariant violations in graphs, deltas, splits, judgments, configs.
class ValidationError : public Error {
 public:
  using Error::Error;
};

// Malformed file contents or unparseable backend responses.
class ParseError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

// Remote scorer failures that are not recoverable per-pair (bad auth,
// unusable base_url). Per-pair failures fail open instead.
class RemoteError : public Error {
 public:
  using Error::Error;
};

}  // namespace gshield
