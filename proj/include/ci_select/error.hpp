#pragma once

#include <stdexcept>
#include <string>

namespace ci_select {

// Exit codes used by the command-line front end.
enum class ExitCode : int {
  kOk = 0,
  kUsage = 1,
  kData = 2,
  kInvariant = 3,
};

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
  virtual ExitCode exit_code() const noexcept = 0;
};

// Bad flags, bad config values, unknown names.
class UsageError : public Error {
 public:
  using Error::Error;
  ExitCode exit_code() const noexcept override { return ExitCode::kUsage; }
};

// Malformed or inconsistent input data (manifests, audio, caches, CSVs).
class DataError : public Error {
 public:
  using Error::Error;
  ExitCode exit_code() const noexcept override { return ExitCode::kData; }
};

// A numerical invariant that must hold by construction was violated.
class InvariantError : public Error {
 public:
  using Error::Error;
  ExitCode exit_code() const noexcept override { return ExitCode::kInvariant; }
};

}  // namespace ci_select
