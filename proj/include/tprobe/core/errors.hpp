#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace tprobe {

// Base of every error raised by the library. `kind()` is the stable,
// machine-readable tag surfaced in CLI error records.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
  virtual const char* kind() const noexcept { return "error"; }
};

class ConfigError : public Error {
 public:
  using Error::Error;
  const char* kind() const noexcept override { return "config"; }
};

class NumericalDomainError : public Error {
 public:
  using Error::Error;
  const char* kind() const noexcept override { return "numerical-domain"; }
};

class DataError : public Error {
 public:
  using Error::Error;
  const char* kind() const noexcept override { return "data"; }
};

class DataIntegrityError : public Error {
 public:
  using Error::Error;
  const char* kind() const noexcept override { return "data-integrity"; }
};

class UndefinedSlopeError : public Error {
 public:
  using Error::Error;
  const char* kind() const noexcept override { return "undefined-slope"; }
};

// A single token failed to probe. Backend failures are retriable;
// integrity failures are not.
class ProbeError : public Error {
 public:
  ProbeError(std::uint32_t token, bool retriable, const std::string& what)
      : Error(what), token_(token), retriable_(retriable) {}
  std::uint32_t token() const noexcept { return token_; }
  bool retriable() const noexcept { return retriable_; }
  const char* kind() const noexcept override { return "probe"; }

 private:
  std::uint32_t token_;
  bool retriable_;
};

}  // namespace tprobe
