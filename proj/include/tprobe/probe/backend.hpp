#pragma once

#include "tprobe/core/errors.hpp"
#include "tprobe/core/process.hpp"
#include "tprobe/probe/option.hpp"

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

namespace tprobe {

/// Failure inside a backend (transport, server, capability).
class BackendError : public Error {
 public:
  BackendError(const std::string& what, bool retriable) : Error(what), retriable_(retriable) {}
  bool retriable() const noexcept { return retriable_; }
  const char* kind() const noexcept override { return "backend"; }

 private:
  bool retriable_;
};

/// One worker's connection to a backend. Every call builds a fresh query
/// (prefix..., token) and carries no state into the next call.
class BackendSession {
 public:
  virtual ~BackendSession() = default;

  /// Per-position distributions of the response to (prefix, token), each
  /// truncated to its `keep` most probable entries (0 = all).
  virtual std::vector<PositionDistribution> distributions(const PrefixContext& prefix, TokenId token, std::size_t m,
                                                          std::size_t keep) = 0;

  /// `repeats` independent sampled responses, indexed [position][repeat].
  /// Repeat r draws from a stream derived from (seed, r) only.
  virtual std::vector<std::vector<TokenId>> sample(const PrefixContext& prefix, TokenId token, std::size_t m,
                                                   std::size_t repeats, std::uint64_t seed) = 0;
};

class ProcessBackend {
 public:
  virtual ~ProcessBackend() = default;

  virtual std::string identifier() const = 0;
  virtual std::size_t vocab_size() const = 0;
  /// True if distributions() is available (analytic or logprob mode);
  /// otherwise probabilities are estimated from sample().
  virtual bool provides_distributions() const = 0;
  virtual std::unique_ptr<BackendSession> open_session() const = 0;
};

}  // namespace tprobe
