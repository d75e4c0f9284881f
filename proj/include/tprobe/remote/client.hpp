#pragma once

#include "tprobe/core/errors.hpp"
#include "tprobe/core/process.hpp"

#include <json.hpp>

#include <cstddef>
#include <string>
#include <vector>

namespace tprobe {

struct RetryPolicy {
  std::size_t max_attempts = 5;
  double backoff_base_s = 0.5;  // delay before retry k is base * 2^(k-1)
  double backoff_max_s = 30.0;
};

enum class PromptMode { ids, strings };

/// Connection to an OpenAI-style completions endpoint with logprobs.
/// The key is read from the environment variable named by `api_key_env`
/// (no auth header when empty); it is never stored.
struct RemoteConfig {
  std::string endpoint;  // scheme://host[:port]/path
  std::string model;
  std::string api_key_env;
  double temperature = 1.0;
  std::size_t top_logprobs = 5;
  std::size_t max_tokens = 30;
  double timeout_s = 60.0;
  std::size_t max_concurrency = 4;
  RetryPolicy retry;
  PromptMode prompt_mode = PromptMode::ids;
  /// Completions per token. With logprobs one call already gives the
  /// distributions; more repeats average over sampled continuations.
  std::size_t repeats = 1;

  /// Throws ConfigError on an unusable config or when top_logprobs < ell.
  void validate(std::size_t ell = 0) const;
};

nlohmann::json remote_config_to_json(const RemoteConfig& c);
RemoteConfig remote_config_from_json(const nlohmann::json& j);

/// Non-2xx response or transport failure. 429, 5xx and transport errors
/// are retriable.
class HttpError : public Error {
 public:
  HttpError(const std::string& what, int status, bool retriable) : Error(what), status_(status), retriable_(retriable) {}
  int status() const noexcept { return status_; }
  bool retriable() const noexcept { return retriable_; }
  const char* kind() const noexcept override { return "http"; }

 private:
  int status_;
  bool retriable_;
};

/// Response body that is not the expected JSON shape; carries the payload.
class ResponseParseError : public Error {
 public:
  ResponseParseError(const std::string& what, std::string payload) : Error(what), payload_(std::move(payload)) {}
  const std::string& payload() const noexcept { return payload_; }
  const char* kind() const noexcept override { return "parse"; }

 private:
  std::string payload_;
};

/// Well-formed response without per-position logprobs.
class CapabilityError : public Error {
 public:
  using Error::Error;
  const char* kind() const noexcept override { return "capability"; }
};

struct LogprobEntry {
  std::string token;
  double logprob = 0.0;
};

struct Completion {
  std::string text;
  /// Per response position, entries by descending logprob (ties by token).
  std::vector<std::vector<LogprobEntry>> positions;
  std::size_t attempts = 0;
};

/// Prompt for (prefix..., query): an array of token ids, or the
/// concatenated token strings in strings mode.
nlohmann::json build_prompt(const RemoteConfig& config, const std::vector<TokenId>& prefix, TokenId query,
                            const std::vector<std::string>* vocabulary = nullptr);

/// Parses a completions response body. Throws ResponseParseError or
/// CapabilityError.
Completion parse_completion(const std::string& body, std::size_t keep);

/// One fresh request (new connection, no shared state), retried per the
/// policy on retriable failures.
Completion complete_with_logprobs(const RemoteConfig& config, const nlohmann::json& prompt, std::size_t m);

std::string http_client_version();

}  // namespace tprobe
