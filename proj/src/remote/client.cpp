#include "tprobe/remote/client.hpp"

#include "tprobe/core/json_fields.hpp"

#include <httplib.h>

#include <fmt/format.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <regex>
#include <thread>

namespace tprobe {

namespace {

struct Endpoint {
  std::string base;  // scheme://host[:port]
  std::string path;
};

Endpoint split_endpoint(const std::string& url) {
  static const std::regex re(R"(^(https?://[^/]+)(/.*)?$)");
  std::smatch m;
  if (!std::regex_match(url, m, re)) {
    throw ConfigError(fmt::format("endpoint '{}' is not an http(s) URL", url));
  }
  return {m[1].str(), m[2].matched ? m[2].str() : std::string("/")};
}

std::string prompt_mode_name(PromptMode m) { return m == PromptMode::ids ? "ids" : "strings"; }

std::chrono::microseconds seconds(double s) {
  return std::chrono::microseconds(static_cast<std::int64_t>(std::llround(s * 1e6)));
}

}  // namespace

void RemoteConfig::validate(std::size_t ell) const {
  split_endpoint(endpoint);
  if (model.empty()) {
    throw ConfigError("remote.model must be set");
  }
  if (!(temperature >= 0.0) || !std::isfinite(temperature)) {
    throw ConfigError(fmt::format("remote.temperature must be a finite nonnegative number, got {}", temperature));
  }
  if (top_logprobs == 0) {
    throw ConfigError("remote.top_logprobs must be >= 1");
  }
  if (top_logprobs < ell) {
    throw ConfigError(fmt::format("remote.top_logprobs = {} is below the option's ell = {}", top_logprobs, ell));
  }
  if (max_tokens == 0) {
    throw ConfigError("remote.max_tokens must be >= 1");
  }
  if (!(timeout_s > 0.0)) {
    throw ConfigError("remote.timeout_s must be positive");
  }
  if (max_concurrency == 0) {
    throw ConfigError("remote.max_concurrency must be >= 1");
  }
  if (retry.max_attempts == 0 || !(retry.backoff_base_s >= 0.0) || !(retry.backoff_max_s >= 0.0)) {
    throw ConfigError("remote.retry needs max_attempts >= 1 and nonnegative backoff");
  }
  if (repeats == 0) {
    throw ConfigError("remote.repeats must be >= 1");
  }
}

nlohmann::json remote_config_to_json(const RemoteConfig& c) {
  return {{"endpoint", c.endpoint},
          {"model", c.model},
          {"api_key_env", c.api_key_env},
          {"temperature", c.temperature},
          {"top_logprobs", c.top_logprobs},
          {"max_tokens", c.max_tokens},
          {"timeout_s", c.timeout_s},
          {"max_concurrency", c.max_concurrency},
          {"retry",
           {{"max_attempts", c.retry.max_attempts},
            {"backoff_base_s", c.retry.backoff_base_s},
            {"backoff_max_s", c.retry.backoff_max_s}}},
          {"prompt_mode", prompt_mode_name(c.prompt_mode)},
          {"repeats", c.repeats}};
}

RemoteConfig remote_config_from_json(const nlohmann::json& j) {
  JsonFields f(j, "remote");
  RemoteConfig c;
  c.endpoint = f.required<std::string>("endpoint");
  c.model = f.required<std::string>("model");
  c.api_key_env = f.get<std::string>("api_key_env", c.api_key_env);
  c.temperature = f.get<double>("temperature", c.temperature);
  c.top_logprobs = f.get<std::size_t>("top_logprobs", c.top_logprobs);
  c.max_tokens = f.get<std::size_t>("max_tokens", c.max_tokens);
  c.timeout_s = f.get<double>("timeout_s", c.timeout_s);
  c.max_concurrency = f.get<std::size_t>("max_concurrency", c.max_concurrency);
  c.repeats = f.get<std::size_t>("repeats", c.repeats);
  if (f.has("retry")) {
    JsonFields r(f.raw("retry"), "remote.retry");
    c.retry.max_attempts = r.get<std::size_t>("max_attempts", c.retry.max_attempts);
    c.retry.backoff_base_s = r.get<double>("backoff_base_s", c.retry.backoff_base_s);
    c.retry.backoff_max_s = r.get<double>("backoff_max_s", c.retry.backoff_max_s);
    r.finish();
  }
  if (f.has("prompt_mode")) {
    const auto mode = f.required<std::string>("prompt_mode");
    if (mode == "ids") {
      c.prompt_mode = PromptMode::ids;
    } else if (mode == "strings") {
      c.prompt_mode = PromptMode::strings;
    } else {
      throw ConfigError(fmt::format("remote.prompt_mode must be 'ids' or 'strings', got '{}'", mode));
    }
  }
  f.finish();
  c.validate();
  return c;
}

nlohmann::json build_prompt(const RemoteConfig& config, const std::vector<TokenId>& prefix, TokenId query,
                            const std::vector<std::string>* vocabulary) {
  std::vector<TokenId> ids = prefix;
  ids.push_back(query);
  if (config.prompt_mode == PromptMode::ids) {
    return ids;
  }
  if (vocabulary == nullptr) {
    throw ConfigError("prompt_mode 'strings' needs a vocabulary");
  }
  std::string text;
  for (TokenId id : ids) {
    if (id >= vocabulary->size()) {
      throw ConfigError(fmt::format("token id {} outside vocabulary of {}", id, vocabulary->size()));
    }
    text += (*vocabulary)[id];
  }
  return text;
}

Completion parse_completion(const std::string& body, std::size_t keep) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(body);
  } catch (const nlohmann::json::parse_error& e) {
    throw ResponseParseError(fmt::format("response is not JSON: {}", e.what()), body);
  }
  if (!j.is_object() || !j.contains("choices") || !j["choices"].is_array() || j["choices"].empty() ||
      !j["choices"][0].is_object()) {
    throw ResponseParseError("response has no choices", body);
  }
  const nlohmann::json& choice = j["choices"][0];
  Completion c;
  if (choice.contains("text") && choice["text"].is_string()) {
    c.text = choice["text"].get<std::string>();
  }
  if (!choice.contains("logprobs") || choice["logprobs"].is_null()) {
    throw CapabilityError("response carries no logprobs; the endpoint does not support them");
  }
  const nlohmann::json& lp = choice["logprobs"];
  if (!lp.is_object() || !lp.contains("top_logprobs") || lp["top_logprobs"].is_null()) {
    throw CapabilityError("response carries no top_logprobs");
  }
  if (!lp["top_logprobs"].is_array()) {
    throw ResponseParseError("top_logprobs is not an array", body);
  }
  for (const auto& pos : lp["top_logprobs"]) {
    if (!pos.is_object()) {
      throw ResponseParseError("top_logprobs entry is not an object", body);
    }
    std::vector<LogprobEntry> entries;
    for (const auto& [token, value] : pos.items()) {
      if (!value.is_number()) {
        throw ResponseParseError(fmt::format("logprob for '{}' is not a number", token), body);
      }
      entries.push_back({token, value.get<double>()});
    }
    std::sort(entries.begin(), entries.end(), [](const LogprobEntry& a, const LogprobEntry& b) {
      return a.logprob != b.logprob ? a.logprob > b.logprob : a.token < b.token;
    });
    if (keep > 0 && entries.size() > keep) {
      entries.resize(keep);
    }
    c.positions.push_back(std::move(entries));
  }
  return c;
}

Completion complete_with_logprobs(const RemoteConfig& config, const nlohmann::json& prompt, std::size_t m) {
  const Endpoint ep = split_endpoint(config.endpoint);
  httplib::Headers headers;
  if (!config.api_key_env.empty()) {
    const char* key = std::getenv(config.api_key_env.c_str());
    if (key == nullptr || *key == '\0') {
      throw ConfigError(fmt::format("environment variable {} holding the API key is not set", config.api_key_env));
    }
    headers.emplace("Authorization", std::string("Bearer ") + key);
  }
  const nlohmann::json request = {{"model", config.model},
                                  {"prompt", prompt},
                                  {"max_tokens", m},
                                  {"temperature", config.temperature},
                                  {"logprobs", config.top_logprobs},
                                  {"echo", false},
                                  {"n", 1}};
  const std::string body = request.dump();

  std::string last_error;
  int last_status = 0;
  for (std::size_t attempt = 1; attempt <= config.retry.max_attempts; ++attempt) {
    if (attempt > 1) {
      const double delay = std::min(config.retry.backoff_max_s,
                                    config.retry.backoff_base_s * std::pow(2.0, static_cast<double>(attempt - 2)));
      std::this_thread::sleep_for(seconds(delay));
    }
    // A new client per request: no connection or context is reused.
    httplib::Client client(ep.base);
    client.set_connection_timeout(seconds(config.timeout_s));
    client.set_read_timeout(seconds(config.timeout_s));
    client.set_write_timeout(seconds(config.timeout_s));
    const auto res = client.Post(ep.path, headers, body, "application/json");
    if (!res) {
      last_status = 0;
      last_error = "transport error: " + httplib::to_string(res.error());
      continue;
    }
    if (res->status == 200) {
      Completion c = parse_completion(res->body, config.top_logprobs);
      c.attempts = attempt;
      return c;
    }
    last_status = res->status;
    last_error = fmt::format("HTTP {}: {}", res->status, res->body.substr(0, 200));
    if (res->status != 429 && res->status < 500) {
      throw HttpError(last_error, res->status, false);
    }
  }
  throw HttpError(fmt::format("giving up after {} attempts; last: {}", config.retry.max_attempts, last_error),
                  last_status, true);
}

std::string http_client_version() { return CPPHTTPLIB_VERSION; }

}  // namespace tprobe
