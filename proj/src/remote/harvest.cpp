#include "tprobe/remote/harvest.hpp"

#include "tprobe/core/digest.hpp"
#include "tprobe/core/json_fields.hpp"
#include "tprobe/core/table_io.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <condition_variable>
#include <fstream>
#include <map>
#include <mutex>
#include <optional>
#include <thread>
#include <unordered_map>

namespace tprobe {

namespace {

constexpr double kPositiveLogprobSlack = 1e-6;

std::uint64_t file_size_or_zero(const std::filesystem::path& p) {
  std::error_code ec;
  const auto s = std::filesystem::file_size(p, ec);
  return ec ? 0 : s;
}

// Drops bytes past the committed length. Returns the number dropped.
std::uint64_t truncate_to(const std::filesystem::path& p, std::uint64_t committed) {
  const std::uint64_t size = file_size_or_zero(p);
  if (size < committed) {
    throw DataIntegrityError(
        fmt::format("{} holds {} bytes but {} were committed; the harvest directory is damaged", p.string(), size,
                    committed));
  }
  if (!std::filesystem::exists(p)) {
    std::ofstream(p, std::ios::binary).flush();
    return 0;
  }
  std::filesystem::resize_file(p, committed);
  return size - committed;
}

void append(const std::filesystem::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary | std::ios::app);
  out << text;
  out.flush();
  if (!out) {
    throw DataError(fmt::format("cannot append to {}", p.string()));
  }
}

// Entries as stored: positive logprobs within slack clamp to 0, entries
// whose probability underflows to 0 are dropped.
std::vector<LogprobEntry> checked_entries(const std::vector<LogprobEntry>& in, TokenId token) {
  std::vector<LogprobEntry> out;
  for (const auto& e : in) {
    if (std::isnan(e.logprob) || e.logprob > kPositiveLogprobSlack) {
      throw DataIntegrityError(fmt::format("token {}: logprob {} for '{}' is not a log-probability", token,
                                           e.logprob, e.token));
    }
    const double lp = std::min(e.logprob, 0.0);
    if (std::exp(lp) > 0.0) {
      out.push_back({e.token, lp});
    }
  }
  return out;
}

struct GroupResult {
  TokenId token = 0;
  std::string rows;
  std::string responses;
  std::size_t row_count = 0;
  std::optional<ProbeFailure> failure;
};

nlohmann::json skipped_json(const std::map<TokenId, ProbeFailure>& skipped) {
  std::vector<ProbeFailure> v;
  for (const auto& [id, f] : skipped) {
    v.push_back(f);
  }
  return failures_to_json(v);
}

}  // namespace

nlohmann::json state_to_json(const HarvestState& s) {
  return {{"config_digest", s.config_digest},
          {"completed", std::vector<TokenId>(s.completed.begin(), s.completed.end())},
          {"rows_bytes", s.rows_bytes},
          {"responses_bytes", s.responses_bytes}};
}

HarvestState state_from_json(const nlohmann::json& j) {
  JsonFields f(j, "state");
  HarvestState s;
  s.config_digest = f.required<std::string>("config_digest");
  const auto ids = f.required<std::vector<TokenId>>("completed");
  s.completed = std::set<TokenId>(ids.begin(), ids.end());
  s.rows_bytes = f.required<std::uint64_t>("rows_bytes");
  s.responses_bytes = f.required<std::uint64_t>("responses_bytes");
  f.finish();
  return s;
}

std::string harvest_digest(const RemoteConfig& config, const HarvestRequest& request) {
  const nlohmann::json j = {{"endpoint", config.endpoint},
                            {"model", config.model},
                            {"temperature", config.temperature},
                            {"top_logprobs", config.top_logprobs},
                            {"max_tokens", config.max_tokens},
                            {"prompt_mode", remote_config_to_json(config)["prompt_mode"]},
                            {"repeats", config.repeats},
                            {"option", option_to_json(request.option)},
                            {"prefix", request.prefix}};
  return sha256_hex(j.dump());
}

HarvestSummary harvest(const RemoteConfig& config, const HarvestRequest& request) {
  request.option.validate();
  config.validate(request.option.needed_entries());
  if (request.option.m != config.max_tokens) {
    throw ConfigError(fmt::format("option m = {} differs from remote.max_tokens = {}", request.option.m,
                                  config.max_tokens));
  }
  if (request.last < request.first) {
    throw ConfigError(fmt::format("empty token range [{}, {})", request.first, request.last));
  }
  const HarvestPaths paths{request.out_dir};
  std::filesystem::create_directories(paths.dir);
  const std::string digest = harvest_digest(config, request);

  HarvestSummary summary;
  HarvestState state;
  if (std::filesystem::exists(paths.state())) {
    state = state_from_json(nlohmann::json::parse(read_file(paths.state())));
    if (state.config_digest != digest) {
      throw ConfigError(fmt::format("{} was harvested with config digest {}, this run has {}; refusing to mix",
                                    paths.dir.string(), state.config_digest, digest));
    }
  } else {
    if (file_size_or_zero(paths.rows()) > 0) {
      throw DataIntegrityError(fmt::format("{} has rows but no state.json", paths.dir.string()));
    }
    state.config_digest = digest;
  }
  summary.repaired_bytes = truncate_to(paths.rows(), state.rows_bytes) + truncate_to(paths.responses(),
                                                                                      state.responses_bytes);
  write_file_atomic(paths.state(), state_to_json(state).dump() + "\n");

  std::map<TokenId, ProbeFailure> skipped;
  if (std::filesystem::exists(paths.skipped())) {
    for (const auto& f : nlohmann::json::parse(read_file(paths.skipped()))) {
      const auto id = f.at("token_id").get<TokenId>();
      skipped[id] = {id, f.at("kind").get<std::string>(), f.at("message").get<std::string>(),
                     f.at("attempts").get<std::size_t>()};
    }
  }

  const PrefixContext prefix_ctx{request.prefix};
  nlohmann::json meta = {{"backend", "remote:" + config.model},
                         {"remote", remote_config_to_json(config)},
                         {"option", option_to_json(request.option)},
                         {"prefix_tokens", request.prefix},
                         {"prefix_digest", prefix_ctx.digest()},
                         {"config_digest", digest}};
  write_file_atomic(paths.meta(), meta.dump(2) + "\n");

  std::vector<TokenId> pending;
  for (TokenId t = request.first; t < request.last; ++t) {
    if (state.completed.contains(t)) {
      ++summary.already_completed;
    } else if (request.max_new_tokens == 0 || pending.size() < request.max_new_tokens) {
      pending.push_back(t);
    }
  }

  std::mutex mu;
  std::condition_variable cv;
  std::map<std::size_t, GroupResult> ready;  // by index into pending
  std::atomic<std::size_t> next{0};
  std::atomic<std::size_t> in_flight{0};
  std::atomic<std::size_t> peak{0};
  std::atomic<bool> stop{false};
  std::exception_ptr fatal;

  const auto run_token = [&](TokenId token) {
    GroupResult g;
    g.token = token;
    std::size_t attempts = 0;
    try {
      const nlohmann::json prompt = build_prompt(config, request.prefix, token, request.vocabulary);
      for (std::size_t r = 0; r < config.repeats; ++r) {
        const std::size_t now = ++in_flight;
        std::size_t seen = peak.load();
        while (now > seen && !peak.compare_exchange_weak(seen, now)) {
        }
        Completion c;
        try {
          c = complete_with_logprobs(config, prompt, config.max_tokens);
        } catch (...) {
          --in_flight;
          throw;
        }
        --in_flight;
        attempts += c.attempts;
        for (std::size_t p = 0; p < c.positions.size(); ++p) {
          const auto entries = checked_entries(c.positions[p], token);
          for (std::size_t k = 0; k < entries.size(); ++k) {
            const nlohmann::json row = {{"token_id", token},      {"repeat", r},
                                        {"position", p},          {"rank", k},
                                        {"token", entries[k].token}, {"logprob", entries[k].logprob}};
            g.rows += row.dump() + "\n";
            ++g.row_count;
          }
        }
        g.responses += nlohmann::json{{"token_id", token}, {"repeat", r}, {"text", c.text}}.dump() + "\n";
      }
    } catch (const HttpError& e) {
      g.failure = ProbeFailure{token, e.kind(), e.what(), attempts + (e.retriable() ? config.retry.max_attempts : 1)};
    } catch (const ResponseParseError& e) {
      g.failure = ProbeFailure{token, e.kind(), std::string(e.what()) + "; payload: " + e.payload().substr(0, 500),
                               attempts + 1};
    } catch (const DataIntegrityError& e) {
      g.failure = ProbeFailure{token, e.kind(), e.what(), attempts};
    }
    return g;
  };

  const std::size_t workers = std::min(config.max_concurrency, pending.size());
  std::vector<std::jthread> threads;
  for (std::size_t w = 0; w < workers; ++w) {
    threads.emplace_back([&] {
      while (!stop) {
        const std::size_t i = next++;
        if (i >= pending.size()) {
          return;
        }
        try {
          GroupResult g = run_token(pending[i]);
          std::lock_guard lock(mu);
          ready.emplace(i, std::move(g));
        } catch (...) {
          std::lock_guard lock(mu);
          if (!fatal) {
            fatal = std::current_exception();
          }
          stop = true;
        }
        cv.notify_one();
      }
    });
  }

  std::size_t handled = 0;
  try {
    while (handled < pending.size()) {
      GroupResult g;
      {
        std::unique_lock lock(mu);
        cv.wait(lock, [&] { return ready.contains(handled) || stop; });
        const auto it = ready.find(handled);
        if (it == ready.end()) {
          break;
        }
        g = std::move(it->second);
        ready.erase(it);
      }
      ++handled;
      if (g.failure) {
        skipped[g.token] = *g.failure;
        write_file_atomic(paths.skipped(), skipped_json(skipped).dump(2) + "\n");
        continue;
      }
      append(paths.rows(), g.rows);
      append(paths.responses(), g.responses);
      state.completed.insert(g.token);
      state.rows_bytes += g.rows.size();
      state.responses_bytes += g.responses.size();
      write_file_atomic(paths.state(), state_to_json(state).dump() + "\n");
      if (skipped.erase(g.token) > 0) {
        write_file_atomic(paths.skipped(), skipped_json(skipped).dump(2) + "\n");
      }
      ++summary.new_tokens;
      summary.rows_written += g.row_count;
    }
  } catch (...) {
    stop = true;
    threads.clear();
    throw;
  }
  threads.clear();
  if (fatal) {
    std::rethrow_exception(fatal);
  }
  if (!std::filesystem::exists(paths.skipped())) {
    write_file_atomic(paths.skipped(), skipped_json(skipped).dump(2) + "\n");
  }
  summary.peak_in_flight = peak.load();
  for (const auto& [id, f] : skipped) {
    summary.skipped.push_back(f);
  }
  return summary;
}

MeasurementMatrix harvest_to_matrix(const std::filesystem::path& dir, const ProbeOption& option,
                                    const std::vector<std::string>* vocabulary) {
  option.validate();
  const HarvestPaths paths{dir};
  const HarvestState state = state_from_json(nlohmann::json::parse(read_file(paths.state())));
  const nlohmann::json meta = nlohmann::json::parse(read_file(paths.meta()));
  const auto repeats = meta.at("remote").at("repeats").get<std::size_t>();
  const bool by_rank = option.variant == ProbeOption::Variant::option1;
  if (!by_rank && vocabulary == nullptr) {
    throw ConfigError(fmt::format("{} needs the vocabulary to place token strings", option.name()));
  }
  std::unordered_map<std::string, TokenId> lookup;
  if (vocabulary != nullptr) {
    for (std::size_t i = 0; i < vocabulary->size(); ++i) {
      lookup.emplace((*vocabulary)[i], static_cast<TokenId>(i));
    }
  }

  // token -> position -> token string -> summed probability
  std::map<TokenId, std::vector<std::map<std::string, double>>> sums;
  for (TokenId t : state.completed) {
    sums[t].resize(option.m);
  }
  const std::string text = read_file(paths.rows());
  if (text.size() < state.rows_bytes) {
    throw DataIntegrityError(fmt::format("{} is shorter than its committed length", paths.rows().string()));
  }
  std::size_t begin = 0;
  std::size_t line_no = 0;
  while (begin < state.rows_bytes) {
    const std::size_t end = text.find('\n', begin);
    if (end == std::string::npos || end >= state.rows_bytes) {
      throw DataIntegrityError(fmt::format("{}: committed rows end mid-line", paths.rows().string()));
    }
    ++line_no;
    nlohmann::json row;
    try {
      row = nlohmann::json::parse(text.substr(begin, end - begin));
    } catch (const nlohmann::json::parse_error& e) {
      throw DataIntegrityError(fmt::format("{}:{}: {}", paths.rows().string(), line_no, e.what()));
    }
    begin = end + 1;
    const auto token = row.at("token_id").get<TokenId>();
    const auto position = row.at("position").get<std::size_t>();
    if (!sums.contains(token) || position >= option.m) {
      continue;
    }
    sums[token][position][row.at("token").get<std::string>()] += std::exp(row.at("logprob").get<double>());
  }

  const std::size_t vocab = by_rank ? std::max<std::size_t>(option.ell, meta.at("remote").at("top_logprobs").get<std::size_t>())
                                    : vocabulary->size();
  MeasurementMatrix out;
  out.meta = MeasurementMeta{option, meta.at("prefix_digest").get<std::string>(),
                             meta.at("backend").get<std::string>(), 0, vocab};
  out.rows.values.resize(static_cast<Eigen::Index>(sums.size()), static_cast<Eigen::Index>(option.coord_len(vocab)));
  Eigen::Index r = 0;
  for (const auto& [token, positions] : sums) {
    std::vector<PositionDistribution> dists(option.m);
    for (std::size_t p = 0; p < option.m; ++p) {
      std::vector<std::pair<std::string, double>> entries(positions[p].begin(), positions[p].end());
      std::sort(entries.begin(), entries.end(), [](const auto& a, const auto& b) {
        return a.second != b.second ? a.second > b.second : a.first < b.first;
      });
      for (std::size_t k = 0; k < entries.size(); ++k) {
        const double prob = entries[k].second / static_cast<double>(repeats);
        if (by_rank) {
          if (k < vocab) {
            dists[p].entries.push_back({static_cast<TokenId>(k), prob});
          }
          continue;
        }
        const auto it = lookup.find(entries[k].first);
        if (it == lookup.end()) {
          throw DataError(fmt::format("token {}: response token '{}' is not in the vocabulary", token,
                                      entries[k].first));
        }
        dists[p].entries.push_back({it->second, prob});
      }
    }
    out.rows.ids.push_back(token);
    out.rows.values.row(r++) = flatten_option(dists, option, vocab).transpose();
  }
  return out;
}

namespace {

class RemoteSession : public BackendSession {
 public:
  RemoteSession(const RemoteConfig& config, const std::vector<std::string>& vocabulary)
      : config_(config), vocabulary_(vocabulary) {
    for (std::size_t i = 0; i < vocabulary_.size(); ++i) {
      lookup_.emplace(vocabulary_[i], static_cast<TokenId>(i));
    }
  }

  std::vector<PositionDistribution> distributions(const PrefixContext& prefix, TokenId token, std::size_t m,
                                                  std::size_t keep) override {
    if (prefix.is_latent()) {
      throw ConfigError("remote backend needs a token prefix");
    }
    Completion c;
    try {
      c = complete_with_logprobs(
          config_, build_prompt(config_, prefix.tokens(), token, vocabulary_.empty() ? nullptr : &vocabulary_), m);
    } catch (const HttpError& e) {
      throw BackendError(e.what(), e.retriable());
    } catch (const ResponseParseError& e) {
      throw BackendError(e.what(), false);
    } catch (const CapabilityError& e) {
      throw BackendError(e.what(), false);
    }
    std::vector<PositionDistribution> out(m);
    for (std::size_t p = 0; p < m && p < c.positions.size(); ++p) {
      const auto entries = checked_entries(c.positions[p], token);
      for (std::size_t k = 0; k < entries.size() && (keep == 0 || k < keep); ++k) {
        const double prob = std::exp(entries[k].logprob);
        if (lookup_.empty()) {
          out[p].entries.push_back({static_cast<TokenId>(k), prob});
        } else if (const auto it = lookup_.find(entries[k].token); it != lookup_.end()) {
          out[p].entries.push_back({it->second, prob});
        }
      }
    }
    return out;
  }

  std::vector<std::vector<TokenId>> sample(const PrefixContext&, TokenId, std::size_t, std::size_t,
                                           std::uint64_t) override {
    throw BackendError("remote backend reads logprobs and does not sample", false);
  }

 private:
  const RemoteConfig& config_;
  const std::vector<std::string>& vocabulary_;
  std::unordered_map<std::string, TokenId> lookup_;
};

}  // namespace

RemoteBackend::RemoteBackend(RemoteConfig config, std::size_t vocab_size, std::vector<std::string> vocabulary)
    : config_(std::move(config)), vocab_size_(vocab_size), vocabulary_(std::move(vocabulary)) {
  config_.validate();
  if (!vocabulary_.empty() && vocabulary_.size() != vocab_size_) {
    throw ConfigError(fmt::format("vocabulary has {} strings, vocab_size is {}", vocabulary_.size(), vocab_size_));
  }
}

std::unique_ptr<BackendSession> RemoteBackend::open_session() const {
  return std::make_unique<RemoteSession>(config_, vocabulary_);
}

}  // namespace tprobe
