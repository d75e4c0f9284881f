#pragma once

#include "tprobe/probe/backend.hpp"
#include "tprobe/probe/probe.hpp"
#include "tprobe/remote/client.hpp"

#include <json.hpp>

#include <filesystem>
#include <set>
#include <string>
#include <vector>

namespace tprobe {

/// Files kept in a harvest directory.
struct HarvestPaths {
  std::filesystem::path dir;
  std::filesystem::path rows() const { return dir / "rows.jsonl"; }
  std::filesystem::path responses() const { return dir / "responses.jsonl"; }
  std::filesystem::path state() const { return dir / "state.json"; }
  std::filesystem::path skipped() const { return dir / "skipped.json"; }
  std::filesystem::path meta() const { return dir / "meta.json"; }
};

/// Resume state. rows_bytes / responses_bytes are the committed file
/// lengths; anything past them is an interrupted write.
struct HarvestState {
  std::string config_digest;
  std::set<TokenId> completed;
  std::uint64_t rows_bytes = 0;
  std::uint64_t responses_bytes = 0;
};

nlohmann::json state_to_json(const HarvestState& s);
HarvestState state_from_json(const nlohmann::json& j);

struct HarvestRequest {
  TokenId first = 0;  // token ids [first, last)
  TokenId last = 0;
  ProbeOption option;
  std::vector<TokenId> prefix;
  std::filesystem::path out_dir;
  std::size_t max_new_tokens = 0;  // stop after this many new groups (0 = no limit)
  const std::vector<std::string>* vocabulary = nullptr;
};

struct HarvestSummary {
  std::size_t already_completed = 0;
  std::size_t new_tokens = 0;
  std::size_t rows_written = 0;
  std::uint64_t repaired_bytes = 0;
  std::size_t peak_in_flight = 0;
  std::vector<ProbeFailure> skipped;
};

/// Digest of everything that shapes harvested rows (not timeouts,
/// concurrency or retry policy).
std::string harvest_digest(const RemoteConfig& config, const HarvestRequest& request);

/// Harvests per-position top logprobs for every pending token, appending
/// one JSONL row {token_id, repeat, position, rank, token, logprob} per
/// entry. Token groups are appended in ascending id order whatever the
/// concurrency, and committed to state.json only after their rows are
/// on disk. Resuming truncates uncommitted bytes and skips completed tokens;
/// a different config digest is a ConfigError. Tokens whose requests fail
/// persistently go to skipped.json and are retried on the next run.
HarvestSummary harvest(const RemoteConfig& config, const HarvestRequest& request);

/// Measurement matrix from a harvest directory. Repeats are averaged per
/// (position, token string). Option 1 needs only the sorted values; Options
/// 2 and 3 map token strings through `vocabulary`.
MeasurementMatrix harvest_to_matrix(const std::filesystem::path& dir, const ProbeOption& option,
                                    const std::vector<std::string>* vocabulary = nullptr);

/// ProcessBackend over a completions endpoint. Distributions come from
/// logprobs; sampling is not offered.
class RemoteBackend : public ProcessBackend {
 public:
  RemoteBackend(RemoteConfig config, std::size_t vocab_size, std::vector<std::string> vocabulary = {});

  std::string identifier() const override { return "remote:" + config_.model; }
  std::size_t vocab_size() const override { return vocab_size_; }
  bool provides_distributions() const override { return true; }
  std::unique_ptr<BackendSession> open_session() const override;

 private:
  RemoteConfig config_;
  std::size_t vocab_size_;
  std::vector<std::string> vocabulary_;
};

}  // namespace tprobe
