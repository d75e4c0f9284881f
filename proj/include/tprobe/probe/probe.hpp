#pragma once

#include "tprobe/core/table_io.hpp"
#include "tprobe/probe/backend.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace tprobe {

struct MeasurementMeta {
  ProbeOption option;
  std::string prefix_digest;
  std::string backend;
  std::uint64_t seed = 0;
  std::size_t vocab = 0;
};

/// Recovered coordinates, one row per token id in ascending order.
struct MeasurementMatrix {
  LabeledRows rows;
  MeasurementMeta meta;

  std::size_t coord_len() const noexcept { return static_cast<std::size_t>(rows.values.cols()); }
  /// Throws DataIntegrityError if any row breaks the option's invariants.
  void validate() const;
};

struct ProbeFailure {
  TokenId token = 0;
  std::string kind;
  std::string message;
  std::size_t attempts = 0;
};

struct ProbeRunOptions {
  std::uint64_t seed = 0;
  std::size_t workers = 1;
  std::size_t max_attempts = 3;
};

struct ProbeResult {
  MeasurementMatrix matrix;
  std::vector<ProbeFailure> missing;
};

/// Seed of token `token`'s repeat loop under run seed `seed`.
std::uint64_t token_seed(std::uint64_t seed, TokenId token);

/// The probing loop for a single token: query (prefix..., token), collect m
/// response positions (by distribution or `repeats` samples) and flatten per
/// the option. Backend failures become ProbeError; invalid probabilities
/// become DataIntegrityError.
Vector probe_token(BackendSession& session, const ProcessBackend& backend, TokenId token, const ProbeOption& option,
                   const PrefixContext& prefix, std::uint64_t seed);
Vector probe_token(const ProcessBackend& backend, TokenId token, const ProbeOption& option,
                   const PrefixContext& prefix, std::uint64_t seed);

/// probe_token over a token set on a worker pool. Rows are keyed by token id
/// and do not depend on worker count. Retriable failures are retried up to
/// max_attempts; tokens that still fail are listed in `missing`.
ProbeResult probe_all(const ProcessBackend& backend, std::vector<TokenId> tokens, const ProbeOption& option,
                      const PrefixContext& prefix, const ProbeRunOptions& run);

nlohmann::json option_to_json(const ProbeOption& option);
ProbeOption option_from_json(const nlohmann::json& j);
nlohmann::json meta_to_json(const MeasurementMeta& meta);
MeasurementMeta meta_from_json(const nlohmann::json& j);

/// `<stem>.csv` plus `<stem>.meta.json` sidecar.
void write_measurement_matrix(const std::filesystem::path& csv_path, const MeasurementMatrix& matrix);
std::filesystem::path sidecar_path(const std::filesystem::path& csv_path);
nlohmann::json failures_to_json(const std::vector<ProbeFailure>& missing);

}  // namespace tprobe
