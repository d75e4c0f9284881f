#pragma once

#include "tprobe/dimension/estimate.hpp"
#include "tprobe/probe/option.hpp"
#include "tprobe/probe/simulated.hpp"
#include "tprobe/remote/client.hpp"
#include "tprobe/verify/trial.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <optional>
#include <vector>

namespace tprobe {

inline constexpr int kRunConfigSchema = 1;

/// Where simulated token coordinates come from: a sample of the configured
/// subspace, or a labeled CSV with ids 0..N-1.
struct TokenSource {
  enum class Kind { subspace, csv };
  Kind kind = Kind::subspace;
  std::filesystem::path path;
  std::optional<std::size_t> d;  // subspace dimension of CSV tokens, for the gate
};

struct ProbeSettings {
  SamplingMode mode = SamplingMode::analytic;
  double temperature = 1.0;
  bool discretized = false;
  TokenId neutral_token = 0;
  std::size_t max_attempts = 3;
};

struct TrialSettings {
  std::size_t seeds = 40;
  std::size_t probe_points = 64;
  std::size_t injectivity_samples = 1024;
  PrefixMode prefix = PrefixMode::anchor;
  bool rotate = true;
  double fd_step = kDefaultFdStep;
  double collision_factor = 1e-8;
  double separation_factor = 1e-3;
  double min_pass_rate = 0.95;
  bool shift_checks = false;
  std::size_t bijectivity_trials = 200;
};

struct HarvestSettings {
  TokenId first = 0;
  TokenId last = 0;
  std::vector<TokenId> prefix;
  std::size_t max_new_tokens = 0;
  std::optional<std::filesystem::path> vocabulary_path;  // one token string per line
};

/// Versioned run configuration. Map seeds left out of the document are
/// derived from the global seed when it is parsed.
struct RunConfig {
  std::uint64_t seed = 0;
  std::optional<ProcessSpec> process;
  std::optional<MeasurementMapSpec> measurement;
  std::optional<ProbeOption> option;
  std::optional<SyntheticSubspaceSpec> subspace;
  TokenSource tokens;
  ProbeSettings probe;
  TrialSettings trial;
  EstimatorConfig estimator;
  std::optional<RemoteConfig> remote;
  HarvestSettings harvest;

  const ProcessSpec& require_process() const;
  const MeasurementMapSpec& require_measurement() const;
  const ProbeOption& require_option() const;
  const SyntheticSubspaceSpec& require_subspace() const;
  const RemoteConfig& require_remote() const;
};

/// Throws ConfigError on unknown fields, a wrong schema_version or bad
/// values. `seed_override` replaces the document's seed before derived
/// seeds are filled in.
RunConfig run_config_from_json(const nlohmann::json& j, std::optional<std::uint64_t> seed_override = std::nullopt);
RunConfig load_run_config(const std::filesystem::path& path, std::optional<std::uint64_t> seed_override = std::nullopt);

/// Fully resolved document (every seed explicit); parses back to the same
/// config.
nlohmann::json run_config_to_json(const RunConfig& c);

nlohmann::json estimator_to_json(const EstimatorConfig& c);
EstimatorConfig estimator_from_json(const nlohmann::json& j);

}  // namespace tprobe
