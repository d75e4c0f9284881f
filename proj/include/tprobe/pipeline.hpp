#pragma once

#include "tprobe/config/run_config.hpp"
#include "tprobe/dimension/strata.hpp"
#include "tprobe/probe/probe.hpp"
#include "tprobe/probe/simulated.hpp"
#include "tprobe/verify/trial.hpp"

#include <json.hpp>

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace tprobe {

/// Token coordinates for the simulated backend.
TokenTable make_token_table(const RunConfig& config);

/// Dimension of the token subspace when known (subspace tokens, or `d` on
/// CSV tokens).
std::optional<std::size_t> token_subspace_dim(const RunConfig& config);

struct SimulateOutcome {
  TokenTable table;
  std::string backend;
  std::optional<GateReport> gate;
  ProbeResult probe;
};

SimulateOutcome simulate_probe(const RunConfig& config, std::size_t workers);

TrialConfig make_trial_config(const RunConfig& config, std::size_t workers);

struct VerifyOutcome {
  TrialReport trial;
  bool passed = false;  // not refused and pass_rate >= min_pass_rate
  std::optional<RankFormulaReport> rank_formula;
  std::optional<BijectivityReport> bijectivity;
};

VerifyOutcome verify_run(const RunConfig& config, std::size_t workers);
nlohmann::json to_json(const VerifyOutcome& v);

/// Median base dimension, isolated and corner counts, and the base
/// dimension box summary.
nlohmann::json estimate_summary(const std::vector<DimensionEstimate>& estimates);

/// Stratum specs from JSON: [{"name", "size", "min_dim"?, "max_dim"?}, ...].
std::vector<StratumSpec> strata_from_json(const nlohmann::json& j);

}  // namespace tprobe
