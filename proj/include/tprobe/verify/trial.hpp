#pragma once

#include "tprobe/verify/checks.hpp"

#include <json.hpp>

#include <cstdint>
#include <string>
#include <vector>

namespace tprobe {

enum class PrefixMode { anchor, random };

/// Random (f, g) draws on a synthetic subspace. `subspace.sample_count` is
/// the number of immersion probe points; injectivity uses its own, denser
/// sample. Map seeds in `f` and `g` are replaced per trial.
struct TrialConfig {
  SyntheticSubspaceSpec subspace;
  std::size_t injectivity_samples = 1024;
  std::size_t n = 6;
  SmoothMapSpec f;
  MeasurementMapSpec g;
  std::size_t m = 4;
  std::size_t seeds = 40;
  std::uint64_t base_seed = 0;
  PrefixMode prefix = PrefixMode::anchor;
  bool rotate = true;
  double fd_step = kDefaultFdStep;
  double collision_factor = 1e-8;
  double separation_factor = 1e-3;
  std::size_t workers = 1;
};

struct SeedResult {
  std::size_t index = 0;
  std::uint64_t f_seed = 0;
  std::uint64_t g_seed = 0;
  std::uint64_t rotation_seed = 0;
  ImmersionReport immersion;
  InjectivityReport injectivity;
  bool pass = false;
};

struct TrialReport {
  GateReport gate;
  bool refused = false;
  std::string refusal;
  std::vector<SeedResult> seeds;
  double pass_rate = 0.0;
  std::vector<std::size_t> failing_seeds;
};

/// One seed of the trial: draws f, g and the rotation, then runs the
/// immersion and injectivity checks.
SeedResult run_trial_seed(const TrialConfig& config, std::size_t index);

/// All seeds in parallel. Refuses (refused = true, nothing run) when the
/// dimension gate fails.
TrialReport run_generic_trial(const TrialConfig& config);

nlohmann::json to_json(const TrialReport& r);

}  // namespace tprobe
