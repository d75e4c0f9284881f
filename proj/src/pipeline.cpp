#include "tprobe/pipeline.hpp"

#include "tprobe/core/json_fields.hpp"
#include "tprobe/core/seed.hpp"
#include "tprobe/core/table_io.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <random>

namespace tprobe {

TokenTable make_token_table(const RunConfig& config) {
  if (config.tokens.kind == TokenSource::Kind::subspace) {
    const SubspaceSample s = sample_subspace(config.require_subspace(), derive_seed(config.seed, {seed_tag::kSample}));
    return TokenTable(s.points);
  }
  const LabeledRows rows = read_labeled_csv(config.tokens.path);
  std::vector<std::size_t> order(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    order[i] = i;
  }
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return rows.ids[a] < rows.ids[b]; });
  Matrix coords(rows.values.rows(), rows.values.cols());
  for (std::size_t i = 0; i < order.size(); ++i) {
    if (rows.ids[order[i]] != i) {
      throw DataError(fmt::format("{}: token ids must be exactly 0..{}", config.tokens.path.string(), rows.size() - 1));
    }
    coords.row(static_cast<Eigen::Index>(i)) = rows.values.row(static_cast<Eigen::Index>(order[i]));
  }
  if (static_cast<std::size_t>(coords.cols()) != config.require_process().space.dim_x) {
    throw ConfigError(fmt::format("{} has {} columns, process.dim_x is {}", config.tokens.path.string(), coords.cols(),
                                  config.require_process().space.dim_x));
  }
  return TokenTable(coords);
}

std::optional<std::size_t> token_subspace_dim(const RunConfig& config) {
  if (config.tokens.kind == TokenSource::Kind::subspace) {
    return config.require_subspace().intrinsic_dim();
  }
  return config.tokens.d;
}

SimulateOutcome simulate_probe(const RunConfig& config, std::size_t workers) {
  const ProcessSpec& process = config.require_process();
  const ProbeOption& option = config.require_option();
  SimulateOutcome out;
  out.table = make_token_table(config);
  const SimulatedBackend backend(SimulatedBackendSpec{process, config.require_measurement(), config.probe.mode,
                                                      config.probe.temperature, config.probe.discretized},
                                 out.table);
  out.backend = backend.identifier();
  if (const auto d = token_subspace_dim(config)) {
    out.gate = gate_dimensions(*d, option.m, option.gate_ell(backend.vocab_size()), process.n, process.space.dim_x);
  }
  if (config.probe.neutral_token >= backend.vocab_size()) {
    throw ConfigError(fmt::format("probe.neutral_token {} outside vocabulary of {}", config.probe.neutral_token,
                                  backend.vocab_size()));
  }
  std::vector<TokenId> tokens(backend.vocab_size());
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    tokens[i] = static_cast<TokenId>(i);
  }
  out.probe = probe_all(backend, tokens, option, backend.neutral_prefix(config.probe.neutral_token),
                        ProbeRunOptions{config.seed, workers, config.probe.max_attempts});
  return out;
}

TrialConfig make_trial_config(const RunConfig& config, std::size_t workers) {
  const ProcessSpec& process = config.require_process();
  TrialConfig t;
  t.subspace = config.require_subspace();
  t.subspace.sample_count = config.trial.probe_points;
  t.subspace.rotation_seed.reset();
  t.injectivity_samples = config.trial.injectivity_samples;
  t.n = process.n;
  t.f = process.f;
  t.g = config.require_measurement();
  if (auto* readout = std::get_if<SoftmaxReadout>(&t.g.kind);
      readout != nullptr && readout->readout.kind == ReadoutSpec::Kind::random && readout->readout.vocab == 0) {
    readout->readout.vocab = config.require_subspace().sample_count;
  }
  t.m = config.require_option().m;
  t.seeds = config.trial.seeds;
  t.base_seed = config.seed;
  t.prefix = config.trial.prefix;
  t.rotate = config.trial.rotate;
  t.fd_step = config.trial.fd_step;
  t.collision_factor = config.trial.collision_factor;
  t.separation_factor = config.trial.separation_factor;
  t.workers = workers;
  return t;
}

VerifyOutcome verify_run(const RunConfig& config, std::size_t workers) {
  VerifyOutcome v;
  v.trial = run_generic_trial(make_trial_config(config, workers));
  v.passed = !v.trial.refused && v.trial.pass_rate >= config.trial.min_pass_rate;
  if (config.trial.shift_checks) {
    const ProcessSpec& p = config.require_process();
    std::mt19937_64 rng(derive_seed(config.seed, {seed_tag::kSample, 1}));
    std::normal_distribution<double> normal(0.0, 1.0);
    Vector w(static_cast<Eigen::Index>(p.n * p.space.dim_x));
    for (Eigen::Index i = 0; i < w.size(); ++i) {
      w(i) = normal(rng);
    }
    v.rank_formula = check_rank_formula(p.f, p.n, p.space.dim_x, ContextWindow(w, p.space.dim_x));
    v.bijectivity = check_shift_bijectivity(p.f, p.n, p.space.dim_x, config.trial.bijectivity_trials, config.seed);
  }
  return v;
}

nlohmann::json to_json(const VerifyOutcome& v) {
  nlohmann::json j = {{"verdict", v.trial.refused ? "refused" : (v.passed ? "pass" : "fail")},
                      {"trial", to_json(v.trial)}};
  if (v.rank_formula) {
    j["shift_checks"]["rank_formula"] = to_json(*v.rank_formula);
  }
  if (v.bijectivity) {
    j["shift_checks"]["bijectivity"] = to_json(*v.bijectivity);
  }
  return j;
}

nlohmann::json estimate_summary(const std::vector<DimensionEstimate>& estimates) {
  std::vector<double> base;
  std::vector<double> corners;
  std::size_t isolated = 0;
  for (const auto& e : estimates) {
    base.push_back(e.base_dim);
    isolated += e.isolated ? 1 : 0;
    if (e.corner_radius) {
      corners.push_back(*e.corner_radius);
    }
  }
  nlohmann::json j = {{"count", estimates.size()}, {"isolated", isolated}, {"corners", corners.size()}};
  if (!base.empty()) {
    const BoxSummary box = box_summary(base);
    j["median_base_dim"] = box.median;
    j["base_dim_box"] = box_to_json(box);
  }
  if (!corners.empty()) {
    std::sort(corners.begin(), corners.end());
    j["median_corner_radius"] = quantile_linear(corners, 0.5);
  }
  return j;
}

std::vector<StratumSpec> strata_from_json(const nlohmann::json& j) {
  if (!j.is_array()) {
    throw ConfigError("strata: expected an array of {name, size, min_dim?, max_dim?}");
  }
  std::vector<StratumSpec> out;
  for (const auto& item : j) {
    JsonFields f(item, "strata[]");
    StratumSpec s;
    s.name = f.required<std::string>("name");
    s.size = f.required<std::size_t>("size");
    if (f.has("min_dim")) {
      s.min_dim = f.required<double>("min_dim");
    }
    if (f.has("max_dim")) {
      s.max_dim = f.required<double>("max_dim");
    }
    f.finish();
    out.push_back(s);
  }
  return out;
}

}  // namespace tprobe
