#include "tprobe/verify/trial.hpp"

#include "tprobe/core/parallel.hpp"
#include "tprobe/core/seed.hpp"

#include <random>

namespace tprobe {

namespace {

MeasurementMapSpec reseed_measurement(MeasurementMapSpec g, std::uint64_t seed) {
  if (auto* s = std::get_if<SoftmaxReadout>(&g.kind)) {
    s->readout.seed = seed;
  } else if (auto* c = std::get_if<CustomMeasure>(&g.kind)) {
    c->seed = seed;
  }
  return g;
}

}  // namespace

SeedResult run_trial_seed(const TrialConfig& config, std::size_t index) {
  const std::uint64_t base = config.base_seed;
  SeedResult res;
  res.index = index;
  res.f_seed = derive_seed(base, {seed_tag::kMap, index});
  res.g_seed = derive_seed(base, {seed_tag::kReadout, index});
  res.rotation_seed = derive_seed(base, {seed_tag::kRotation, index});
  const std::uint64_t sample_seed = derive_seed(base, {seed_tag::kSample, index});

  SyntheticSubspaceSpec spec = config.subspace;
  if (config.rotate) {
    spec.rotation_seed = res.rotation_seed;
  }
  const std::size_t dim_x = spec.dim_x;
  const Process process(ProcessSpec{{dim_x}, config.n, SmoothMapSpec{config.f.kind, res.f_seed}});
  const MeasurementMap g = MeasurementMap::materialize(reseed_measurement(config.g, res.g_seed), dim_x);

  const Parametrization probe_param(spec);
  const SubspaceSample probe = probe_param.sample(sample_seed);

  PrefixContext prefix;
  if (config.prefix == PrefixMode::anchor) {
    prefix.entries = std::vector<Vector>(config.n - 1, probe.points.row(0).transpose());
  } else {
    std::mt19937_64 rng(derive_seed(base, {seed_tag::kPrefix, index}));
    std::normal_distribution<double> normal(0.0, 1.0);
    std::vector<Vector> pts;
    for (std::size_t i = 0; i + 1 < config.n; ++i) {
      Vector p(static_cast<Eigen::Index>(dim_x));
      for (Eigen::Index k = 0; k < p.size(); ++k) {
        p(k) = normal(rng);
      }
      pts.push_back(p);
    }
    prefix.entries = std::move(pts);
  }

  res.immersion = check_immersion(process, g, prefix, probe_param, probe.params, config.m, config.fd_step);

  SyntheticSubspaceSpec dense = spec;
  dense.sample_count = config.injectivity_samples;
  const SubspaceSample inj = Parametrization(dense).sample(sample_seed);
  Matrix image(inj.points.rows(), static_cast<Eigen::Index>(config.m * g.ell()));
  for (Eigen::Index i = 0; i < inj.points.rows(); ++i) {
    image.row(i) = process.autoregress_flat(g, process.query_window(prefix, inj.points.row(i).transpose()), config.m)
                       .transpose();
  }
  res.injectivity = check_injectivity(inj.points, image, config.collision_factor, config.separation_factor);
  res.pass = res.immersion.passes() && res.injectivity.passes();
  return res;
}

TrialReport run_generic_trial(const TrialConfig& config) {
  config.subspace.validate();
  TrialReport report;
  report.gate =
      gate_dimensions(config.subspace.intrinsic_dim(), config.m, config.g.ell, config.n, config.subspace.dim_x);
  if (!report.gate.holds()) {
    report.refused = true;
    report.refusal = report.gate.violations();
    return report;
  }
  report.seeds.resize(config.seeds);
  parallel_for(config.seeds, config.workers,
               [&](std::size_t i, std::size_t) { report.seeds[i] = run_trial_seed(config, i); });
  std::size_t passed = 0;
  for (const auto& s : report.seeds) {
    if (s.pass) {
      ++passed;
    } else {
      report.failing_seeds.push_back(s.index);
    }
  }
  report.pass_rate = config.seeds == 0 ? 0.0 : static_cast<double>(passed) / static_cast<double>(config.seeds);
  return report;
}

nlohmann::json to_json(const TrialReport& r) {
  nlohmann::json seeds = nlohmann::json::array();
  for (const auto& s : r.seeds) {
    seeds.push_back({{"index", s.index},
                     {"f_seed", s.f_seed},
                     {"g_seed", s.g_seed},
                     {"rotation_seed", s.rotation_seed},
                     {"immersion", to_json(s.immersion)},
                     {"injectivity", to_json(s.injectivity)},
                     {"pass", s.pass}});
  }
  return {{"gate", to_json(r.gate)},
          {"refused", r.refused},
          {"refusal", r.refusal},
          {"pass_rate", r.pass_rate},
          {"failing_seeds", r.failing_seeds},
          {"seeds", seeds}};
}

}  // namespace tprobe
