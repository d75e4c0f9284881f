#include "tprobe/config/run_config.hpp"

#include "tprobe/core/json_fields.hpp"
#include "tprobe/core/seed.hpp"
#include "tprobe/core/table_io.hpp"
#include "tprobe/probe/probe.hpp"

#include <fmt/format.h>

namespace tprobe {

namespace {

std::vector<double> to_std(const Vector& v) { return {v.data(), v.data() + v.size()}; }

Vector vector_from(const std::vector<double>& v) {
  return Eigen::Map<const Vector>(v.data(), static_cast<Eigen::Index>(v.size()));
}

nlohmann::json matrix_json(const Matrix& m) {
  nlohmann::json rows = nlohmann::json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    rows.push_back(to_std(m.row(i).transpose()));
  }
  return rows;
}

Matrix matrix_from(const nlohmann::json& j, const std::string& where) {
  const auto rows = j.get<std::vector<std::vector<double>>>();
  if (rows.empty() || rows[0].empty()) {
    throw ConfigError(fmt::format("{}: empty matrix", where));
  }
  Matrix m(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows[0].size()));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i].size() != rows[0].size()) {
      throw ConfigError(fmt::format("{}: ragged matrix", where));
    }
    m.row(static_cast<Eigen::Index>(i)) = vector_from(rows[i]).transpose();
  }
  return m;
}

nlohmann::json map_json(const SmoothMapSpec& s) {
  struct Visitor {
    nlohmann::json operator()(const RandomMlp& p) const {
      return {{"kind", "random-mlp"},
              {"hidden", p.hidden},
              {"spectral_scale", p.spectral_scale},
              {"bias_scale", p.bias_scale}};
    }
    nlohmann::json operator()(const LinearMap& p) const {
      return {{"kind", "linear"}, {"coefficients", matrix_json(p.coefficients)}};
    }
    nlohmann::json operator()(const Projection& p) const { return {{"kind", "projection"}, {"slot", p.slot}}; }
    nlohmann::json operator()(const ConstantMap& p) const { return {{"kind", "constant"}, {"point", to_std(p.point)}}; }
    nlohmann::json operator()(const CustomTest& p) const {
      return {{"kind", "custom-test"}, {"name", p.name}, {"rank", p.rank}};
    }
  };
  nlohmann::json j = std::visit(Visitor{}, s.kind);
  j["seed"] = s.seed;
  return j;
}

SmoothMapSpec map_from(const nlohmann::json& j, std::uint64_t default_seed) {
  JsonFields f(j, "process.f");
  SmoothMapSpec s;
  const auto kind = f.required<std::string>("kind");
  if (kind == "random-mlp") {
    RandomMlp p;
    p.hidden = f.get<std::vector<std::size_t>>("hidden", p.hidden);
    p.spectral_scale = f.get<double>("spectral_scale", p.spectral_scale);
    p.bias_scale = f.get<double>("bias_scale", p.bias_scale);
    s.kind = p;
  } else if (kind == "linear") {
    s.kind = LinearMap{matrix_from(f.raw("coefficients"), "process.f.coefficients")};
  } else if (kind == "projection") {
    s.kind = Projection{f.get<std::size_t>("slot", 0)};
  } else if (kind == "constant") {
    s.kind = ConstantMap{vector_from(f.required<std::vector<double>>("point"))};
  } else if (kind == "custom-test") {
    s.kind = CustomTest{f.required<std::string>("name"), f.get<std::size_t>("rank", 0)};
  } else {
    throw ConfigError(fmt::format(
        "process.f.kind '{}' is not one of random-mlp, linear, projection, constant, custom-test", kind));
  }
  s.seed = f.get<std::uint64_t>("seed", default_seed);
  f.finish();
  return s;
}

nlohmann::json measurement_json(const MeasurementMapSpec& m) {
  struct Visitor {
    nlohmann::json operator()(const IdentityMeasure&) const { return {{"kind", "identity"}}; }
    nlohmann::json operator()(const SoftmaxReadout& p) const {
      return {{"kind", "softmax"},
              {"temperature", p.temperature},
              {"readout",
               {{"kind", p.readout.kind == ReadoutSpec::Kind::tied ? "tied" : "random"},
                {"vocab", p.readout.vocab},
                {"weight_scale", p.readout.weight_scale},
                {"bias_scale", p.readout.bias_scale},
                {"seed", p.readout.seed}}}};
    }
    nlohmann::json operator()(const CustomMeasure& p) const {
      return {{"kind", "custom"}, {"name", p.name}, {"value", p.value}, {"seed", p.seed}};
    }
  };
  nlohmann::json j = std::visit(Visitor{}, m.kind);
  j["ell"] = m.ell;
  return j;
}

MeasurementMapSpec measurement_from(const nlohmann::json& j, std::uint64_t default_seed) {
  JsonFields f(j, "measurement");
  MeasurementMapSpec m;
  m.ell = f.required<std::size_t>("ell");
  const auto kind = f.required<std::string>("kind");
  if (kind == "identity") {
    m.kind = IdentityMeasure{};
  } else if (kind == "softmax") {
    SoftmaxReadout p;
    p.temperature = f.get<double>("temperature", p.temperature);
    if (f.has("readout")) {
      JsonFields r(f.raw("readout"), "measurement.readout");
      const auto rk = r.get<std::string>("kind", "random");
      if (rk != "random" && rk != "tied") {
        throw ConfigError(fmt::format("measurement.readout.kind must be 'random' or 'tied', got '{}'", rk));
      }
      p.readout.kind = rk == "tied" ? ReadoutSpec::Kind::tied : ReadoutSpec::Kind::random;
      p.readout.vocab = r.get<std::size_t>("vocab", p.readout.vocab);
      p.readout.weight_scale = r.get<double>("weight_scale", p.readout.weight_scale);
      p.readout.bias_scale = r.get<double>("bias_scale", p.readout.bias_scale);
      p.readout.seed = r.get<std::uint64_t>("seed", default_seed);
      r.finish();
    } else {
      p.readout.seed = default_seed;
    }
    m.kind = p;
  } else if (kind == "custom") {
    CustomMeasure p;
    p.name = f.required<std::string>("name");
    p.value = f.get<double>("value", p.value);
    p.seed = f.get<std::uint64_t>("seed", default_seed);
    m.kind = p;
  } else {
    throw ConfigError(fmt::format("measurement.kind '{}' is not one of identity, softmax, custom", kind));
  }
  f.finish();
  return m;
}

std::string layout_name(Layout l) { return l == Layout::grid ? "grid" : "random"; }

nlohmann::json subspace_json(const SyntheticSubspaceSpec& s) {
  nlohmann::json j = {{"shape", shape_name(s.shape)},
                      {"k", s.k},
                      {"radius", s.radius},
                      {"circle_radius", s.circle_radius},
                      {"sample_count", s.sample_count},
                      {"layout", layout_name(s.layout)}};
  if (s.rotation_seed) {
    j["rotation_seed"] = *s.rotation_seed;
  }
  return j;
}

SyntheticSubspaceSpec subspace_from(const nlohmann::json& j, std::size_t dim_x) {
  JsonFields f(j, "subspace");
  SyntheticSubspaceSpec s;
  s.shape = parse_shape(f.required<std::string>("shape"));
  s.k = f.get<std::size_t>("k", s.k);
  s.radius = f.get<double>("radius", s.radius);
  s.circle_radius = f.get<double>("circle_radius", s.circle_radius);
  s.sample_count = f.get<std::size_t>("sample_count", s.sample_count);
  const auto layout = f.get<std::string>("layout", "grid");
  if (layout != "grid" && layout != "random") {
    throw ConfigError(fmt::format("subspace.layout must be 'grid' or 'random', got '{}'", layout));
  }
  s.layout = layout == "grid" ? Layout::grid : Layout::random;
  if (f.has("rotation_seed")) {
    s.rotation_seed = f.required<std::uint64_t>("rotation_seed");
  }
  f.finish();
  s.dim_x = dim_x;
  return s;
}

}  // namespace

nlohmann::json estimator_to_json(const EstimatorConfig& c) {
  return {{"num_radii", c.num_radii},
          {"min_count", c.min_count},
          {"max_fraction", c.max_fraction},
          {"min_residual_reduction", c.min_residual_reduction},
          {"min_slope_gap", c.min_slope_gap},
          {"min_segment", c.min_segment},
          {"min_corner_radii", c.min_corner_radii},
          {"min_neighbors", c.min_neighbors},
          {"reference_quantile", c.reference_quantile}};
}

EstimatorConfig estimator_from_json(const nlohmann::json& j) {
  JsonFields f(j, "estimator");
  EstimatorConfig c;
  c.num_radii = f.get<std::size_t>("num_radii", c.num_radii);
  c.min_count = f.get<std::uint64_t>("min_count", c.min_count);
  c.max_fraction = f.get<double>("max_fraction", c.max_fraction);
  c.min_residual_reduction = f.get<double>("min_residual_reduction", c.min_residual_reduction);
  c.min_slope_gap = f.get<double>("min_slope_gap", c.min_slope_gap);
  c.min_segment = f.get<std::size_t>("min_segment", c.min_segment);
  c.min_corner_radii = f.get<std::size_t>("min_corner_radii", c.min_corner_radii);
  c.min_neighbors = f.get<std::uint64_t>("min_neighbors", c.min_neighbors);
  c.reference_quantile = f.get<double>("reference_quantile", c.reference_quantile);
  f.finish();
  if (c.num_radii < 8 || !(c.max_fraction > 0.0 && c.max_fraction <= 1.0) ||
      !(c.reference_quantile > 0.0 && c.reference_quantile < 1.0) || c.min_segment < 2) {
    throw ConfigError("estimator: need num_radii >= 8, max_fraction in (0, 1], reference_quantile in (0, 1), "
                      "min_segment >= 2");
  }
  return c;
}

const ProcessSpec& RunConfig::require_process() const {
  if (!process) {
    throw ConfigError("config needs a 'process' section");
  }
  return *process;
}

const MeasurementMapSpec& RunConfig::require_measurement() const {
  if (!measurement) {
    throw ConfigError("config needs a 'measurement' section");
  }
  return *measurement;
}

const ProbeOption& RunConfig::require_option() const {
  if (!option) {
    throw ConfigError("config needs an 'option' section");
  }
  return *option;
}

const SyntheticSubspaceSpec& RunConfig::require_subspace() const {
  if (!subspace) {
    throw ConfigError("config needs a 'subspace' section");
  }
  return *subspace;
}

const RemoteConfig& RunConfig::require_remote() const {
  if (!remote) {
    throw ConfigError("config needs a 'remote' section");
  }
  return *remote;
}

RunConfig run_config_from_json(const nlohmann::json& j, std::optional<std::uint64_t> seed_override) {
  JsonFields f(j, "config");
  const int version = f.required<int>("schema_version");
  if (version != kRunConfigSchema) {
    throw ConfigError(fmt::format("schema_version {} is not supported (expected {})", version, kRunConfigSchema));
  }
  RunConfig c;
  const auto document_seed = f.get<std::uint64_t>("seed", 0);
  c.seed = seed_override.value_or(document_seed);

  if (f.has("process")) {
    JsonFields p(f.raw("process"), "process");
    ProcessSpec ps;
    ps.n = p.required<std::size_t>("n");
    ps.space.dim_x = p.required<std::size_t>("dim_x");
    ps.f = p.has("f") ? map_from(p.raw("f"), derive_seed(c.seed, {seed_tag::kMap}))
                      : SmoothMapSpec{RandomMlp{}, derive_seed(c.seed, {seed_tag::kMap})};
    p.finish();
    if (ps.n == 0 || ps.space.dim_x == 0) {
      throw ConfigError("process.n and process.dim_x must be >= 1");
    }
    c.process = ps;
  }
  if (f.has("measurement")) {
    c.measurement = measurement_from(f.raw("measurement"), derive_seed(c.seed, {seed_tag::kReadout}));
  }
  if (f.has("option")) {
    c.option = option_from_json(f.raw("option"));
  }
  if (f.has("subspace")) {
    if (!c.process) {
      throw ConfigError("the 'subspace' section needs 'process' for dim_x");
    }
    c.subspace = subspace_from(f.raw("subspace"), c.process->space.dim_x);
    c.subspace->validate();
  }
  if (f.has("tokens")) {
    JsonFields t(f.raw("tokens"), "tokens");
    const auto source = t.required<std::string>("source");
    if (source == "subspace") {
      c.tokens.kind = TokenSource::Kind::subspace;
    } else if (source == "csv") {
      c.tokens.kind = TokenSource::Kind::csv;
      c.tokens.path = t.required<std::string>("path");
      if (t.has("d")) {
        c.tokens.d = t.required<std::size_t>("d");
      }
    } else {
      throw ConfigError(fmt::format("tokens.source must be 'subspace' or 'csv', got '{}'", source));
    }
    t.finish();
  }
  if (f.has("probe")) {
    JsonFields p(f.raw("probe"), "probe");
    const auto mode = p.get<std::string>("mode", "analytic");
    if (mode != "analytic" && mode != "empirical") {
      throw ConfigError(fmt::format("probe.mode must be 'analytic' or 'empirical', got '{}'", mode));
    }
    c.probe.mode = mode == "analytic" ? SamplingMode::analytic : SamplingMode::empirical;
    c.probe.temperature = p.get<double>("temperature", c.probe.temperature);
    c.probe.discretized = p.get<bool>("discretized", c.probe.discretized);
    c.probe.neutral_token = p.get<TokenId>("neutral_token", c.probe.neutral_token);
    c.probe.max_attempts = p.get<std::size_t>("max_attempts", c.probe.max_attempts);
    p.finish();
    if (!(c.probe.temperature > 0.0) || c.probe.max_attempts == 0) {
      throw ConfigError("probe.temperature must be positive and probe.max_attempts >= 1");
    }
  }
  if (f.has("trial")) {
    JsonFields t(f.raw("trial"), "trial");
    TrialSettings& s = c.trial;
    s.seeds = t.get<std::size_t>("seeds", s.seeds);
    s.probe_points = t.get<std::size_t>("probe_points", s.probe_points);
    s.injectivity_samples = t.get<std::size_t>("injectivity_samples", s.injectivity_samples);
    const auto prefix = t.get<std::string>("prefix", "anchor");
    if (prefix != "anchor" && prefix != "random") {
      throw ConfigError(fmt::format("trial.prefix must be 'anchor' or 'random', got '{}'", prefix));
    }
    s.prefix = prefix == "anchor" ? PrefixMode::anchor : PrefixMode::random;
    s.rotate = t.get<bool>("rotate", s.rotate);
    s.fd_step = t.get<double>("fd_step", s.fd_step);
    s.collision_factor = t.get<double>("collision_factor", s.collision_factor);
    s.separation_factor = t.get<double>("separation_factor", s.separation_factor);
    s.min_pass_rate = t.get<double>("min_pass_rate", s.min_pass_rate);
    s.shift_checks = t.get<bool>("shift_checks", s.shift_checks);
    s.bijectivity_trials = t.get<std::size_t>("bijectivity_trials", s.bijectivity_trials);
    t.finish();
    if (s.probe_points == 0 || s.injectivity_samples < 2 || !(s.fd_step > 0.0)) {
      throw ConfigError("trial: need probe_points >= 1, injectivity_samples >= 2, fd_step > 0");
    }
  }
  if (f.has("estimator")) {
    c.estimator = estimator_from_json(f.raw("estimator"));
  }
  if (f.has("remote")) {
    c.remote = remote_config_from_json(f.raw("remote"));
  }
  if (f.has("harvest")) {
    JsonFields h(f.raw("harvest"), "harvest");
    c.harvest.first = h.get<TokenId>("first", 0);
    c.harvest.last = h.required<TokenId>("last");
    c.harvest.prefix = h.get<std::vector<TokenId>>("prefix", {});
    c.harvest.max_new_tokens = h.get<std::size_t>("max_new_tokens", 0);
    if (h.has("vocabulary_path")) {
      c.harvest.vocabulary_path = h.required<std::string>("vocabulary_path");
    }
    h.finish();
  }
  f.finish();
  return c;
}

RunConfig load_run_config(const std::filesystem::path& path, std::optional<std::uint64_t> seed_override) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_file(path));
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(fmt::format("{}: {}", path.string(), e.what()));
  }
  return run_config_from_json(j, seed_override);
}

nlohmann::json run_config_to_json(const RunConfig& c) {
  nlohmann::json j = {{"schema_version", kRunConfigSchema}, {"seed", c.seed}};
  if (c.process) {
    j["process"] = {{"n", c.process->n}, {"dim_x", c.process->space.dim_x}, {"f", map_json(c.process->f)}};
  }
  if (c.measurement) {
    j["measurement"] = measurement_json(*c.measurement);
  }
  if (c.option) {
    j["option"] = option_to_json(*c.option);
  }
  if (c.subspace) {
    j["subspace"] = subspace_json(*c.subspace);
  }
  if (c.tokens.kind == TokenSource::Kind::subspace) {
    j["tokens"] = {{"source", "subspace"}};
  } else {
    j["tokens"] = {{"source", "csv"}, {"path", c.tokens.path.string()}};
    if (c.tokens.d) {
      j["tokens"]["d"] = *c.tokens.d;
    }
  }
  j["probe"] = {{"mode", c.probe.mode == SamplingMode::analytic ? "analytic" : "empirical"},
                {"temperature", c.probe.temperature},
                {"discretized", c.probe.discretized},
                {"neutral_token", c.probe.neutral_token},
                {"max_attempts", c.probe.max_attempts}};
  const TrialSettings& t = c.trial;
  j["trial"] = {{"seeds", t.seeds},
                {"probe_points", t.probe_points},
                {"injectivity_samples", t.injectivity_samples},
                {"prefix", t.prefix == PrefixMode::anchor ? "anchor" : "random"},
                {"rotate", t.rotate},
                {"fd_step", t.fd_step},
                {"collision_factor", t.collision_factor},
                {"separation_factor", t.separation_factor},
                {"min_pass_rate", t.min_pass_rate},
                {"shift_checks", t.shift_checks},
                {"bijectivity_trials", t.bijectivity_trials}};
  j["estimator"] = estimator_to_json(c.estimator);
  if (c.remote) {
    j["remote"] = remote_config_to_json(*c.remote);
    j["harvest"] = {{"first", c.harvest.first},
                    {"last", c.harvest.last},
                    {"prefix", c.harvest.prefix},
                    {"max_new_tokens", c.harvest.max_new_tokens}};
    if (c.harvest.vocabulary_path) {
      j["harvest"]["vocabulary_path"] = c.harvest.vocabulary_path->string();
    }
  }
  return j;
}

}  // namespace tprobe
