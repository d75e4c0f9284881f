#include "manifest.hpp"

#include "tprobe/core/errors.hpp"
#include "tprobe/core/table_io.hpp"
#include "tprobe/dimension/strata.hpp"
#include "tprobe/pipeline.hpp"
#include "tprobe/remote/harvest.hpp"

#include <CLI11.hpp>
#include <fmt/format.h>

#include <fstream>
#include <iostream>
#include <optional>

namespace {

using namespace tprobe;
using cli::Manifest;

constexpr int kExitOk = 0;
constexpr int kExitNegative = 1;
constexpr int kExitUsage = 2;
constexpr int kExitRuntime = 3;

struct CommonArgs {
  std::string config;
  std::string out;
  std::optional<std::uint64_t> seed;
  std::size_t workers = 1;
};

void add_common(CLI::App* cmd, CommonArgs& a, bool needs_config) {
  auto* c = cmd->add_option("--config", a.config, "run configuration (JSON)");
  if (needs_config) {
    c->required()->check(CLI::ExistingFile);
  }
  cmd->add_option("--out", a.out, "output directory")->required();
  cmd->add_option("--seed", a.seed, "global seed (overrides the config)");
  cmd->add_option("--workers", a.workers, "worker threads")->check(CLI::PositiveNumber);
}

std::optional<RunConfig> optional_config(const CommonArgs& a) {
  if (a.config.empty()) {
    return std::nullopt;
  }
  return load_run_config(a.config, a.seed);
}

void write_json(const std::filesystem::path& p, const nlohmann::json& j) { write_file_atomic(p, j.dump(2) + "\n"); }

std::vector<std::string> read_lines(const std::filesystem::path& p) {
  std::ifstream in(p);
  if (!in) {
    throw DataError(fmt::format("cannot open {}", p.string()));
  }
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    lines.push_back(line);
  }
  return lines;
}

int cmd_gate(std::uint64_t d, std::uint64_t m, std::uint64_t ell, std::uint64_t n, std::uint64_t dim_x, bool json) {
  const GateReport g = gate_dimensions(d, m, ell, n, dim_x);
  if (json) {
    std::cout << to_json(g).dump(2) << "\n";
  } else {
    std::cout << g.describe() << "\n";
    std::cout << "gate " << (g.holds() ? "holds" : "fails") << ": " << g.summary() << "\n";
    if (!g.holds()) {
      std::cout << g.violations() << "\n";
    }
  }
  return g.holds() ? kExitOk : kExitNegative;
}

int cmd_simulate_probe(const CommonArgs& a) {
  const RunConfig config = load_run_config(a.config, a.seed);
  const std::filesystem::path out = a.out;
  std::filesystem::create_directories(out);
  const SimulateOutcome r = simulate_probe(config, a.workers);

  write_measurement_matrix(out / "measurements.csv", r.probe.matrix);
  LabeledRows tokens;
  tokens.values = r.table.coordinates();
  for (std::size_t i = 0; i < r.table.vocab_size(); ++i) {
    tokens.ids.push_back(static_cast<TokenId>(i));
  }
  write_labeled_csv(out / "tokens.csv", tokens);
  write_json(out / "missing.json", failures_to_json(r.probe.missing));
  nlohmann::json summary = {{"backend", r.backend},
                            {"tokens", r.table.vocab_size()},
                            {"probed", r.probe.matrix.rows.size()},
                            {"missing", r.probe.missing.size()},
                            {"coord_len", r.probe.matrix.coord_len()}};
  if (r.gate) {
    summary["gate"] = to_json(*r.gate);
  }
  write_json(out / "summary.json", summary);

  Manifest m{"simulate-probe", {}, run_config_to_json(config), {a.config},
             {"measurements.csv", "measurements.meta.json", "tokens.csv", "missing.json", "summary.json"}};
  if (config.tokens.kind == TokenSource::Kind::csv) {
    m.inputs.push_back(config.tokens.path);
  }
  write_manifest(out, m);

  std::cout << fmt::format("probed {} of {} tokens ({} coordinates each) with {}\n", r.probe.matrix.rows.size(),
                           r.table.vocab_size(), r.probe.matrix.coord_len(), r.backend);
  if (r.gate) {
    std::cout << "gate " << (r.gate->holds() ? "holds" : "fails") << ": " << r.gate->summary() << "\n";
    if (!r.gate->holds()) {
      std::cerr << "warning: dimension gate fails; recovery up to homeomorphism is not guaranteed\n";
    }
  }
  return r.probe.missing.empty() ? kExitOk : kExitNegative;
}

int cmd_verify(const CommonArgs& a) {
  const RunConfig config = load_run_config(a.config, a.seed);
  const std::filesystem::path out = a.out;
  std::filesystem::create_directories(out);
  const VerifyOutcome v = verify_run(config, a.workers);
  write_json(out / "verify.json", to_json(v));
  write_manifest(out, Manifest{"verify", {}, run_config_to_json(config), {a.config}, {"verify.json"}});
  if (v.trial.refused) {
    std::cout << "refused: " << v.trial.gate.describe() << "\n" << v.trial.refusal << "\n";
    return kExitNegative;
  }
  std::cout << fmt::format("gate holds: {}\n", v.trial.gate.summary());
  std::cout << fmt::format("{} of {} seeds pass (rate {:.3f}, required {:.3f})\n",
                           v.trial.seeds.size() - v.trial.failing_seeds.size(), v.trial.seeds.size(),
                           v.trial.pass_rate, config.trial.min_pass_rate);
  if (v.rank_formula) {
    std::cout << fmt::format("rank formula: rank {} vs {} ({})\n", v.rank_formula->rank_shift,
                             v.rank_formula->expected, v.rank_formula->holds() ? "holds" : "fails");
  }
  if (v.bijectivity) {
    std::cout << fmt::format("shift collisions: {} in {} trials\n", v.bijectivity->collisions, v.bijectivity->trials);
  }
  return v.passed ? kExitOk : kExitNegative;
}

int cmd_estimate_dim(const CommonArgs& a, const std::string& in) {
  const auto config = optional_config(a);
  const EstimatorConfig est = config ? config->estimator : EstimatorConfig{};
  const std::filesystem::path out = a.out;
  std::filesystem::create_directories(out);
  const DistanceIndex index(read_labeled_csv(in));
  const EstimateRun run = estimate_all(index, est, a.workers);
  write_file_atomic(out / "estimates.csv", estimates_csv_text(run.estimates));
  write_file_atomic(out / "curves.csv", curves_csv_text(run.curves));
  const nlohmann::json summary = estimate_summary(run.estimates);
  write_json(out / "summary.json", summary);

  Manifest m{"estimate-dim", {{"in", in}}, nullptr, {in}, {"estimates.csv", "curves.csv", "summary.json"}};
  if (config) {
    m.config = run_config_to_json(*config);
    m.inputs.push_back(a.config);
  } else {
    m.args["estimator"] = estimator_to_json(est);
  }
  write_manifest(out, m);
  std::cout << fmt::format("{} points, median base dimension {}, {} isolated, {} with a corner\n",
                           run.estimates.size(), summary.value("median_base_dim", 0.0), summary["isolated"].get<int>(),
                           summary["corners"].get<int>());
  return kExitOk;
}

int cmd_compare(const CommonArgs& a, const std::string& path_a, const std::string& path_b,
                const std::string& strata_path) {
  const std::filesystem::path out = a.out;
  std::filesystem::create_directories(out);
  const std::uint64_t seed = a.seed.value_or(0);
  const auto dims_a = base_dims(read_estimates_csv(path_a));
  const auto dims_b = base_dims(read_estimates_csv(path_b));
  std::vector<StratumSpec> specs;
  if (strata_path.empty()) {
    std::size_t shared = 0;
    for (const auto& [id, v] : dims_a) {
      shared += dims_b.contains(id) ? 1 : 0;
    }
    if (shared != dims_a.size()) {
      throw DataError("without --strata every id in --a must also be in --b");
    }
    specs.push_back({"all", dims_a.size(), std::nullopt, std::nullopt});
  } else {
    specs = strata_from_json(nlohmann::json::parse(read_file(strata_path)));
  }
  const auto strata = stratified_sample(dims_a, specs, seed);
  const StrataComparison cmp = compare_estimates(dims_a, dims_b, strata);
  nlohmann::json j = comparison_to_json(cmp);
  nlohmann::json chosen = nlohmann::json::object();
  for (const auto& s : strata) {
    chosen[s.name] = s.ids;
  }
  j["sampled_ids"] = chosen;
  write_json(out / "comparison.json", j);

  Manifest m{"compare", {{"a", path_a}, {"b", path_b}, {"seed", seed}}, nullptr, {path_a, path_b}, {"comparison.json"}};
  if (!strata_path.empty()) {
    m.args["strata"] = strata_path;
    m.inputs.push_back(strata_path);
  }
  write_manifest(out, m);
  std::cout << fmt::format("bias {} (median b - a), spread ratio {}\n", cmp.bias, cmp.spread_ratio);
  return kExitOk;
}

int cmd_harvest(const CommonArgs& a, std::optional<std::size_t> max_new) {
  const RunConfig config = load_run_config(a.config, a.seed);
  const RemoteConfig& remote = config.require_remote();
  const ProbeOption& option = config.require_option();
  std::optional<std::vector<std::string>> vocabulary;
  if (config.harvest.vocabulary_path) {
    vocabulary = read_lines(*config.harvest.vocabulary_path);
  }
  HarvestRequest req;
  req.first = config.harvest.first;
  req.last = config.harvest.last;
  req.option = option;
  req.prefix = config.harvest.prefix;
  req.out_dir = a.out;
  req.max_new_tokens = max_new.value_or(config.harvest.max_new_tokens);
  req.vocabulary = vocabulary ? &*vocabulary : nullptr;
  const HarvestSummary s = harvest(remote, req);

  const std::filesystem::path out = a.out;
  std::vector<std::string> outputs{"rows.jsonl", "responses.jsonl", "state.json", "skipped.json", "meta.json"};
  if (option.variant == ProbeOption::Variant::option1 || vocabulary) {
    write_measurement_matrix(out / "measurements.csv",
                             harvest_to_matrix(out, option, vocabulary ? &*vocabulary : nullptr));
    outputs.insert(outputs.end(), {"measurements.csv", "measurements.meta.json"});
  }
  write_json(out / "summary.json", {{"already_completed", s.already_completed},
                                    {"new_tokens", s.new_tokens},
                                    {"rows_written", s.rows_written},
                                    {"repaired_bytes", s.repaired_bytes},
                                    {"peak_in_flight", s.peak_in_flight},
                                    {"skipped", s.skipped.size()}});
  outputs.push_back("summary.json");
  Manifest m{"harvest", {}, run_config_to_json(config), {a.config}, outputs};
  if (config.harvest.vocabulary_path) {
    m.inputs.push_back(*config.harvest.vocabulary_path);
  }
  write_manifest(out, m);
  std::cout << fmt::format("{} tokens already done, {} new, {} skipped; {} rows written\n", s.already_completed,
                           s.new_tokens, s.skipped.size(), s.rows_written);
  if (s.repaired_bytes > 0) {
    std::cout << fmt::format("dropped {} uncommitted bytes from an interrupted run\n", s.repaired_bytes);
  }
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Token subspace probing: gate checks, simulated probing, verification, dimension estimation, "
               "comparison and remote harvesting"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(TPROBE_VERSION));

  std::uint64_t d = 0;
  std::uint64_t m = 0;
  std::uint64_t ell = 0;
  std::uint64_t n = 0;
  std::uint64_t dim_x = 0;
  bool gate_json = false;
  auto* gate = app.add_subcommand("gate", "check 2d < m min{ell, dim_x} <= n min{ell, dim_x}");
  gate->add_option("--d", d, "subspace dimension")->required();
  gate->add_option("--m", m, "response length")->required();
  gate->add_option("--ell", ell, "measurement dimension")->required();
  gate->add_option("--n", n, "context window length")->required();
  gate->add_option("--dimx", dim_x, "latent dimension")->required();
  gate->add_flag("--json", gate_json, "print the report as JSON");

  CommonArgs sim_args;
  auto* sim = app.add_subcommand("simulate-probe", "probe every token of a simulated process");
  add_common(sim, sim_args, true);

  CommonArgs verify_args;
  auto* verify = app.add_subcommand("verify", "random (f, g) immersion and injectivity trials on a subspace");
  add_common(verify, verify_args, true);

  CommonArgs est_args;
  std::string est_in;
  auto* est = app.add_subcommand("estimate-dim", "local dimension of every point of a labeled cloud");
  add_common(est, est_args, false);
  est->add_option("--in", est_in, "labeled CSV (token_id,c0,...)")->required()->check(CLI::ExistingFile);

  CommonArgs cmp_args;
  std::string cmp_a;
  std::string cmp_b;
  std::string cmp_strata;
  auto* cmp = app.add_subcommand("compare", "stratified comparison of two estimate files");
  cmp->add_option("--a", cmp_a, "reference estimates.csv")->required()->check(CLI::ExistingFile);
  cmp->add_option("--b", cmp_b, "compared estimates.csv")->required()->check(CLI::ExistingFile);
  cmp->add_option("--strata", cmp_strata, "strata JSON")->check(CLI::ExistingFile);
  cmp->add_option("--out", cmp_args.out, "output directory")->required();
  cmp->add_option("--seed", cmp_args.seed, "sampling seed");

  CommonArgs harvest_args;
  std::optional<std::size_t> max_new;
  auto* harv = app.add_subcommand("harvest", "collect per-position logprobs from a completions endpoint");
  add_common(harv, harvest_args, true);
  harv->add_option("--max-new-tokens", max_new, "stop after this many new tokens");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitUsage;
  }

  std::string command;
  std::string out;
  for (auto* sub : app.get_subcommands()) {
    command = sub->get_name();
  }
  try {
    if (*gate) {
      return cmd_gate(d, m, ell, n, dim_x, gate_json);
    }
    if (*sim) {
      out = sim_args.out;
      return cmd_simulate_probe(sim_args);
    }
    if (*verify) {
      out = verify_args.out;
      return cmd_verify(verify_args);
    }
    if (*est) {
      out = est_args.out;
      return cmd_estimate_dim(est_args, est_in);
    }
    if (*cmp) {
      out = cmp_args.out;
      return cmd_compare(cmp_args, cmp_a, cmp_b, cmp_strata);
    }
    if (*harv) {
      out = harvest_args.out;
      return cmd_harvest(harvest_args, max_new);
    }
  } catch (const tprobe::Error& e) {
    std::cerr << fmt::format("error ({}): {}\n", e.kind(), e.what());
    if (!out.empty()) {
      try {
        std::filesystem::create_directories(out);
        cli::write_error_record(out, command, e.kind(), e.what());
      } catch (const std::exception&) {
      }
    }
    return kExitRuntime;
  } catch (const std::exception& e) {
    std::cerr << fmt::format("error (internal): {}\n", e.what());
    if (!out.empty()) {
      try {
        std::filesystem::create_directories(out);
        cli::write_error_record(out, command, "internal", e.what());
      } catch (const std::exception&) {
      }
    }
    return kExitRuntime;
  }
  return kExitUsage;
}
