// Acceptance run: one PASS/FAIL line per criterion, exit 1 if any fails.
//   acceptance [--only N] [--workers W]

#include "tprobe/config/run_config.hpp"
#include "tprobe/core/table_io.hpp"
#include "tprobe/dimension/estimate.hpp"
#include "tprobe/dimension/index.hpp"
#include "tprobe/dimension/strata.hpp"
#include "tprobe/pipeline.hpp"
#include "tprobe/probe/gate.hpp"
#include "tprobe/probe/probe.hpp"
#include "tprobe/probe/simulated.hpp"
#include "tprobe/remote/harvest.hpp"
#include "tprobe/verify/checks.hpp"
#include "tprobe/verify/trial.hpp"

#include <CLI11.hpp>
#include <fmt/format.h>
#include <httplib.h>

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <functional>
#include <iostream>
#include <random>
#include <thread>

using namespace tprobe;

namespace {

namespace tol {
constexpr double kBlockForm = 1e-6;
constexpr std::size_t kBijectivityTrials = 1000;
constexpr std::size_t kWitnessSeeds = 10;
constexpr double kMinPassRate = 0.95;
constexpr double kCollisionFactor = 1e-8;
constexpr std::size_t kProbePoints = 64;
constexpr std::size_t kTrialSeeds = 40;
constexpr double kCircleDim = 1.0;
constexpr double kCircleDimTol = 0.25;
constexpr double kNeighborOrder = 0.99;
constexpr double kTorusDim = 2.0;
constexpr double kTorusDimTol = 0.4;
constexpr double kCornerRadius = 1.2;
constexpr double kCornerRadiusTol = 0.3;
constexpr std::size_t kCornerSeeds = 5;
constexpr std::size_t kCircleSeeds = 20;
constexpr double kProbabilityError = 0.02;
}  // namespace tol

struct Outcome {
  bool pass = false;
  std::string detail;
};

struct Criterion {
  int number;
  std::string title;
  double budget_s;
  std::function<Outcome(std::size_t)> run;
};

Vector gaussian(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  Vector v(static_cast<Eigen::Index>(n));
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    v(i) = normal(rng);
  }
  return v;
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

// dim_x = 8, n = 6, random MLP f, random read-out, Option 1 (ell 3, m 4).
nlohmann::json base_doc(const std::string& shape, std::size_t count) {
  return {{"schema_version", 1},
          {"seed", 7},
          {"process", {{"n", 6}, {"dim_x", 8}, {"f", {{"kind", "random-mlp"}}}}},
          {"measurement", {{"kind", "softmax"}, {"ell", 3}}},
          {"option", {{"variant", "option1"}, {"ell", 3}, {"m", 4}}},
          {"subspace", {{"shape", shape}, {"sample_count", count}, {"layout", "grid"}}},
          {"tokens", {{"source", "subspace"}}},
          {"trial",
           {{"seeds", tol::kTrialSeeds},
            {"probe_points", tol::kProbePoints},
            {"collision_factor", tol::kCollisionFactor},
            {"min_pass_rate", tol::kMinPassRate}}}};
}

Outcome gate_arithmetic(std::size_t) {
  const std::uint64_t d = 28, n = 4096, dim_x = 4096, vocab = 32016;
  const auto o1 = ProbeOption::option1(3, 30);
  const auto o2 = ProbeOption::option2(30);
  const auto o3 = ProbeOption::option3();
  const GateReport g1 = gate_dimensions(d, o1.m, o1.gate_ell(vocab), n, dim_x);
  const GateReport g2 = gate_dimensions(d, o2.m, o2.gate_ell(vocab), n, dim_x);
  const GateReport g3 = gate_dimensions(d, o3.m, o3.gate_ell(vocab), n, dim_x);
  const bool pass = g1.holds() && g1.summary() == "56 < 90 ≤ 12288" && g2.holds() &&
                    g2.describe().find("30 x min{4096, 32016} = 122880") != std::string::npos && g3.holds() &&
                    g3.describe().find("1 x min{4096, 32016} = 4096") != std::string::npos &&
                    g2.upper == 4096u * 4096u && g3.upper == 4096u * 4096u;
  return {pass, fmt::format("option 1: {}; option 2: {}; option 3: {}", g1.summary(), g2.summary(), g3.summary())};
}

Outcome rank_formula(std::size_t) {
  std::size_t cases = 0, holding = 0;
  for (std::size_t dim_x = 1; dim_x <= 3; ++dim_x) {
    for (std::size_t n = 2; n <= 4; ++n) {
      for (std::size_t r = 0; r <= dim_x; ++r) {
        const SmoothMapSpec f{CustomTest{"first-block-rank", r}, 100 * dim_x + 10 * n + r};
        const ContextWindow w(gaussian(n * dim_x, 7 + r), dim_x);
        const RankFormulaReport rep = check_rank_formula(f, n, dim_x, w);
        ++cases;
        holding += rep.rank_first_block == r && rep.rank_shift == dim_x * (n - 1) + r ? 1 : 0;
      }
    }
  }
  return {cases == 27 && holding == cases, fmt::format("{}/{} cases rank = dim_x (n - 1) + r", holding, cases)};
}

Outcome block_form(std::size_t) {
  double worst = 0.0;
  for (std::uint64_t s = 0; s < 20; ++s) {
    const std::size_t dim_x = 1 + s % 3;
    const std::size_t n = 2 + s % 4;
    const Vector coeffs = gaussian(dim_x * n * dim_x, 1000 + s);
    const Matrix f = Eigen::Map<const Matrix>(coeffs.data(), static_cast<Eigen::Index>(dim_x),
                                              static_cast<Eigen::Index>(n * dim_x));
    const ContextWindow w(gaussian(n * dim_x, 2000 + s), dim_x);
    worst = std::max(worst, check_linear_block_form(f, n, dim_x, w).max_abs_error);
  }
  return {worst <= tol::kBlockForm, fmt::format("20 linear f, max entrywise error {:.3g}", worst)};
}

Outcome shift_bijectivity(std::size_t) {
  const BijectivityReport injective =
      check_shift_bijectivity({CustomTest{"first-plus-smooth", 0}, 3}, 3, 2, tol::kBijectivityTrials, 1);
  std::size_t witnessed = 0;
  for (std::uint64_t seed = 0; seed < tol::kWitnessSeeds; ++seed) {
    const BijectivityReport even = check_shift_bijectivity({CustomTest{"first-squared", 0}, seed}, 3, 2, 20, seed);
    witnessed += even.collisions >= 1 ? 1 : 0;
  }
  return {injective.trials == tol::kBijectivityTrials && injective.collisions == 0 && witnessed == tol::kWitnessSeeds,
          fmt::format("injective first coordinate: {} collisions in {} trials; even f: witness on {}/{} seeds",
                      injective.collisions, injective.trials, witnessed, tol::kWitnessSeeds)};
}

Outcome circle_genericity(std::size_t workers) {
  const RunConfig config = run_config_from_json(base_doc("circle", 256));
  const TrialReport r = run_generic_trial(make_trial_config(config, workers));
  if (r.refused) {
    return {false, "trial refused: " + r.refusal};
  }
  std::size_t passing = 0;
  for (const auto& s : r.seeds) {
    const bool immersion = s.immersion.ranks.size() == tol::kProbePoints &&
                           std::all_of(s.immersion.ranks.begin(), s.immersion.ranks.end(),
                                       [](std::size_t k) { return k == 1; });
    const bool injective = s.injectivity.collision_count == 0;
    passing += immersion && injective ? 1 : 0;
  }
  const double rate = static_cast<double>(passing) / static_cast<double>(r.seeds.size());
  return {r.seeds.size() == tol::kTrialSeeds && rate >= tol::kMinPassRate,
          fmt::format("gate {}; {}/{} seeds immersed with rank 1 at {} points and injective", r.gate.summary(),
                      passing, r.seeds.size(), tol::kProbePoints)};
}

// Fraction of cyclic pairs (i, i+1) in which each is among the other's two
// nearest neighbours in the recovered cloud.
double neighbor_order(const Matrix& cloud) {
  const Eigen::Index n = cloud.rows();
  std::vector<std::array<Eigen::Index, 2>> nearest(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) {
    std::vector<std::pair<double, Eigen::Index>> d;
    for (Eigen::Index j = 0; j < n; ++j) {
      if (j != i) {
        d.emplace_back((cloud.row(i) - cloud.row(j)).norm(), j);
      }
    }
    std::partial_sort(d.begin(), d.begin() + 2, d.end());
    nearest[static_cast<std::size_t>(i)] = {d[0].second, d[1].second};
  }
  const auto near = [&](Eigen::Index a, Eigen::Index b) {
    const auto& k = nearest[static_cast<std::size_t>(a)];
    return k[0] == b || k[1] == b;
  };
  std::size_t kept = 0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const Eigen::Index j = (i + 1) % n;
    kept += near(i, j) && near(j, i) ? 1 : 0;
  }
  return static_cast<double>(kept) / static_cast<double>(n);
}

double recovered_dimension(const MeasurementMatrix& m, std::size_t workers) {
  const EstimateRun run = estimate_all(DistanceIndex(m.rows), EstimatorConfig{}, workers);
  return estimate_summary(run.estimates)["median_base_dim"].get<double>();
}

Outcome end_to_end(std::size_t workers) {
  const SimulateOutcome circle = simulate_probe(run_config_from_json(base_doc("circle", 256)), workers);
  const double circle_dim = recovered_dimension(circle.probe.matrix, workers);
  const double order = neighbor_order(circle.probe.matrix.rows.values);
  const SimulateOutcome torus = simulate_probe(run_config_from_json(base_doc("torus", 2000)), workers);
  const double torus_dim = recovered_dimension(torus.probe.matrix, workers);
  const bool pass = circle.probe.missing.empty() && torus.probe.missing.empty() &&
                    std::abs(circle_dim - tol::kCircleDim) <= tol::kCircleDimTol && order >= tol::kNeighborOrder &&
                    std::abs(torus_dim - tol::kTorusDim) <= tol::kTorusDimTol;
  return {pass, fmt::format("circle (256 tokens): dimension {:.3f}, cyclic order kept for {:.1f}% of pairs; "
                            "torus (2000 tokens): dimension {:.3f}",
                            circle_dim, 100.0 * order, torus_dim)};
}

// Estimates at `anchors` evenly spaced sample points.
EstimateRun anchor_estimates(const Matrix& points, std::size_t anchors, std::size_t workers) {
  LabeledRows rows;
  rows.values = points;
  for (Eigen::Index i = 0; i < points.rows(); ++i) {
    rows.ids.push_back(static_cast<std::uint32_t>(i));
  }
  const DistanceIndex index(rows);
  std::vector<std::size_t> positions;
  const std::size_t step = static_cast<std::size_t>(points.rows()) / anchors;
  for (std::size_t a = 0; a < anchors; ++a) {
    positions.push_back(index.position_of(static_cast<std::uint32_t>(a * step)));
  }
  return estimate_all(index, EstimatorConfig{}, workers, positions);
}

Outcome corner_detection(std::size_t workers) {
  constexpr std::size_t kProductPoints = 5000;
  constexpr std::size_t kAnchors = 16;
  SyntheticSubspaceSpec product;
  product.shape = Shape::sphere_circle;
  product.k = 5;
  product.radius = tol::kCornerRadius;
  product.circle_radius = 10.0;
  product.dim_x = 8;
  product.sample_count = kProductPoints;
  product.layout = Layout::random;

  std::size_t good_seeds = 0;
  std::vector<std::string> radii;
  for (std::uint64_t seed = 0; seed < tol::kCornerSeeds; ++seed) {
    const EstimateRun run = anchor_estimates(sample_subspace(product, seed).points, kAnchors, workers);
    std::vector<double> corner_radii;
    bool ordered = true;
    for (const auto& e : run.estimates) {
      if (e.corner_radius) {
        corner_radii.push_back(*e.corner_radius);
        ordered = ordered && *e.fiber_dim > e.base_dim;
      }
    }
    if (corner_radii.size() * 2 <= kAnchors) {
      radii.push_back(fmt::format("{}/{} corners", corner_radii.size(), kAnchors));
      continue;
    }
    const double r = median(corner_radii);
    std::vector<double> fibers, bases;
    for (const auto& e : run.estimates) {
      if (e.corner_radius) {
        fibers.push_back(*e.fiber_dim);
        bases.push_back(e.base_dim);
      }
    }
    radii.push_back(fmt::format("{:.3f} (slopes {:.2f} / {:.2f})", r, median(fibers), median(bases)));
    good_seeds += ordered && std::abs(r - tol::kCornerRadius) <= tol::kCornerRadiusTol ? 1 : 0;
  }

  SyntheticSubspaceSpec circle;
  circle.dim_x = 2;
  circle.sample_count = 2000;
  circle.layout = Layout::random;
  std::size_t false_seeds = 0;
  for (std::uint64_t seed = 0; seed < tol::kCircleSeeds; ++seed) {
    const EstimateRun run = anchor_estimates(sample_subspace(circle, 100 + seed).points, 20, workers);
    false_seeds += std::any_of(run.estimates.begin(), run.estimates.end(),
                               [](const DimensionEstimate& e) { return e.corner_radius.has_value(); })
                       ? 1
                       : 0;
  }
  return {good_seeds == tol::kCornerSeeds && false_seeds == 0,
          fmt::format("sphere(5, 1.2) x circle: median corner radius (small / large radius slopes) per seed [{}], {}/{} seeds within {} +- {} "
                      "with fiber slope > base slope; pure circle: {}/{} seeds with a false corner",
                      fmt::join(radii, ", "), good_seeds, tol::kCornerSeeds, tol::kCornerRadius,
                      tol::kCornerRadiusTol, false_seeds, tol::kCircleSeeds)};
}

SimulatedBackend convergence_backend(SamplingMode mode) {
  const RunConfig c = run_config_from_json(base_doc("circle", 32));
  return SimulatedBackend(SimulatedBackendSpec{c.require_process(), c.require_measurement(), mode},
                          make_token_table(c));
}

Outcome probability_convergence(std::size_t) {
  const SimulatedBackend analytic = convergence_backend(SamplingMode::analytic);
  const SimulatedBackend empirical = convergence_backend(SamplingMode::empirical);
  const PrefixContext prefix = analytic.neutral_prefix();
  const std::vector<TokenId> tokens{0, 5, 11, 17, 23, 29};
  bool pass = true;
  std::vector<std::string> lines;
  for (std::uint64_t seed : {1, 2, 3}) {
    std::vector<double> errors;
    for (std::size_t repeats : {100, 1000, 10000}) {
      double worst = 0.0;
      for (TokenId t : tokens) {
        const Vector a = probe_token(analytic, t, ProbeOption::option1(3, 4, 1), prefix, seed);
        const Vector e = probe_token(empirical, t, ProbeOption::option1(3, 4, repeats), prefix, seed);
        worst = std::max(worst, (a - e).cwiseAbs().maxCoeff());
      }
      errors.push_back(worst);
    }
    pass = pass && errors[2] <= tol::kProbabilityError && errors[0] > errors[1] && errors[1] > errors[2];
    lines.push_back(fmt::format("seed {}: {:.4f} {:.4f} {:.4f}", seed, errors[0], errors[1], errors[2]));
  }
  return {pass, fmt::format("max error at 10^2, 10^3, 10^4 repeats; {}", fmt::join(lines, "; "))};
}

Outcome isolated_tokens(std::size_t workers) {
  const RunConfig c = run_config_from_json(base_doc("circle", 256));
  const TokenTable circle = make_token_table(c);
  Matrix coords(circle.vocab_size() + 3, 8);
  coords.topRows(static_cast<Eigen::Index>(circle.vocab_size())) = circle.coordinates();
  // planted well away from the circle and from each other
  const std::vector<Eigen::Index> planted{256, 257, 258};
  coords.bottomRows(3).setZero();
  coords(256, 2) = 4.0;
  coords(257, 4) = -4.0;
  coords(258, 6) = 4.0;
  const TokenTable table(coords);

  LabeledRows truth;
  truth.values = coords;
  for (Eigen::Index i = 0; i < coords.rows(); ++i) {
    truth.ids.push_back(static_cast<std::uint32_t>(i));
  }
  const EstimateRun truth_run = estimate_all(DistanceIndex(truth), EstimatorConfig{}, workers);

  const SimulatedBackend backend(SimulatedBackendSpec{c.require_process(), c.require_measurement()}, table);
  std::vector<TokenId> ids(truth.ids.begin(), truth.ids.end());
  const ProbeResult probe =
      probe_all(backend, ids, c.require_option(), backend.neutral_prefix(), ProbeRunOptions{c.seed, workers, 3});
  const EstimateRun probe_run = estimate_all(DistanceIndex(probe.matrix.rows), EstimatorConfig{}, workers);

  bool pass = probe.missing.empty();
  std::vector<std::string> parts;
  for (const auto& [name, run] : {std::pair{"ground truth", &truth_run}, std::pair{"probe", &probe_run}}) {
    std::vector<std::string> dims;
    for (Eigen::Index id : planted) {
      const DimensionEstimate& e = run->estimates[static_cast<std::size_t>(id)];
      pass = pass && e.isolated && e.base_dim < 1.0;
      dims.push_back(fmt::format("{:.2f}{}", e.base_dim, e.isolated ? "" : " (not flagged)"));
    }
    parts.push_back(fmt::format("{}: base_dim [{}]", name, fmt::join(dims, ", ")));
  }
  return {pass, fmt::format("3 planted outliers; {}", fmt::join(parts, "; "))};
}

// Completions endpoint with a fixed top-5 softmax per (token, position).
class MockEndpoint {
 public:
  MockEndpoint() {
    server_.Post("/v1/completions", [](const httplib::Request& req, httplib::Response& res) {
      const nlohmann::json j = nlohmann::json::parse(req.body);
      const auto token = j["prompt"].back().get<std::size_t>();
      std::this_thread::sleep_for(std::chrono::milliseconds((token * 7) % 4));
      nlohmann::json positions = nlohmann::json::array();
      for (std::size_t p = 0; p < j["max_tokens"].get<std::size_t>(); ++p) {
        const double temp = 0.5 + static_cast<double>((token * 7 + p * 3) % 5) / 4.0;
        double z = 0.0;
        for (int k = 0; k < 5; ++k) {
          z += std::exp(-k / temp);
        }
        nlohmann::json pos = nlohmann::json::object();
        for (int k = 0; k < 5; ++k) {
          pos[fmt::format("t{}p{}k{}", token, p, k)] = -k / temp - std::log(z);
        }
        positions.push_back(pos);
      }
      const nlohmann::json body = {{"choices", {{{"text", "ok"}, {"logprobs", {{"top_logprobs", positions}}}}}}};
      res.set_content(body.dump(), "application/json");
    });
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }
  ~MockEndpoint() {
    server_.stop();
    thread_.join();
  }
  std::string url() const { return fmt::format("http://127.0.0.1:{}/v1/completions", port_); }

 private:
  httplib::Server server_;
  int port_ = 0;
  std::thread thread_;
};

struct StageTexts {
  std::vector<std::pair<std::string, std::string>> files;
};

StageTexts run_stages(std::size_t workers, const MockEndpoint& endpoint, const std::filesystem::path& scratch) {
  StageTexts out;
  auto doc = base_doc("circle", 256);
  doc["trial"]["seeds"] = 8;
  const RunConfig config = run_config_from_json(doc);

  const SimulateOutcome sim = simulate_probe(config, workers);
  out.files.emplace_back("measurements.csv", labeled_csv_text(sim.probe.matrix.rows));
  out.files.emplace_back("measurements.meta.json", meta_to_json(sim.probe.matrix.meta).dump());
  out.files.emplace_back("missing.json", failures_to_json(sim.probe.missing).dump());

  out.files.emplace_back("verify.json", to_json(verify_run(config, workers)).dump());

  const EstimateRun est = estimate_all(DistanceIndex(sim.probe.matrix.rows), config.estimator, workers);
  out.files.emplace_back("estimates.csv", estimates_csv_text(est.estimates));
  out.files.emplace_back("curves.csv", curves_csv_text(est.curves));
  out.files.emplace_back("estimate summary", estimate_summary(est.estimates).dump());

  const auto dims = base_dims(est.estimates);
  const auto strata = stratified_sample(dims, {{"low", 40, std::nullopt, 1.1}, {"rest", 60, std::nullopt, std::nullopt}}, 5);
  out.files.emplace_back("comparison.json", comparison_to_json(compare_estimates(dims, dims, strata)).dump());

  RemoteConfig remote;
  remote.endpoint = endpoint.url();
  remote.model = "mock";
  remote.max_tokens = 4;
  remote.max_concurrency = workers;
  HarvestRequest req;
  req.last = 48;
  req.option = ProbeOption::option1(3, 4);
  req.prefix = {1, 1};
  req.out_dir = scratch / fmt::format("harvest_{}", workers);
  std::filesystem::remove_all(req.out_dir);
  harvest(remote, req);
  for (const char* name : {"rows.jsonl", "responses.jsonl", "state.json", "skipped.json"}) {
    out.files.emplace_back(name, read_file(req.out_dir / name));
  }
  out.files.emplace_back("harvest measurements.csv", labeled_csv_text(harvest_to_matrix(req.out_dir, req.option).rows));
  return out;
}

Outcome determinism(std::size_t) {
  const MockEndpoint endpoint;
  const auto scratch = std::filesystem::temp_directory_path() / "tprobe_acceptance";
  const StageTexts one = run_stages(1, endpoint, scratch);
  const StageTexts eight = run_stages(8, endpoint, scratch);
  std::vector<std::string> differing;
  for (std::size_t i = 0; i < one.files.size(); ++i) {
    if (one.files[i].second != eight.files[i].second) {
      differing.push_back(one.files[i].first);
    }
  }
  return {differing.empty(),
          differing.empty()
              ? fmt::format("{} outputs (probe, verify, estimate, compare, harvest) byte-identical at 1 and 8 workers",
                            one.files.size())
              : fmt::format("differ: {}", fmt::join(differing, ", "))};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance criteria 1-10"};
  int only = 0;
  std::size_t workers = 4;
  app.add_option("--only", only, "run a single criterion")->check(CLI::Range(1, 10));
  app.add_option("--workers", workers, "worker threads")->check(CLI::PositiveNumber);
  CLI11_PARSE(app, argc, argv);

  const std::vector<Criterion> criteria{
      {1, "gate arithmetic", 1, gate_arithmetic},
      {2, "rank formula", 5, rank_formula},
      {3, "block matrix form", 5, block_form},
      {4, "shift bijectivity", 5, shift_bijectivity},
      {5, "circle genericity", 120, circle_genericity},
      {6, "end-to-end circle and torus", 180, end_to_end},
      {7, "corner detection", 120, corner_detection},
      {8, "probability convergence", 60, probability_convergence},
      {9, "isolated tokens", 60, isolated_tokens},
      {10, "determinism", 120, determinism},
  };

  int failed = 0;
  for (const auto& c : criteria) {
    if (only != 0 && c.number != only) {
      continue;
    }
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run(workers);
    } catch (const std::exception& e) {
      o = {false, std::string("error: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    const bool in_time = secs <= c.budget_s;
    const bool pass = o.pass && in_time;
    failed += pass ? 0 : 1;
    std::cout << fmt::format("criterion {:2} {} {}: {} [{:.1f}s of {:.0f}s{}]\n", c.number, pass ? "PASS" : "FAIL",
                             c.title, o.detail, secs, c.budget_s, in_time ? "" : ", over budget")
              << std::flush;
  }
  return failed == 0 ? 0 : 1;
}
