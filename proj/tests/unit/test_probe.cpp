#include "oracles.hpp"

#include "tprobe/core/seed.hpp"
#include "tprobe/probe/gate.hpp"
#include "tprobe/probe/probe.hpp"
#include "tprobe/probe/simulated.hpp"

#include <doctest.h>

#include <atomic>
#include <filesystem>
#include <map>
#include <random>

using namespace tprobe;

namespace {

// dim_x = 4, tied read-out over the identity table, f constant at `logits`:
// every position's logits equal `logits` exactly.
SimulatedBackend fixed_logit_backend(const Vector& logits, SamplingMode mode = SamplingMode::analytic) {
  SimulatedBackendSpec spec;
  spec.process = ProcessSpec{{4}, 2, {ConstantMap{logits}, 0}};
  ReadoutSpec readout;
  readout.kind = ReadoutSpec::Kind::tied;
  spec.measurement = MeasurementMapSpec{SoftmaxReadout{readout, 1.0}, 3};
  spec.mode = mode;
  return SimulatedBackend(spec, TokenTable(Matrix::Identity(4, 4)));
}

SimulatedBackend random_backend(std::size_t vocab, std::uint64_t seed, SamplingMode mode = SamplingMode::analytic) {
  const std::size_t dim_x = 6;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  Matrix coords(static_cast<Eigen::Index>(vocab), static_cast<Eigen::Index>(dim_x));
  for (Eigen::Index i = 0; i < coords.size(); ++i) {
    coords.data()[i] = normal(rng);
  }
  SimulatedBackendSpec spec;
  spec.process = ProcessSpec{{dim_x}, 3, {RandomMlp{}, seed}};
  ReadoutSpec readout;
  readout.seed = seed;
  spec.measurement = MeasurementMapSpec{SoftmaxReadout{readout, 1.0}, 3};
  spec.mode = mode;
  return SimulatedBackend(spec, TokenTable(coords));
}

std::vector<TokenId> iota_tokens(std::size_t count) {
  std::vector<TokenId> t(count);
  for (std::size_t i = 0; i < count; ++i) {
    t[i] = static_cast<TokenId>(i);
  }
  return t;
}

Vector vec(std::initializer_list<double> v) {
  Vector out(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double x : v) {
    out(i++) = x;
  }
  return out;
}

// Backend whose sessions fail a configurable number of times per token.
class FlakyBackend final : public ProcessBackend {
 public:
  FlakyBackend(int failures_before_success, bool retriable, double bad_prob = -1.0)
      : failures_(failures_before_success), retriable_(retriable), bad_prob_(bad_prob) {}

  std::string identifier() const override { return "flaky"; }
  std::size_t vocab_size() const override { return 4; }
  bool provides_distributions() const override { return true; }

  std::unique_ptr<BackendSession> open_session() const override { return std::make_unique<Session>(*this); }

  mutable std::atomic<int> calls{0};

 private:
  class Session final : public BackendSession {
   public:
    explicit Session(const FlakyBackend& b) : b_(b) {}
    std::vector<PositionDistribution> distributions(const PrefixContext&, TokenId token, std::size_t m,
                                                    std::size_t) override {
      ++b_.calls;
      if (seen_[token]++ < b_.failures_) {
        throw BackendError("transient", b_.retriable_);
      }
      PositionDistribution d;
      d.entries = {{token, b_.bad_prob_ >= 0 ? b_.bad_prob_ : 0.7}, {(token + 1) % 4, 0.3}};
      return std::vector<PositionDistribution>(m, d);
    }
    std::vector<std::vector<TokenId>> sample(const PrefixContext&, TokenId, std::size_t, std::size_t,
                                             std::uint64_t) override {
      return {};
    }

   private:
    const FlakyBackend& b_;
    std::map<TokenId, int> seen_;
  };

  int failures_;
  bool retriable_;
  double bad_prob_;
};

}  // namespace

TEST_SUITE("gate_dimensions") {
  TEST_CASE("option 1 arithmetic") {
    const auto r = gate_dimensions(28, 30, 3, 4096, 4096);
    CHECK(r.holds());
    CHECK(r.two_d == 56);
    CHECK(r.lower == 90);
    CHECK(r.upper == 12288);
    CHECK(r.summary() == "56 < 90 ≤ 12288");
  }

  TEST_CASE("options 2 and 3 use min{4096, 32016}") {
    const auto o2 = gate_dimensions(28, 30, 32016, 4096, 4096);
    CHECK(o2.holds());
    CHECK(o2.width == 4096);
    CHECK(o2.lower == 30 * 4096);
    CHECK(o2.upper == 4096 * 4096);
    CHECK(o2.describe().find("30 x min{4096, 32016}") != std::string::npos);
    const auto o3 = gate_dimensions(28, 1, 32016, 4096, 4096);
    CHECK(o3.holds());
    CHECK(o3.lower == 4096);
    CHECK(o3.describe().find("1 x min{4096, 32016}") != std::string::npos);
  }

  TEST_CASE("all ones fails the strict inequality") {
    const auto r = gate_dimensions(1, 1, 1, 1, 1);
    CHECK_FALSE(r.holds());
    CHECK_FALSE(r.strict_holds);
    CHECK(r.upper_holds);
    CHECK_FALSE(r.violations().empty());
  }

  TEST_CASE("upper inequality needs m <= n") {
    const auto r = gate_dimensions(1, 5, 3, 4, 8);
    CHECK(r.strict_holds);
    CHECK_FALSE(r.upper_holds);
  }

  TEST_CASE("monotone in n") {
    for (std::uint64_t d = 0; d < 6; ++d) {
      for (std::uint64_t m = 1; m < 6; ++m) {
        for (std::uint64_t ell = 1; ell < 5; ++ell) {
          for (std::uint64_t dim_x = 1; dim_x < 5; ++dim_x) {
            bool seen = false;
            for (std::uint64_t n = 1; n < 12; ++n) {
              const bool h = gate_dimensions(d, m, ell, n, dim_x).holds();
              CHECK((!seen || h));
              seen = seen || h;
            }
          }
        }
      }
    }
  }
}

TEST_SUITE("estimate_probabilities") {
  TEST_CASE("degenerate sample") {
    const auto p = estimate_probabilities({{7, 7, 7, 7}});
    REQUIRE(p.size() == 1);
    REQUIRE(p[0].entries.size() == 1);
    CHECK(p[0].entries[0].token == 7);
    CHECK(p[0].entries[0].prob == 1.0);
  }

  TEST_CASE("two-way split orders ties by ascending id") {
    const auto p = estimate_probabilities({{9, 9, 2, 2}});
    REQUIRE(p[0].entries.size() == 2);
    CHECK(p[0].entries[0].token == 2);
    CHECK(p[0].entries[0].prob == 0.5);
    CHECK(p[0].entries[1].token == 9);
    CHECK(p[0].entries[1].prob == 0.5);
  }

  TEST_CASE("empty position is an error") {
    CHECK_THROWS_AS(estimate_probabilities({{1}, {}}), DataError);
  }

  TEST_CASE("ten thousand draws from a known distribution") {
    const std::vector<double> probs{0.5, 0.25, 0.15, 0.1};
    std::mt19937_64 rng(99);
    std::discrete_distribution<TokenId> dist(probs.begin(), probs.end());
    std::vector<TokenId> draws(10000);
    for (auto& d : draws) {
      d = dist(rng);
    }
    const auto est = estimate_probabilities({draws});
    double worst = 0.0;
    for (const auto& e : est[0].entries) {
      worst = std::max(worst, std::abs(e.prob - probs[e.token]));
    }
    CHECK(worst <= 0.02);
  }
}

TEST_SUITE("flatten_option") {
  TEST_CASE("option 1 concatenates sorted blocks") {
    PositionDistribution p{{{4, 0.5}, {1, 0.3}, {2, 0.2}}, true};
    PositionDistribution q{{{0, 0.1}, {3, 0.6}, {2, 0.3}}, true};
    const Vector out = flatten_option({p, q}, ProbeOption::option1(3, 2), 5);
    CHECK(out == vec({0.5, 0.3, 0.2, 0.6, 0.3, 0.1}));
  }

  TEST_CASE("option 2 is the entrywise mean") {
    PositionDistribution p{{{0, 0.5}, {1, 0.5}}, true};
    PositionDistribution q{{{1, 0.25}, {2, 0.75}}, true};
    const Vector out = flatten_option({p, q}, ProbeOption::option2(2), 3);
    CHECK(out == vec({0.25, 0.375, 0.375}));
  }

  TEST_CASE("option 3 passes the distribution through") {
    PositionDistribution p{{{2, 0.6}, {0, 0.3}, {1, 0.1}}, true};
    CHECK(flatten_option({p}, ProbeOption::option3(), 3) == vec({0.3, 0.1, 0.6}));
  }

  TEST_CASE("position count mismatch is a configuration error") {
    PositionDistribution p{{{0, 1.0}}, true};
    CHECK_THROWS_AS(flatten_option({p}, ProbeOption::option1(3, 2), 3), ConfigError);
    ProbeOption bad = ProbeOption::option3();
    bad.m = 2;
    CHECK_THROWS_AS(flatten_option({p, p}, bad, 3), ConfigError);
  }
}

TEST_SUITE("probe_token") {
  TEST_CASE("hand-computed softmax of logits (2,1,0,-1)") {
    const auto backend = fixed_logit_backend(vec({2, 1, 0, -1}));
    const auto expect = oracle::softmax({2, 1, 0, -1});
    const Vector got = probe_token(backend, 0, ProbeOption::option1(3, 2), backend.neutral_prefix(), 0);
    REQUIRE(got.size() == 6);
    for (int k = 0; k < 2; ++k) {
      for (int i = 0; i < 3; ++i) {
        CHECK(got(k * 3 + i) == doctest::Approx(expect[static_cast<std::size_t>(i)]).epsilon(1e-12));
      }
    }
    CHECK(got(0) == doctest::Approx(0.6439).epsilon(1e-4));
    CHECK(got(1) == doctest::Approx(0.2369).epsilon(1e-4));
    CHECK(got(2) == doctest::Approx(0.0871).epsilon(1e-3));
  }

  TEST_CASE("tokens with identical coordinates give identical rows") {
    const auto base = random_backend(40, 3);
    Matrix coords = base.table().coordinates();
    coords.row(17) = coords.row(5);
    const SimulatedBackend backend(base.spec(), TokenTable(coords));
    const auto prefix = backend.neutral_prefix();
    const auto option = ProbeOption::option1(3, 4);
    CHECK(probe_token(backend, 5, option, prefix, 1) == probe_token(backend, 17, option, prefix, 1));
  }

  TEST_CASE("empirical mode approaches analytic at 10^4 repeats") {
    const auto analytic = random_backend(30, 4);
    const auto empirical = random_backend(30, 4, SamplingMode::empirical);
    const auto prefix = analytic.neutral_prefix();
    for (TokenId t : {0u, 7u, 19u}) {
      const Vector a = probe_token(analytic, t, ProbeOption::option1(3, 4, 1), prefix, 11);
      const Vector e = probe_token(empirical, t, ProbeOption::option1(3, 4, 10000), prefix, 11);
      CHECK((a - e).cwiseAbs().maxCoeff() <= 0.02);
    }
  }

  TEST_CASE("option 3 analytic rows sum to one") {
    const auto backend = random_backend(50, 5);
    const Vector row = probe_token(backend, 3, ProbeOption::option3(), backend.neutral_prefix(), 0);
    CHECK(row.size() == 50);
    CHECK(std::abs(row.sum() - 1.0) <= 1e-6);
    CHECK(row.minCoeff() >= 0.0);
  }

  TEST_CASE("option 2 has vocabulary length") {
    const auto backend = random_backend(50, 5);
    const Vector row = probe_token(backend, 3, ProbeOption::option2(4), backend.neutral_prefix(), 0);
    CHECK(row.size() == 50);
    CHECK(std::abs(row.sum() - 1.0) <= 1e-6);
  }

  TEST_CASE("out-of-range token is a configuration error") {
    const auto backend = random_backend(10, 5);
    CHECK_THROWS_AS(probe_token(backend, 10, ProbeOption::option1(3, 2), backend.neutral_prefix(), 0), ConfigError);
  }

  TEST_CASE("invalid probabilities raise a data-integrity error") {
    const FlakyBackend backend(0, true, 1.5);
    CHECK_THROWS_AS(probe_token(backend, 1, ProbeOption::option1(2, 1), PrefixContext{}, 0), DataIntegrityError);
  }

  TEST_CASE("backend failure carries the token id") {
    const FlakyBackend backend(1, true);
    try {
      probe_token(backend, 2, ProbeOption::option1(2, 1), PrefixContext{}, 0);
      FAIL("expected ProbeError");
    } catch (const ProbeError& e) {
      CHECK(e.token() == 2);
      CHECK(e.retriable());
    }
  }

  TEST_CASE("no state leaks between consecutive probes") {
    const auto backend = random_backend(30, 6, SamplingMode::empirical);
    const auto prefix = backend.neutral_prefix();
    const auto option = ProbeOption::option1(3, 3, 200);
    auto session = backend.open_session();
    const Vector a1 = probe_token(*session, backend, 4, option, prefix, 8);
    const Vector b1 = probe_token(*session, backend, 9, option, prefix, 8);
    CHECK(probe_token(backend, 9, option, prefix, 8) == b1);
    CHECK(probe_token(backend, 4, option, prefix, 8) == a1);
  }
}

TEST_SUITE("probe_all") {
  TEST_CASE("option 1 with ell 3 and m 30 has 90 coordinates") {
    const auto backend = random_backend(20, 7);
    const auto res = probe_all(backend, iota_tokens(20), ProbeOption::option1(3, 30), backend.neutral_prefix(), {});
    CHECK(res.matrix.coord_len() == 90);
    CHECK(res.matrix.rows.size() == 20);
    CHECK(res.missing.empty());
    CHECK_NOTHROW(res.matrix.validate());
  }

  TEST_CASE("rows equal probe_token exactly") {
    const auto backend = random_backend(25, 8, SamplingMode::empirical);
    const auto prefix = backend.neutral_prefix();
    const auto option = ProbeOption::option1(3, 4, 64);
    const auto res = probe_all(backend, iota_tokens(25), option, prefix, {5, 3, 1});
    for (std::size_t i = 0; i < res.matrix.rows.size(); ++i) {
      const TokenId t = res.matrix.rows.ids[i];
      CHECK(Vector(res.matrix.rows.values.row(static_cast<Eigen::Index>(i)).transpose()) ==
            probe_token(backend, t, option, prefix, 5));
    }
  }

  TEST_CASE("singleton set") {
    const auto backend = random_backend(10, 9);
    const auto prefix = backend.neutral_prefix();
    const auto option = ProbeOption::option1(3, 4);
    const auto res = probe_all(backend, {6}, option, prefix, {});
    REQUIRE(res.matrix.rows.size() == 1);
    CHECK(res.matrix.rows.ids[0] == 6);
    CHECK(Vector(res.matrix.rows.values.row(0).transpose()) == probe_token(backend, 6, option, prefix, 0));
  }

  TEST_CASE("1 and 8 workers give identical matrices") {
    const auto backend = random_backend(60, 10, SamplingMode::empirical);
    const auto prefix = backend.neutral_prefix();
    const auto option = ProbeOption::option1(3, 4, 32);
    auto tokens = iota_tokens(60);
    const auto one = probe_all(backend, tokens, option, prefix, {42, 1, 1});
    std::reverse(tokens.begin(), tokens.end());
    const auto eight = probe_all(backend, tokens, option, prefix, {42, 8, 1});
    CHECK(one.matrix.rows.ids == eight.matrix.rows.ids);
    CHECK(labeled_csv_text(one.matrix.rows) == labeled_csv_text(eight.matrix.rows));
  }

  TEST_CASE("retriable failures are retried") {
    const FlakyBackend backend(2, true);
    const auto res = probe_all(backend, {0, 1, 2}, ProbeOption::option1(2, 1), PrefixContext{}, {0, 1, 3});
    CHECK(res.missing.empty());
    CHECK(res.matrix.rows.size() == 3);
  }

  TEST_CASE("persistent failures are listed as missing") {
    const FlakyBackend backend(100, false);
    const auto res = probe_all(backend, {0, 3}, ProbeOption::option1(2, 1), PrefixContext{}, {0, 2, 3});
    CHECK(res.matrix.rows.size() == 0);
    REQUIRE(res.missing.size() == 2);
    CHECK(res.missing[0].token == 0);
    CHECK(res.missing[0].attempts == 1);
    CHECK(res.missing[1].token == 3);
  }

  TEST_CASE("empty token set is rejected") {
    const auto backend = random_backend(10, 9);
    CHECK_THROWS_AS(probe_all(backend, {}, ProbeOption::option1(3, 2), backend.neutral_prefix(), {}), ConfigError);
  }
}

TEST_SUITE("measurement matrix io") {
  TEST_CASE("CSV round trip is exact") {
    const auto backend = random_backend(15, 11);
    const auto res = probe_all(backend, iota_tokens(15), ProbeOption::option1(3, 4), backend.neutral_prefix(), {});
    const auto dir = std::filesystem::temp_directory_path() / "tprobe_io_test";
    std::filesystem::create_directories(dir);
    const auto path = dir / "matrix.csv";
    write_measurement_matrix(path, res.matrix);
    const LabeledRows back = read_labeled_csv(path);
    CHECK(back.ids == res.matrix.rows.ids);
    CHECK(back.values == res.matrix.rows.values);
    const auto text = read_file(path);
    CHECK(text.rfind("token_id,c0,c1,", 0) == 0);
    CHECK(text.find('\r') == std::string::npos);
    const auto meta = meta_from_json(nlohmann::json::parse(read_file(sidecar_path(path))));
    CHECK(meta.backend == "simulated:analytic");
    CHECK(meta.option.ell == 3);
    std::filesystem::remove_all(dir);
  }

  TEST_CASE("malformed CSV is a data error") {
    const auto dir = std::filesystem::temp_directory_path() / "tprobe_io_bad";
    std::filesystem::create_directories(dir);
    write_file_atomic(dir / "a.csv", "token_id,c0\n1,0.5\n1,0.25\n");
    CHECK_THROWS_AS(read_labeled_csv(dir / "a.csv"), DataError);
    write_file_atomic(dir / "b.csv", "token_id,c0\n1,nan\n");
    CHECK_THROWS_AS(read_labeled_csv(dir / "b.csv"), DataError);
    write_file_atomic(dir / "c.csv", "id,c0\n1,0.5\n");
    CHECK_THROWS_AS(read_labeled_csv(dir / "c.csv"), DataError);
    std::filesystem::remove_all(dir);
  }
}
