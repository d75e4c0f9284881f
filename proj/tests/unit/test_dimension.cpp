#include "oracles.hpp"

#include "tprobe/core/errors.hpp"
#include "tprobe/dimension/strata.hpp"
#include "tprobe/verify/subspace.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <set>

using namespace tprobe;

namespace {

LabeledRows rows_of(const Matrix& m) {
  LabeledRows r;
  r.values = m;
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    r.ids.push_back(static_cast<std::uint32_t>(i));
  }
  return r;
}

Matrix uniform_cube(std::size_t count, std::size_t dim, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Matrix m(static_cast<Eigen::Index>(count), static_cast<Eigen::Index>(dim));
  for (Eigen::Index i = 0; i < m.size(); ++i) {
    m.data()[i] = u(rng);
  }
  return m;
}

Matrix shape_cloud(Shape shape, std::size_t k, std::size_t dim_x, std::size_t count, std::uint64_t seed) {
  SyntheticSubspaceSpec spec;
  spec.shape = shape;
  spec.k = k;
  spec.dim_x = dim_x;
  spec.sample_count = count;
  spec.layout = Layout::random;
  spec.rotation_seed = seed + 100;
  return sample_subspace(spec, seed).points;
}

// Median base dimension over a spread of anchors.
double median_base(const DistanceIndex& index, std::size_t anchors, const EstimatorConfig& config = {}) {
  std::vector<std::size_t> pos;
  for (std::size_t i = 0; i < anchors; ++i) {
    pos.push_back(i * index.size() / anchors);
  }
  const EstimateRun run = estimate_all(index, config, 1, pos);
  std::vector<double> base;
  for (const auto& e : run.estimates) {
    base.push_back(e.base_dim);
  }
  std::sort(base.begin(), base.end());
  return quantile_linear(base, 0.5);
}

VolumeRadiusCurve synthetic_curve(const std::vector<double>& radii, const std::vector<std::uint64_t>& counts,
                                  std::uint64_t total) {
  VolumeRadiusCurve c;
  c.radii = radii;
  c.counts = counts;
  c.total_points = total;
  c.reference_radius = radii[radii.size() / 2];
  c.reference_count = counts[counts.size() / 2];
  return c;
}

}  // namespace

TEST_SUITE("distance index") {
  TEST_CASE("range counts match brute force") {
    const Matrix m = uniform_cube(500, 3, 5);
    const DistanceIndex index(rows_of(m), 8);
    oracle::Grid pts(500, std::vector<double>(3));
    for (std::size_t i = 0; i < 500; ++i) {
      for (std::size_t k = 0; k < 3; ++k) {
        pts[i][k] = m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k));
      }
    }
    for (std::size_t a : {0UL, 17UL, 250UL, 499UL}) {
      for (double r : {0.0, 0.05, 0.1, 0.3, 0.7, 2.0}) {
        CHECK(index.neighbor_count(a, r) == oracle::brute_count(pts, a, r));
      }
    }
  }

  TEST_CASE("sorted distances and diameter") {
    Matrix m(4, 2);
    m << 0, 0, 3, 4, 0, 1, 6, 8;
    const DistanceIndex index(rows_of(m));
    CHECK(index.diameter() == doctest::Approx(10.0));
    const std::vector<double> d = index.sorted_distances_from(0);
    REQUIRE(d.size() == 3);
    CHECK(d[0] == doctest::Approx(1.0));
    CHECK(d[1] == doctest::Approx(5.0));
    CHECK(d[2] == doctest::Approx(10.0));
  }

  TEST_CASE("distance quantile is the lower order statistic of pairwise distances") {
    const Matrix m = uniform_cube(60, 2, 1);
    const DistanceIndex index(rows_of(m));
    std::vector<double> all;
    for (Eigen::Index i = 0; i < 60; ++i) {
      for (Eigen::Index j = i + 1; j < 60; ++j) {
        all.push_back((m.row(i) - m.row(j)).norm());
      }
    }
    std::sort(all.begin(), all.end());
    const auto k = static_cast<std::size_t>(0.1 * static_cast<double>(all.size() - 1));
    CHECK(index.distance_quantile(0.1) == all[k]);
    CHECK(index.distance_quantile(1.0) == all.back());
  }

  TEST_CASE("bad clouds are rejected") {
    CHECK_THROWS_AS(DistanceIndex(rows_of(Matrix::Zero(1, 2))), DataError);
    Matrix m = Matrix::Zero(3, 2);
    m(1, 1) = std::nan("");
    CHECK_THROWS_AS(DistanceIndex(rows_of(m)), DataError);
  }
}

TEST_SUITE("volume-radius") {
  TEST_CASE("exact power law gives its exponent") {
    std::vector<double> radii;
    std::vector<std::uint64_t> sq;
    std::vector<std::uint64_t> flat;
    for (int k = 0; k < 12; ++k) {
      radii.push_back(std::ldexp(1.0, k));
      sq.push_back(std::uint64_t{1} << (2 * k));
      flat.push_back(50);
    }
    CHECK(std::abs(loglog_slope(synthetic_curve(radii, sq, 1ULL << 40), 0, 12) - 2.0) < 1e-9);
    CHECK(std::abs(loglog_slope(synthetic_curve(radii, flat, 100), 0, 12)) < 1e-12);
  }

  TEST_CASE("slope needs four nonzero counts") {
    const VolumeRadiusCurve c = synthetic_curve({1, 2, 3, 4, 5}, {0, 0, 4, 5, 6}, 10);
    CHECK_THROWS_AS(loglog_slope(c, 0, 5), UndefinedSlopeError);
  }

  TEST_CASE("fit window bounds the counts") {
    const VolumeRadiusCurve c = synthetic_curve({1, 2, 3, 4, 5, 6}, {1, 9, 10, 30, 50, 51}, 100);
    const auto [b, e] = fit_window(c, 10, 0.5);
    CHECK(b == 2);
    CHECK(e == 5);
  }

  TEST_CASE("curve radii are log-spaced from the small scale to the diameter") {
    const DistanceIndex index(rows_of(uniform_cube(400, 2, 2)));
    const CloudScale scale = cloud_scale(index);
    const VolumeRadiusCurve c = volume_radius_curve(index, 0, scale, 32);
    REQUIRE(c.radii.size() == 32);
    CHECK(c.radii.back() == index.diameter());
    const double ratio = c.radii[1] / c.radii[0];
    for (std::size_t i = 2; i < 32; ++i) {
      CHECK(c.radii[i] / c.radii[i - 1] == doctest::Approx(ratio).epsilon(1e-9));
    }
    CHECK(c.counts.back() == 399);
    CHECK(std::is_sorted(c.counts.begin(), c.counts.end()));
    CHECK_THROWS_AS(volume_radius_curve(index, 0, scale, 4), ConfigError);
  }

  TEST_CASE("unit square has dimension two") {
    const DistanceIndex index(rows_of(uniform_cube(3000, 2, 8)));
    CHECK(median_base(index, 40) == doctest::Approx(2.0).epsilon(0.15));
  }

  TEST_CASE("known manifolds recover their dimension") {
    struct Case {
      Shape shape;
      std::size_t k;
      std::size_t dim_x;
      double expect;
    };
    for (const Case c : {Case{Shape::circle, 1, 5, 1.0}, Case{Shape::torus, 1, 6, 2.0}, Case{Shape::sphere, 3, 6, 3.0}}) {
      for (std::uint64_t seed = 0; seed < 5; ++seed) {
        const DistanceIndex index(rows_of(shape_cloud(c.shape, c.k, c.dim_x, 2000, seed)));
        CAPTURE(shape_name(c.shape));
        CAPTURE(seed);
        CHECK(std::abs(median_base(index, 24) - c.expect) <= 0.4);
      }
    }
  }

  TEST_CASE("estimates are scale invariant") {
    const Matrix m = shape_cloud(Shape::torus, 1, 5, 1200, 3);
    const DistanceIndex a(rows_of(m));
    const DistanceIndex b(rows_of(3.0 * m));
    const std::vector<std::size_t> pos{0, 100, 500, 900};
    const EstimateRun ra = estimate_all(a, {}, 1, pos);
    const EstimateRun rb = estimate_all(b, {}, 1, pos);
    for (std::size_t i = 0; i < pos.size(); ++i) {
      CHECK(rb.estimates[i].base_dim == doctest::Approx(ra.estimates[i].base_dim).epsilon(1e-6));
      CHECK(rb.estimates[i].corner_radius.has_value() == ra.estimates[i].corner_radius.has_value());
      CHECK(rb.curves[i].radii.back() == doctest::Approx(3.0 * ra.curves[i].radii.back()));
    }
  }
}

TEST_SUITE("corner detection") {
  TEST_CASE("piecewise power law has a corner at its knee") {
    std::vector<double> radii;
    std::vector<std::uint64_t> counts;
    const double knee = 0.5;
    for (int i = 0; i < 64; ++i) {
      const double r = 0.05 * std::pow(100.0, i / 63.0);
      radii.push_back(r);
      const double v = r < knee ? 1e9 * std::pow(r / knee, 6.0) : 1e9 * (r / knee);
      counts.push_back(static_cast<std::uint64_t>(std::llround(v)));
    }
    const auto corner = detect_corner(synthetic_curve(radii, counts, 1ULL << 40));
    REQUIRE(corner.has_value());
    CHECK(std::abs(corner->radius - knee) <= 0.2 * knee);
    CHECK(corner->small_radius_slope == doctest::Approx(6.0).epsilon(0.05));
    CHECK(corner->large_radius_slope == doctest::Approx(1.0).epsilon(0.05));
  }

  TEST_CASE("straight power law has no corner") {
    std::vector<double> radii;
    std::vector<std::uint64_t> counts;
    for (int i = 0; i < 64; ++i) {
      const double r = std::pow(10.0, i / 20.0);
      radii.push_back(r);
      counts.push_back(static_cast<std::uint64_t>(std::llround(20.0 * r * r)));
    }
    CHECK_FALSE(detect_corner(synthetic_curve(radii, counts, 1ULL << 40)).has_value());
  }

  TEST_CASE("pure circle produces no false corners") {
    int corners = 0;
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
      const DistanceIndex index(rows_of(shape_cloud(Shape::circle, 1, 4, 1000, seed)));
      const EstimateRun run = estimate_all(index, {}, 1, {0, 250, 500, 750});
      for (const auto& e : run.estimates) {
        corners += e.corner_radius.has_value() ? 1 : 0;
      }
    }
    CHECK(corners == 0);
  }
}

TEST_SUITE("isolation") {
  TEST_CASE("planted outliers are isolated with base below one") {
    Matrix m(1003, 3);
    m.topRows(1000) = uniform_cube(1000, 3, 4);
    m.row(1000) << 40, 0, 0;
    m.row(1001) << 0, 40, 0;
    m.row(1002) << 0, 0, -40;
    const DistanceIndex index(rows_of(m));
    const EstimateRun run = estimate_all(index, {}, 1, {0, 1, 2, 1000, 1001, 1002});
    for (std::size_t i = 0; i < 3; ++i) {
      CHECK_FALSE(run.estimates[i].isolated);
    }
    for (std::size_t i = 3; i < 6; ++i) {
      CAPTURE(run.estimates[i].token_id);
      CHECK(run.estimates[i].isolated);
      CHECK(run.estimates[i].base_dim < 1.0);
      CHECK(run.estimates[i].base_dim >= 0.0);
    }
  }

  TEST_CASE("isolated flag follows its two conditions") {
    VolumeRadiusCurve c;
    c.reference_count = 10;
    DimensionEstimate e;
    e.base_dim = 0.5;
    CHECK(flag_isolated(e, c));
    e.base_dim = 2.0;
    CHECK_FALSE(flag_isolated(e, c));
    c.reference_count = 2;
    CHECK(flag_isolated(e, c));
  }
}

TEST_SUITE("estimate output") {
  TEST_CASE("worker count does not change estimates") {
    const DistanceIndex index(rows_of(shape_cloud(Shape::torus, 1, 5, 800, 1)));
    const std::string one = estimates_csv_text(estimate_all(index, {}, 1).estimates);
    CHECK(estimates_csv_text(estimate_all(index, {}, 8).estimates) == one);
  }

  TEST_CASE("estimates csv round trip") {
    std::vector<DimensionEstimate> es(3);
    es[0] = {4, 1.25, std::nullopt, std::nullopt, false};
    es[1] = {7, 1.0 / 3.0, 5.5, 0.125, false};
    es[2] = {9, 0.0, std::nullopt, std::nullopt, true};
    const std::string text = estimates_csv_text(es);
    CHECK(text.rfind("token_id,base_dim,fiber_dim,corner_radius,isolated\n4,1.25,,,false\n", 0) == 0);
    const auto path = std::filesystem::temp_directory_path() / "tprobe_estimates_rt.csv";
    std::ofstream(path) << text;
    const auto back = read_estimates_csv(path);
    REQUIRE(back.size() == 3);
    CHECK(back[1].base_dim == es[1].base_dim);
    CHECK(back[1].fiber_dim == es[1].fiber_dim);
    CHECK(back[1].corner_radius == es[1].corner_radius);
    CHECK(back[2].isolated);
    CHECK_FALSE(back[0].fiber_dim.has_value());
    std::filesystem::remove(path);
  }
}

TEST_SUITE("strata") {
  std::map<std::uint32_t, double> toy_dims() {
    std::map<std::uint32_t, double> d;
    for (std::uint32_t i = 0; i < 100; ++i) {
      d[i] = static_cast<double>(i % 10) * 0.5;
    }
    return d;
  }

  TEST_CASE("quantiles interpolate between order statistics") {
    const std::vector<double> v{1, 2, 3, 4, 5, 6, 7, 8, 9};
    CHECK(quantile_linear(v, 0.25) == 3.0);
    CHECK(quantile_linear(v, 0.5) == 5.0);
    CHECK(quantile_linear({1, 2, 3, 4}, 0.5) == 2.5);
    const BoxSummary b = box_summary({1, 2, 3, 4, 5, 6, 7, 8, 9, 100});
    CHECK(b.median == 5.5);
    CHECK(b.whisker_high == 9.0);
    REQUIRE(b.outliers.size() == 1);
    CHECK(b.outliers[0] == 100.0);
  }

  TEST_CASE("samples are disjoint, eligible and seeded") {
    const auto dims = toy_dims();
    const std::vector<StratumSpec> spec{{"low", 10, std::nullopt, 1.0}, {"high", 15, 3.0, std::nullopt},
                                        {"any", 20, std::nullopt, std::nullopt}};
    const auto a = stratified_sample(dims, spec, 5);
    const auto b = stratified_sample(dims, spec, 5);
    REQUIRE(a.size() == 3);
    std::set<std::uint32_t> seen;
    for (std::size_t s = 0; s < 3; ++s) {
      CHECK(a[s].ids == b[s].ids);
      CHECK(a[s].ids.size() == spec[s].size);
      CHECK(std::is_sorted(a[s].ids.begin(), a[s].ids.end()));
      for (auto id : a[s].ids) {
        CHECK(seen.insert(id).second);
      }
    }
    for (auto id : a[0].ids) {
      CHECK(dims.at(id) < 1.0);
    }
    for (auto id : a[1].ids) {
      CHECK(dims.at(id) >= 3.0);
    }
    CHECK(stratified_sample(dims, spec, 6)[2].ids != a[2].ids);
  }

  TEST_CASE("too small a stratum is an error") {
    CHECK_THROWS_AS(stratified_sample(toy_dims(), {{"low", 21, std::nullopt, 1.0}}, 0), DataError);
  }

  TEST_CASE("comparison reports bias and spread") {
    const auto a = toy_dims();
    std::map<std::uint32_t, double> b;
    for (const auto& [id, v] : a) {
      b[id] = 2.0 * v + 1.0;
    }
    const auto strata = stratified_sample(a, {{"all", 100, std::nullopt, std::nullopt}}, 1);
    const StrataComparison cmp = compare_estimates(a, b, strata);
    // b - a = v + 1 with v in {0, .5, .., 4.5}: median 3.25
    CHECK(cmp.strata[0].bias == doctest::Approx(3.25));
    CHECK(cmp.strata[0].spread_ratio == doctest::Approx(2.0));
    std::map<std::uint32_t, double> partial = b;
    partial.erase(3);
    CHECK_THROWS_AS(compare_estimates(a, partial, strata), DataError);
  }
}
