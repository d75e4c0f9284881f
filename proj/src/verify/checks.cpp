#include "tprobe/verify/checks.hpp"

#include "tprobe/core/errors.hpp"
#include "tprobe/core/seed.hpp"

#include <fmt/format.h>

#include <cmath>
#include <limits>
#include <random>

namespace tprobe {

namespace {

constexpr std::size_t kMaxWitnesses = 8;
constexpr std::size_t kMaxListedCollisions = 32;
constexpr int kNewtonIterations = 60;

Vector gaussian_vector(std::size_t len, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Vector v(static_cast<Eigen::Index>(len));
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    v(i) = normal(rng);
  }
  return v;
}

// True if some singular value lies within a decade of the rank cut.
bool near_cut(const Matrix& m, double rel_tol) {
  const Vector sv = singular_values(m);
  if (sv.size() == 0 || sv(0) <= 0.0) {
    return false;
  }
  const double cut = rel_tol * sv(0);
  for (Eigen::Index i = 0; i < sv.size(); ++i) {
    if (sv(i) > cut / 10.0 && sv(i) < cut * 10.0) {
      return true;
    }
  }
  return false;
}

}  // namespace

BijectivityReport check_shift_bijectivity(const SmoothMapSpec& f, std::size_t n, std::size_t dim_x,
                                          std::size_t trials, std::uint64_t seed) {
  const Process process(ProcessSpec{{dim_x}, n, f});
  const SmoothMap& fmap = process.f();
  const auto d = static_cast<Eigen::Index>(dim_x);
  std::mt19937_64 rng(derive_seed(seed, {seed_tag::kSample}));
  BijectivityReport report;
  report.trials = trials;
  for (std::size_t t = 0; t < trials; ++t) {
    const Vector w = gaussian_vector(n * dim_x, rng);
    const Vector x1 = w.head(d);
    const Vector target = fmap(w);
    Vector probe = w;
    const VectorMap first = [&](const Vector& z) {
      probe.head(d) = z;
      return fmap(probe);
    };
    Vector z = gaussian_vector(dim_x, rng);
    bool converged = false;
    try {
      for (int it = 0; it < kNewtonIterations; ++it) {
        const Vector residual = first(z) - target;
        if (!residual.allFinite()) {
          break;
        }
        if (residual.norm() <= 1e-12 * (1.0 + target.norm())) {
          converged = true;
          break;
        }
        const Matrix jac = jacobian_fd(first, z);
        z += jac.completeOrthogonalDecomposition().solve(-residual);
      }
    } catch (const NumericalDomainError&) {
      converged = false;
    }
    if (!converged || (z - x1).norm() <= 1e-6 * (1.0 + x1.norm())) {
      continue;
    }
    Vector other = w;
    other.head(d) = z;
    const ContextWindow a(w, dim_x);
    const ContextWindow b(other, dim_x);
    const Vector sa = process.shift_step(a).flat();
    const Vector sb = process.shift_step(b).flat();
    const double gap = (sa - sb).norm();
    if (gap <= 1e-9 * (1.0 + sa.norm())) {
      ++report.collisions;
      if (report.witnesses.size() < kMaxWitnesses) {
        report.witnesses.push_back({a, b, gap});
      }
    }
  }
  return report;
}

RankFormulaReport check_rank_formula(const SmoothMapSpec& f, std::size_t n, std::size_t dim_x,
                                     const ContextWindow& window, double step) {
  const Process process(ProcessSpec{{dim_x}, n, f});
  const Matrix jac =
      jacobian_fd([&](const Vector& v) { return process.shift_step(ContextWindow(v, dim_x)).flat(); }, window.flat(),
                  step);
  const auto d = static_cast<Eigen::Index>(dim_x);
  const Matrix first = jac.bottomLeftCorner(d, d);
  RankFormulaReport r;
  r.rank_shift = numeric_rank(jac);
  r.rank_first_block = numeric_rank(first);
  r.expected = dim_x * (n - 1) + r.rank_first_block;
  r.inconclusive = near_cut(jac, kDefaultRankTol) || near_cut(first, kDefaultRankTol);
  return r;
}

BlockFormReport check_linear_block_form(const Matrix& f_linear, std::size_t n, std::size_t dim_x,
                                        const ContextWindow& window, double step) {
  const Matrix expect = linear_shift_matrix(f_linear, n, dim_x);
  const Process process(ProcessSpec{{dim_x}, n, {LinearMap{f_linear}, 0}});
  const Matrix jac =
      jacobian_fd([&](const Vector& v) { return process.shift_step(ContextWindow(v, dim_x)).flat(); }, window.flat(),
                  step);
  return BlockFormReport{(jac - expect).cwiseAbs().maxCoeff()};
}

ImmersionReport check_immersion(const Process& process, const MeasurementMap& g, const PrefixContext& prefix,
                                const Parametrization& subspace, const Matrix& params, std::size_t m, double step) {
  const GateReport gate = gate_dimensions(subspace.d(), m, g.ell(), process.n(), process.dim_x());
  if (!gate.holds()) {
    throw ConfigError("dimension gate fails: " + gate.violations());
  }
  ImmersionReport report;
  report.d = subspace.d();
  report.min_rank = std::numeric_limits<std::size_t>::max();
  const VectorMap composite = [&](const Vector& theta) {
    return process.autoregress_flat(g, process.query_window(prefix, subspace.embed(theta)), m);
  };
  for (Eigen::Index i = 0; i < params.rows(); ++i) {
    try {
      const Matrix jac = jacobian_fd(composite, params.row(i).transpose(), step);
      const std::size_t rank = numeric_rank(jac, kDefaultRankTol, kImmersionRankFloor);
      report.ranks.push_back(rank);
      report.min_rank = std::min(report.min_rank, rank);
    } catch (const NumericalDomainError&) {
      report.skipped.push_back(static_cast<std::size_t>(i));
    }
  }
  if (report.ranks.empty()) {
    report.min_rank = 0;
  }
  return report;
}

InjectivityReport check_injectivity(const Matrix& domain, const Matrix& image, double tol_factor,
                                    double separation_factor) {
  if (domain.rows() != image.rows()) {
    throw DataError("injectivity check: domain and image row counts differ");
  }
  InjectivityReport r;
  r.tolerance = tol_factor * row_diameter(image);
  r.separation_floor = separation_factor * row_diameter(domain);
  r.min_image_distance = std::numeric_limits<double>::infinity();
  for (Eigen::Index i = 0; i < domain.rows(); ++i) {
    for (Eigen::Index j = i + 1; j < domain.rows(); ++j) {
      if ((domain.row(i) - domain.row(j)).norm() <= r.separation_floor) {
        continue;
      }
      ++r.pairs_checked;
      const double gap = (image.row(i) - image.row(j)).norm();
      r.min_image_distance = std::min(r.min_image_distance, gap);
      if (gap <= r.tolerance) {
        ++r.collision_count;
        if (r.collisions.size() < kMaxListedCollisions) {
          r.collisions.emplace_back(static_cast<std::size_t>(i), static_cast<std::size_t>(j));
        }
      }
    }
  }
  if (r.pairs_checked == 0) {
    r.min_image_distance = 0.0;
  }
  return r;
}

namespace {

nlohmann::json vector_json(const Vector& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

}  // namespace

nlohmann::json to_json(const BijectivityReport& r) {
  nlohmann::json w = nlohmann::json::array();
  for (const auto& c : r.witnesses) {
    w.push_back({{"a", vector_json(c.a.flat())}, {"b", vector_json(c.b.flat())}, {"image_gap", c.image_gap}});
  }
  return {{"trials", r.trials},
          {"collisions", r.collisions},
          {"consistent_with_bijective", r.consistent_with_bijective()},
          {"witnesses", w}};
}

nlohmann::json to_json(const RankFormulaReport& r) {
  return {{"rank_shift", r.rank_shift},
          {"rank_first_block", r.rank_first_block},
          {"expected", r.expected},
          {"holds", r.holds()},
          {"inconclusive", r.inconclusive}};
}

nlohmann::json to_json(const ImmersionReport& r) {
  return {{"d", r.d}, {"min_rank", r.min_rank}, {"ranks", r.ranks}, {"skipped", r.skipped}, {"pass", r.passes()}};
}

nlohmann::json to_json(const InjectivityReport& r) {
  nlohmann::json pairs = nlohmann::json::array();
  for (const auto& [i, j] : r.collisions) {
    pairs.push_back({i, j});
  }
  return {{"min_image_distance", r.min_image_distance},
          {"tolerance", r.tolerance},
          {"separation_floor", r.separation_floor},
          {"pairs_checked", r.pairs_checked},
          {"collision_count", r.collision_count},
          {"collisions", pairs},
          {"pass", r.passes()}};
}

nlohmann::json to_json(const GateReport& r) {
  return {{"d", r.d},
          {"m", r.m},
          {"ell", r.ell},
          {"n", r.n},
          {"dim_x", r.dim_x},
          {"two_d", r.two_d},
          {"m_min", r.lower},
          {"n_min", r.upper},
          {"holds", r.holds()},
          {"summary", r.summary()},
          {"detail", r.describe()}};
}

}  // namespace tprobe
