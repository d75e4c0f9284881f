#pragma once

#include "tprobe/core/measurement_map.hpp"
#include "tprobe/core/process.hpp"
#include "tprobe/probe/gate.hpp"
#include "tprobe/verify/subspace.hpp"

#include <json.hpp>

#include <cstddef>
#include <cstdint>
#include <utility>
#include <vector>

namespace tprobe {

struct CollisionWitness {
  ContextWindow a;
  ContextWindow b;
  double image_gap = 0.0;
};

struct BijectivityReport {
  std::size_t trials = 0;
  std::size_t collisions = 0;
  std::vector<CollisionWitness> witnesses;  // first few only
  bool consistent_with_bijective() const noexcept { return collisions == 0; }
};

/// Searches for windows w != w' sharing x_2..x_n with shift(w) = shift(w').
/// Each trial draws a random window and runs Newton's method on
/// z -> f(z, x_2..x_n) - f(x_1, x_2..x_n) from a random start; a root z far
/// from x_1 that survives exact re-evaluation of the shift is a collision.
BijectivityReport check_shift_bijectivity(const SmoothMapSpec& f, std::size_t n, std::size_t dim_x,
                                          std::size_t trials, std::uint64_t seed);

struct RankFormulaReport {
  std::size_t rank_shift = 0;        // rank of the full shift Jacobian
  std::size_t rank_first_block = 0;  // rank of df/dx_1
  std::size_t expected = 0;          // dim_x (n - 1) + rank_first_block
  bool inconclusive = false;         // a singular value sits near the cut
  bool holds() const noexcept { return rank_shift == expected; }
};

RankFormulaReport check_rank_formula(const SmoothMapSpec& f, std::size_t n, std::size_t dim_x,
                                     const ContextWindow& window, double step = kDefaultFdStep);

struct BlockFormReport {
  double max_abs_error = 0.0;
  bool holds(double tol = 1e-6) const noexcept { return max_abs_error <= tol; }
};

/// Finite-difference shift Jacobian of a linear f against the assembled
/// block matrix.
BlockFormReport check_linear_block_form(const Matrix& f_linear, std::size_t n, std::size_t dim_x,
                                        const ContextWindow& window, double step = kDefaultFdStep);

struct ImmersionReport {
  std::size_t d = 0;
  std::vector<std::size_t> ranks;  // per probe point; skipped points omitted
  std::vector<std::size_t> skipped;
  std::size_t min_rank = 0;
  bool passes() const noexcept { return !ranks.empty() && skipped.empty() && min_rank == d; }
};

inline constexpr double kImmersionRankFloor = 1e-9;

/// Numerical rank of the derivative of params -> A_m(f, g)(prefix..., embed(params))
/// at each parameter row. Throws ConfigError if the dimension gate fails.
ImmersionReport check_immersion(const Process& process, const MeasurementMap& g, const PrefixContext& prefix,
                                const Parametrization& subspace, const Matrix& params, std::size_t m,
                                double step = kDefaultFdStep);

struct InjectivityReport {
  double min_image_distance = 0.0;  // over pairs farther apart than the floor
  double tolerance = 0.0;
  double separation_floor = 0.0;
  std::size_t pairs_checked = 0;
  std::size_t collision_count = 0;
  std::vector<std::pair<std::size_t, std::size_t>> collisions;  // first few only
  bool passes() const noexcept { return collision_count == 0; }
};

/// Domain distances are measured between the rows of `domain` (points of X),
/// so distinct parameters mapping to the same point are never compared.
/// A pair collides when its image distance is at most
/// tol_factor * image diameter.
InjectivityReport check_injectivity(const Matrix& domain, const Matrix& image, double tol_factor = 1e-8,
                                    double separation_factor = 1e-3);

nlohmann::json to_json(const BijectivityReport& r);
nlohmann::json to_json(const RankFormulaReport& r);
nlohmann::json to_json(const ImmersionReport& r);
nlohmann::json to_json(const InjectivityReport& r);
nlohmann::json to_json(const GateReport& r);

}  // namespace tprobe
