#pragma once

#include <cstdint>
#include <string>

namespace tprobe {

/// Outcome of the dimension gate 2d < m min{ell, dim_x} <= n min{ell, dim_x}.
struct GateReport {
  std::uint64_t d = 0;
  std::uint64_t m = 0;
  std::uint64_t ell = 0;
  std::uint64_t n = 0;
  std::uint64_t dim_x = 0;

  std::uint64_t two_d = 0;
  std::uint64_t width = 0;  // min{dim_x, ell}
  std::uint64_t lower = 0;  // m * width
  std::uint64_t upper = 0;  // n * width

  bool strict_holds = false;  // two_d < lower
  bool upper_holds = false;   // lower <= upper
  bool holds() const noexcept { return strict_holds && upper_holds; }

  /// "56 < 90 ≤ 12288", with the failing relation negated.
  std::string summary() const;
  /// Every quantity with its expansion, e.g.
  /// "2d = 56 < m*min{dim_x, ell} = 30 x min{4096, 3} = 90 <= ...".
  std::string describe() const;
  /// Human-readable list of violated inequalities; empty when the gate holds.
  std::string violations() const;
};

GateReport gate_dimensions(std::uint64_t d, std::uint64_t m, std::uint64_t ell, std::uint64_t n, std::uint64_t dim_x);

}  // namespace tprobe
