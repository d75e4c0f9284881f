#include "tprobe/probe/gate.hpp"

#include <fmt/format.h>

#include <algorithm>

namespace tprobe {

GateReport gate_dimensions(std::uint64_t d, std::uint64_t m, std::uint64_t ell, std::uint64_t n,
                           std::uint64_t dim_x) {
  GateReport r;
  r.d = d;
  r.m = m;
  r.ell = ell;
  r.n = n;
  r.dim_x = dim_x;
  r.two_d = 2 * d;
  r.width = std::min(dim_x, ell);
  r.lower = m * r.width;
  r.upper = n * r.width;
  r.strict_holds = r.two_d < r.lower;
  r.upper_holds = r.lower <= r.upper;
  return r;
}

std::string GateReport::summary() const {
  return fmt::format("{} {} {} {} {}", two_d, strict_holds ? "<" : "≮", lower, upper_holds ? "≤" : "≰", upper);
}

std::string GateReport::describe() const {
  return fmt::format("2d = {} {} m*min{{dim_x, ell}} = {} x min{{{}, {}}} = {} {} n*min{{dim_x, ell}} = {} x min{{{}, {}}} = {}",
                     two_d, strict_holds ? "<" : "≮", m, dim_x, ell, lower, upper_holds ? "≤" : "≰", n, dim_x,
                     ell, upper);
}

std::string GateReport::violations() const {
  std::string out;
  if (!strict_holds) {
    out += fmt::format("2d < m*min{{dim_x, ell}} fails: {} >= {}", two_d, lower);
  }
  if (!upper_holds) {
    if (!out.empty()) {
      out += "; ";
    }
    out += fmt::format("m*min{{dim_x, ell}} <= n*min{{dim_x, ell}} fails: {} > {}", lower, upper);
  }
  return out;
}

}  // namespace tprobe
