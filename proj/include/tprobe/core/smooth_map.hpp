#pragma once

#include "tprobe/core/linalg.hpp"

#include <cstddef>
#include <cstdint>
#include <memory>
#include <string>
#include <variant>
#include <vector>

namespace tprobe {

// Multilayer map with tanh hidden activations and a linear read-out layer.
// Every weight block is rescaled to spectral norm `spectral_scale`, which
// keeps iterates of the shift bounded.
struct RandomMlp {
  std::vector<std::size_t> hidden{32};
  double spectral_scale = 0.5;
  double bias_scale = 0.5;
};

// f(x_1..x_n) = coefficients * vec(x_1..x_n); shape dim_x x (n*dim_x).
struct LinearMap {
  Matrix coefficients;
};

// f(x_1..x_n) = x_{slot+1} (0-based window slot).
struct Projection {
  std::size_t slot = 0;
};

struct ConstantMap {
  Vector point;
};

// Named constructions used to exercise specific structural properties.
//   "first-plus-smooth"  f = x_1 + h(x_2..x_n)           injective in x_1
//   "first-squared"      f = x_1 .* x_1 + h(x_2..x_n)    even in x_1
//   "first-block-rank"   f = A tanh(x_1) + h(x_2..x_n)   rank(A) = `rank`
// h is a small seeded tanh network; for n = 1 it is a seeded constant.
struct CustomTest {
  std::string name;
  std::size_t rank = 0;
};

using MapKind = std::variant<RandomMlp, LinearMap, Projection, ConstantMap, CustomTest>;

struct SmoothMapSpec {
  MapKind kind = RandomMlp{};
  std::uint64_t seed = 0;
};

std::string map_kind_name(const MapKind& kind);

namespace detail {
class MapImpl;
}

/// A materialized map X^n -> X. Immutable and cheap to copy; safe to share
/// between threads.
class SmoothMap {
 public:
  /// Builds the coefficients for `spec` acting on windows of `n` points in
  /// `dim_x`-space. Same (spec, n, dim_x) always yields the same map.
  static SmoothMap materialize(const SmoothMapSpec& spec, std::size_t n, std::size_t dim_x);

  Vector operator()(const Vector& window) const;

  std::size_t input_dim() const noexcept { return in_dim_; }
  std::size_t output_dim() const noexcept { return out_dim_; }

 private:
  SmoothMap(std::shared_ptr<const detail::MapImpl> impl, std::size_t in_dim, std::size_t out_dim)
      : impl_(std::move(impl)), in_dim_(in_dim), out_dim_(out_dim) {}

  std::shared_ptr<const detail::MapImpl> impl_;
  std::size_t in_dim_ = 0;
  std::size_t out_dim_ = 0;
};

/// Gaussian matrix rescaled to the given spectral norm.
Matrix spectral_gaussian(std::size_t rows, std::size_t cols, double spectral_norm, std::uint64_t seed);

}  // namespace tprobe
