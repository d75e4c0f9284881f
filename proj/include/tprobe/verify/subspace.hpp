#pragma once

#include "tprobe/core/linalg.hpp"

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>

namespace tprobe {

enum class Shape { circle, torus, sphere, figure_eight, sphere_circle };

std::string shape_name(Shape s);
Shape parse_shape(const std::string& name);

enum class Layout { grid, random };

/// A compact shape placed isometrically in the first coordinates of
/// dim_x-space, optionally followed by a random rotation.
///   circle         radius * (cos t, sin t)
///   torus          radius * (cos a, sin a, cos b, sin b)       (Clifford)
///   sphere         k-sphere of radius `radius` in R^(k+1)
///   figure_eight   radius * (sin t, sin t cos t); t = 0 and t = pi meet
///   sphere_circle  k-sphere of radius `radius` times a circle of radius
///                  `circle_radius`, in R^(k+1) x R^2
/// Grid layout: equally spaced angles (Fibonacci lattice for the torus).
/// Spheres and products are always sampled uniformly on the sphere.
struct SyntheticSubspaceSpec {
  Shape shape = Shape::circle;
  std::size_t k = 1;
  double radius = 1.0;
  double circle_radius = 1.0;
  std::size_t dim_x = 2;
  std::optional<std::uint64_t> rotation_seed;
  std::size_t sample_count = 64;
  Layout layout = Layout::grid;

  std::size_t intrinsic_dim() const;
  std::size_t natural_dim() const;
  /// Throws ConfigError unless d < dim_x and natural_dim <= dim_x.
  void validate() const;
};

/// Parameters and their images; row i of `points` is embed(row i of `params`).
struct SubspaceSample {
  Matrix params;  // sample_count x d
  Matrix points;  // sample_count x dim_x
};

class Parametrization {
 public:
  explicit Parametrization(const SyntheticSubspaceSpec& spec);

  std::size_t d() const noexcept { return d_; }
  std::size_t dim_x() const noexcept { return spec_.dim_x; }
  const SyntheticSubspaceSpec& spec() const noexcept { return spec_; }
  const Matrix& rotation() const noexcept { return rotation_; }

  Vector embed(const Vector& params) const;
  SubspaceSample sample(std::uint64_t seed) const;

 private:
  SyntheticSubspaceSpec spec_;
  std::size_t d_;
  Matrix rotation_;
};

SubspaceSample sample_subspace(const SyntheticSubspaceSpec& spec, std::uint64_t seed);

/// Haar-distributed orthogonal matrix.
Matrix random_rotation(std::size_t dim, std::uint64_t seed);

}  // namespace tprobe
