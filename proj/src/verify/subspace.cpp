#include "tprobe/verify/subspace.hpp"

#include "tprobe/core/errors.hpp"
#include "tprobe/core/seed.hpp"

#include <fmt/format.h>

#include <cmath>
#include <numbers>
#include <random>

namespace tprobe {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;
constexpr double kGoldenFrac = 0.6180339887498949;

double uniform_angle(std::mt19937_64& rng) { return kTwoPi * static_cast<double>(rng() >> 11) * 0x1.0p-53; }

// Hyperspherical coordinates of a k-sphere: phi_1..phi_{k-1} in [0, pi],
// phi_k in [0, 2 pi).
void sphere_embed(const double* phi, std::size_t k, double r, double* out) {
  double s = r;
  for (std::size_t i = 0; i + 1 < k; ++i) {
    out[i] = s * std::cos(phi[i]);
    s *= std::sin(phi[i]);
  }
  out[k - 1] = s * std::cos(phi[k - 1]);
  out[k] = s * std::sin(phi[k - 1]);
}

void sphere_angles(const Vector& x, std::size_t k, double* phi) {
  for (std::size_t i = 0; i + 1 < k; ++i) {
    const double tail = x.segment(static_cast<Eigen::Index>(i + 1), static_cast<Eigen::Index>(k - i)).norm();
    phi[i] = std::atan2(tail, x(static_cast<Eigen::Index>(i)));
  }
  double last = std::atan2(x(static_cast<Eigen::Index>(k)), x(static_cast<Eigen::Index>(k - 1)));
  if (last < 0.0) {
    last += kTwoPi;
  }
  phi[k - 1] = last;
}

void uniform_sphere_angles(std::size_t k, std::mt19937_64& rng, double* phi) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Vector g(static_cast<Eigen::Index>(k + 1));
  do {
    for (Eigen::Index i = 0; i < g.size(); ++i) {
      g(i) = normal(rng);
    }
  } while (g.norm() < 1e-12);
  sphere_angles(g / g.norm(), k, phi);
}

}  // namespace

std::string shape_name(Shape s) {
  switch (s) {
    case Shape::circle:
      return "circle";
    case Shape::torus:
      return "torus";
    case Shape::sphere:
      return "sphere";
    case Shape::figure_eight:
      return "figure-eight";
    case Shape::sphere_circle:
      return "sphere-circle";
  }
  return "circle";
}

Shape parse_shape(const std::string& name) {
  for (Shape s : {Shape::circle, Shape::torus, Shape::sphere, Shape::figure_eight, Shape::sphere_circle}) {
    if (shape_name(s) == name) {
      return s;
    }
  }
  throw ConfigError(fmt::format("unknown shape '{}' (circle, torus, sphere, figure-eight, sphere-circle)", name));
}

std::size_t SyntheticSubspaceSpec::intrinsic_dim() const {
  switch (shape) {
    case Shape::circle:
    case Shape::figure_eight:
      return 1;
    case Shape::torus:
      return 2;
    case Shape::sphere:
      return k;
    case Shape::sphere_circle:
      return k + 1;
  }
  return 1;
}

std::size_t SyntheticSubspaceSpec::natural_dim() const {
  switch (shape) {
    case Shape::circle:
    case Shape::figure_eight:
      return 2;
    case Shape::torus:
      return 4;
    case Shape::sphere:
      return k + 1;
    case Shape::sphere_circle:
      return k + 3;
  }
  return 2;
}

void SyntheticSubspaceSpec::validate() const {
  if ((shape == Shape::sphere || shape == Shape::sphere_circle) && k == 0) {
    throw ConfigError("sphere dimension k must be >= 1");
  }
  if (!(radius > 0.0) || !(circle_radius > 0.0)) {
    throw ConfigError("subspace radii must be positive");
  }
  if (natural_dim() > dim_x) {
    throw ConfigError(fmt::format("{} needs dim_x >= {}, got {}", shape_name(shape), natural_dim(), dim_x));
  }
  if (intrinsic_dim() >= dim_x) {
    throw ConfigError(fmt::format("subspace dimension {} must be below dim_x {}", intrinsic_dim(), dim_x));
  }
  if (sample_count == 0) {
    throw ConfigError("sample_count must be >= 1");
  }
}

Matrix random_rotation(std::size_t dim, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  Matrix g(static_cast<Eigen::Index>(dim), static_cast<Eigen::Index>(dim));
  for (Eigen::Index i = 0; i < g.size(); ++i) {
    g.data()[i] = normal(rng);
  }
  Eigen::HouseholderQR<Matrix> qr(g);
  Matrix q = qr.householderQ();
  const Matrix r = qr.matrixQR().triangularView<Eigen::Upper>();
  for (Eigen::Index j = 0; j < q.cols(); ++j) {
    if (r(j, j) < 0.0) {
      q.col(j) *= -1.0;
    }
  }
  return q;
}

Parametrization::Parametrization(const SyntheticSubspaceSpec& spec) : spec_(spec), d_(spec.intrinsic_dim()) {
  spec_.validate();
  rotation_ = spec_.rotation_seed ? random_rotation(spec_.dim_x, *spec_.rotation_seed)
                                  : Matrix::Identity(static_cast<Eigen::Index>(spec_.dim_x),
                                                     static_cast<Eigen::Index>(spec_.dim_x));
}

Vector Parametrization::embed(const Vector& p) const {
  if (static_cast<std::size_t>(p.size()) != d_) {
    throw ConfigError(fmt::format("{} takes {} parameters, got {}", shape_name(spec_.shape), d_, p.size()));
  }
  Vector x = Vector::Zero(static_cast<Eigen::Index>(spec_.dim_x));
  const double r = spec_.radius;
  switch (spec_.shape) {
    case Shape::circle:
      x(0) = r * std::cos(p(0));
      x(1) = r * std::sin(p(0));
      break;
    case Shape::torus:
      x(0) = r * std::cos(p(0));
      x(1) = r * std::sin(p(0));
      x(2) = r * std::cos(p(1));
      x(3) = r * std::sin(p(1));
      break;
    case Shape::sphere:
      sphere_embed(p.data(), spec_.k, r, x.data());
      break;
    case Shape::figure_eight:
      x(0) = r * std::sin(p(0));
      x(1) = r * std::sin(p(0)) * std::cos(p(0));
      break;
    case Shape::sphere_circle: {
      sphere_embed(p.data(), spec_.k, r, x.data());
      const double t = p(static_cast<Eigen::Index>(spec_.k));
      x(static_cast<Eigen::Index>(spec_.k + 1)) = spec_.circle_radius * std::cos(t);
      x(static_cast<Eigen::Index>(spec_.k + 2)) = spec_.circle_radius * std::sin(t);
      break;
    }
  }
  return spec_.rotation_seed ? Vector(rotation_ * x) : x;
}

SubspaceSample Parametrization::sample(std::uint64_t seed) const {
  const auto count = static_cast<Eigen::Index>(spec_.sample_count);
  const auto d = static_cast<Eigen::Index>(d_);
  SubspaceSample s;
  s.params.resize(count, d);
  s.points.resize(count, static_cast<Eigen::Index>(spec_.dim_x));
  std::mt19937_64 rng(derive_seed(seed, {seed_tag::kSample}));
  const bool grid = spec_.layout == Layout::grid;
  for (Eigen::Index i = 0; i < count; ++i) {
    const double frac = static_cast<double>(i) / static_cast<double>(count);
    Vector p(d);
    switch (spec_.shape) {
      case Shape::circle:
      case Shape::figure_eight:
        p(0) = grid ? kTwoPi * frac : uniform_angle(rng);
        break;
      case Shape::torus:
        if (grid) {
          p(0) = kTwoPi * frac;
          p(1) = kTwoPi * std::fmod(static_cast<double>(i) * kGoldenFrac, 1.0);
        } else {
          p(0) = uniform_angle(rng);
          p(1) = uniform_angle(rng);
        }
        break;
      case Shape::sphere:
        uniform_sphere_angles(spec_.k, rng, p.data());
        break;
      case Shape::sphere_circle:
        uniform_sphere_angles(spec_.k, rng, p.data());
        p(d - 1) = uniform_angle(rng);
        break;
    }
    s.params.row(i) = p.transpose();
    s.points.row(i) = embed(p).transpose();
  }
  return s;
}

SubspaceSample sample_subspace(const SyntheticSubspaceSpec& spec, std::uint64_t seed) {
  return Parametrization(spec).sample(seed);
}

}  // namespace tprobe
