#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <functional>

namespace tprobe {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Any evaluable vector-valued map.
using VectorMap = std::function<Vector(const Vector&)>;

inline constexpr double kDefaultFdStep = 1e-5;
inline constexpr double kDefaultRankTol = 1e-8;

/// Central-difference Jacobian of `map` at `point`: one row per output,
/// one column per input. Throws NumericalDomainError if the map produces a
/// non-finite value at any stencil point, ConfigError if step <= 0.
Matrix jacobian_fd(const VectorMap& map, const Vector& point, double step = kDefaultFdStep);

/// Number of singular values exceeding `rel_tol` times the largest one and
/// also exceeding `abs_floor`. Empty or all-zero matrices have rank 0.
std::size_t numeric_rank(const Matrix& m, double rel_tol = kDefaultRankTol,
                         double abs_floor = 0.0);

/// Singular values in descending order.
Vector singular_values(const Matrix& m);

/// Largest distance between any two rows. O(rows^2).
double row_diameter(const Matrix& rows);

}  // namespace tprobe
