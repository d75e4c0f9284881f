#include "tprobe/core/linalg.hpp"

#include "tprobe/core/errors.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>

namespace tprobe {

namespace {

Vector checked_eval(const VectorMap& map, const Vector& x) {
  Vector y = map(x);
  if (!y.allFinite()) {
    throw NumericalDomainError("map produced a non-finite value near the differentiation point");
  }
  return y;
}

}  // namespace

Matrix jacobian_fd(const VectorMap& map, const Vector& point, double step) {
  if (!(step > 0.0) || !std::isfinite(step)) {
    throw ConfigError(fmt::format("finite-difference step must be positive, got {}", step));
  }
  if (!point.allFinite()) {
    throw NumericalDomainError("differentiation point has non-finite coordinates");
  }
  const Eigen::Index cols = point.size();
  Matrix jac;
  Vector probe = point;
  for (Eigen::Index j = 0; j < cols; ++j) {
    probe(j) = point(j) + step;
    const Vector plus = checked_eval(map, probe);
    probe(j) = point(j) - step;
    const Vector minus = checked_eval(map, probe);
    probe(j) = point(j);
    if (j == 0) {
      jac.resize(plus.size(), cols);
    }
    if (plus.size() != jac.rows() || minus.size() != jac.rows()) {
      throw NumericalDomainError("map output length changed between evaluations");
    }
    jac.col(j) = (plus - minus) / (2.0 * step);
  }
  if (cols == 0) {
    jac.resize(checked_eval(map, point).size(), 0);
  }
  return jac;
}

Vector singular_values(const Matrix& m) {
  if (m.size() == 0) {
    return Vector{};
  }
  Eigen::JacobiSVD<Matrix> svd(m);
  return svd.singularValues();
}

std::size_t numeric_rank(const Matrix& m, double rel_tol, double abs_floor) {
  if (m.size() == 0) {
    return 0;
  }
  if (!m.allFinite()) {
    throw NumericalDomainError("numeric_rank requires finite entries");
  }
  const Vector sv = singular_values(m);
  const double largest = sv.size() > 0 ? sv(0) : 0.0;
  if (largest <= 0.0) {
    return 0;
  }
  const double cut = std::max(rel_tol * largest, abs_floor);
  std::size_t rank = 0;
  for (Eigen::Index i = 0; i < sv.size(); ++i) {
    if (sv(i) > cut) {
      ++rank;
    }
  }
  return rank;
}

double row_diameter(const Matrix& rows) {
  double best = 0.0;
  for (Eigen::Index i = 0; i < rows.rows(); ++i) {
    for (Eigen::Index j = i + 1; j < rows.rows(); ++j) {
      best = std::max(best, (rows.row(i) - rows.row(j)).squaredNorm());
    }
  }
  return std::sqrt(best);
}

}  // namespace tprobe
