#include "tprobe/core/process.hpp"

#include "tprobe/core/digest.hpp"
#include "tprobe/core/errors.hpp"

#include <fmt/format.h>

namespace tprobe {

ContextWindow::ContextWindow(Vector flat, std::size_t dim_x) : flat_(std::move(flat)), dim_x_(dim_x) {
  if (dim_x_ == 0 || flat_.size() % static_cast<Eigen::Index>(dim_x_) != 0) {
    throw ConfigError(fmt::format("window of {} values is not a whole number of {}-points", flat_.size(), dim_x_));
  }
}

ContextWindow ContextWindow::from_points(const std::vector<Vector>& points) {
  if (points.empty()) {
    throw ConfigError("window needs at least one point");
  }
  const auto d = points.front().size();
  Vector flat(d * static_cast<Eigen::Index>(points.size()));
  for (std::size_t i = 0; i < points.size(); ++i) {
    if (points[i].size() != d) {
      throw ConfigError("window points differ in dimension");
    }
    flat.segment(static_cast<Eigen::Index>(i) * d, d) = points[i];
  }
  return ContextWindow(std::move(flat), static_cast<std::size_t>(d));
}

Vector ContextWindow::point(std::size_t i) const {
  const auto d = static_cast<Eigen::Index>(dim_x_);
  return flat_.segment(static_cast<Eigen::Index>(i) * d, d);
}

std::size_t PrefixContext::size() const {
  return std::visit([](const auto& v) { return v.size(); }, entries);
}

std::string PrefixContext::digest() const {
  std::string text;
  if (is_latent()) {
    text = "latent";
    for (const auto& p : points()) {
      text += ";";
      for (Eigen::Index i = 0; i < p.size(); ++i) {
        text += fmt::format("{}{}", i ? "," : "", p(i));
      }
    }
  } else {
    text = "tokens";
    for (const auto t : tokens()) {
      text += fmt::format(";{}", t);
    }
  }
  return sha256_hex(text);
}

Process::Process(ProcessSpec spec)
    : spec_(std::move(spec)), f_(SmoothMap::materialize(spec_.f, spec_.n, spec_.space.dim_x)) {}

void Process::check_window(const ContextWindow& window) const {
  if (window.dim_x() != dim_x() || window.size() != n()) {
    throw ConfigError(fmt::format("window is {} points of dim {}, process expects {} points of dim {}", window.size(),
                                  window.dim_x(), n(), dim_x()));
  }
  if (!window.flat().allFinite()) {
    throw ConfigError("window has non-finite coordinates");
  }
}

Vector Process::eval_f(const ContextWindow& window) const {
  check_window(window);
  return f_(window.flat());
}

ContextWindow Process::shift_step(const ContextWindow& window) const {
  const Vector next = eval_f(window);
  const auto d = static_cast<Eigen::Index>(dim_x());
  const Eigen::Index total = window.flat().size();
  Vector out(total);
  out.head(total - d) = window.flat().tail(total - d);
  out.tail(d) = next;
  return ContextWindow(std::move(out), dim_x());
}

ContextWindow Process::iterate_shift(ContextWindow window, std::size_t k) const {
  check_window(window);
  for (std::size_t i = 0; i < k; ++i) {
    window = shift_step(window);
  }
  return window;
}

std::vector<Vector> Process::autoregress(const MeasurementMap& g, const ContextWindow& window, std::size_t m) const {
  if (m == 0) {
    throw ConfigError("autoregression length m must be >= 1");
  }
  check_window(window);
  std::vector<Vector> out;
  out.reserve(m);
  ContextWindow w = window;
  for (std::size_t k = 0; k < m; ++k) {
    const Vector y = f_(w.flat());
    out.push_back(g(y));
    if (k + 1 < m) {
      const auto d = static_cast<Eigen::Index>(dim_x());
      const Eigen::Index total = w.flat().size();
      Vector next(total);
      next.head(total - d) = w.flat().tail(total - d);
      next.tail(d) = y;
      w = ContextWindow(std::move(next), dim_x());
    }
  }
  return out;
}

Vector Process::autoregress_flat(const MeasurementMap& g, const ContextWindow& window, std::size_t m) const {
  const auto parts = autoregress(g, window, m);
  const auto ell = static_cast<Eigen::Index>(g.ell());
  Vector flat(ell * static_cast<Eigen::Index>(m));
  for (std::size_t k = 0; k < parts.size(); ++k) {
    flat.segment(static_cast<Eigen::Index>(k) * ell, ell) = parts[k];
  }
  return flat;
}

ContextWindow Process::query_window(const PrefixContext& prefix, const Vector& last) const {
  if (!prefix.is_latent()) {
    throw ConfigError("simulated process needs a latent prefix");
  }
  if (prefix.size() + 1 != n()) {
    throw ConfigError(fmt::format("prefix has {} points, process needs n-1 = {}", prefix.size(), n() - 1));
  }
  std::vector<Vector> pts = prefix.points();
  pts.push_back(last);
  for (const auto& p : pts) {
    if (static_cast<std::size_t>(p.size()) != dim_x()) {
      throw ConfigError("prefix/query point dimension differs from dim_x");
    }
  }
  return ContextWindow::from_points(pts);
}

Matrix linear_shift_matrix(const Matrix& f_linear, std::size_t n, std::size_t dim_x) {
  const auto d = static_cast<Eigen::Index>(dim_x);
  const auto total = static_cast<Eigen::Index>(n * dim_x);
  if (n == 0 || dim_x == 0 || f_linear.rows() != d || f_linear.cols() != total) {
    throw ConfigError(fmt::format("linear f must be {}x{}, got {}x{}", d, total, f_linear.rows(), f_linear.cols()));
  }
  Matrix s = Matrix::Zero(total, total);
  for (Eigen::Index block = 0; block + 1 < static_cast<Eigen::Index>(n); ++block) {
    s.block(block * d, (block + 1) * d, d, d).setIdentity();
  }
  s.bottomRows(d) += f_linear;
  return s;
}

}  // namespace tprobe
