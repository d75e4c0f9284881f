#pragma once

#include "tprobe/core/linalg.hpp"
#include "tprobe/core/measurement_map.hpp"
#include "tprobe/core/smooth_map.hpp"

#include <cstddef>
#include <cstdint>
#include <string>
#include <variant>
#include <vector>

namespace tprobe {

using TokenId = std::uint32_t;

struct LatentSpaceSpec {
  std::size_t dim_x = 1;
};

struct ProcessSpec {
  LatentSpaceSpec space;
  std::size_t n = 1;
  SmoothMapSpec f;
};

/// n consecutive latent points, stored as one vectorized column
/// (x_1; x_2; ...; x_n).
class ContextWindow {
 public:
  ContextWindow() = default;
  ContextWindow(Vector flat, std::size_t dim_x);
  static ContextWindow from_points(const std::vector<Vector>& points);

  std::size_t size() const noexcept { return dim_x_ == 0 ? 0 : static_cast<std::size_t>(flat_.size()) / dim_x_; }
  std::size_t dim_x() const noexcept { return dim_x_; }
  Vector point(std::size_t i) const;
  const Vector& flat() const noexcept { return flat_; }

  bool operator==(const ContextWindow& other) const {
    return dim_x_ == other.dim_x_ && flat_.size() == other.flat_.size() && flat_ == other.flat_;
  }

 private:
  Vector flat_;
  std::size_t dim_x_ = 0;
};

/// The fixed first n-1 entries of every query: latent points for simulated
/// processes, token ids for remote ones.
struct PrefixContext {
  std::variant<std::vector<Vector>, std::vector<TokenId>> entries;

  std::size_t size() const;
  bool is_latent() const noexcept { return entries.index() == 0; }
  const std::vector<Vector>& points() const { return std::get<0>(entries); }
  const std::vector<TokenId>& tokens() const { return std::get<1>(entries); }
  /// SHA-256 over a canonical text rendering.
  std::string digest() const;
};

/// A materialized ProcessSpec.
class Process {
 public:
  explicit Process(ProcessSpec spec);

  const ProcessSpec& spec() const noexcept { return spec_; }
  std::size_t n() const noexcept { return spec_.n; }
  std::size_t dim_x() const noexcept { return spec_.space.dim_x; }
  const SmoothMap& f() const noexcept { return f_; }

  /// f(x_1, ..., x_n).
  Vector eval_f(const ContextWindow& window) const;
  /// (x_2, ..., x_n, f(x_1, ..., x_n)).
  ContextWindow shift_step(const ContextWindow& window) const;
  /// k-fold shift; k = 0 returns the window unchanged.
  ContextWindow iterate_shift(ContextWindow window, std::size_t k) const;
  /// Entry k is g(f(shift^k(window))), k = 0..m-1.
  std::vector<Vector> autoregress(const MeasurementMap& g, const ContextWindow& window, std::size_t m) const;
  /// autoregress() concatenated into one vector of length m * ell.
  Vector autoregress_flat(const MeasurementMap& g, const ContextWindow& window, std::size_t m) const;

  /// Window (prefix..., last); validates prefix length n - 1.
  ContextWindow query_window(const PrefixContext& prefix, const Vector& last) const;

 private:
  void check_window(const ContextWindow& window) const;

  ProcessSpec spec_;
  SmoothMap f_;
};

/// Block form of the shift of a linear f: super-diagonal identity blocks plus
/// f_linear as the last block row.
Matrix linear_shift_matrix(const Matrix& f_linear, std::size_t n, std::size_t dim_x);

}  // namespace tprobe
