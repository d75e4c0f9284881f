#pragma once

#include "tprobe/core/linalg.hpp"

#include <cstddef>
#include <cstdint>
#include <memory>
#include <string>
#include <variant>

namespace tprobe {

// Token-logit linear map: logits = W y + b. `random` draws W with entries of
// variance weight_scale^2 / dim_x and per-token biases of scale bias_scale;
// `tied` uses the token table itself as W (no bias).
struct ReadoutSpec {
  enum class Kind { random, tied };
  Kind kind = Kind::random;
  std::size_t vocab = 0;
  double weight_scale = 1.0;
  double bias_scale = 3.0;
  std::uint64_t seed = 0;
};

struct IdentityMeasure {};

struct SoftmaxReadout {
  ReadoutSpec readout;
  double temperature = 1.0;
};

// "constant": g = value * ones(ell).  "random-smooth": g = tanh(A x + b).
struct CustomMeasure {
  std::string name;
  double value = 0.5;
  std::uint64_t seed = 0;
};

using MeasureKind = std::variant<IdentityMeasure, SoftmaxReadout, CustomMeasure>;

struct MeasurementMapSpec {
  MeasureKind kind = IdentityMeasure{};
  std::size_t ell = 1;
};

std::string measure_kind_name(const MeasureKind& kind);

namespace detail {
struct ReadoutImpl;
}

/// Materialized g : X -> Y with dim Y = ell. For the softmax read-out, the
/// measurement is the ell largest token probabilities, sorted descending.
class MeasurementMap {
 public:
  /// `tied_table` (vocab x dim_x) is required for tied read-outs and ignored
  /// otherwise.
  static MeasurementMap materialize(const MeasurementMapSpec& spec, std::size_t dim_x,
                                    const Matrix* tied_table = nullptr);

  Vector operator()(const Vector& latent) const;

  bool has_distribution() const noexcept { return readout_ != nullptr; }
  /// Full token distribution at `latent` (softmax read-out only).
  Vector distribution(const Vector& latent) const;

  std::size_t ell() const noexcept { return ell_; }
  std::size_t dim_x() const noexcept { return dim_x_; }
  std::size_t vocab() const noexcept;

 private:
  enum class Kind { identity, softmax, constant, random_smooth };

  Kind kind_ = Kind::identity;
  std::size_t ell_ = 0;
  std::size_t dim_x_ = 0;
  std::shared_ptr<const detail::ReadoutImpl> readout_;
  Matrix a_;
  Vector b_;
};

/// Numerically stable softmax of logits / temperature.
Vector softmax(const Vector& logits, double temperature = 1.0);

/// Largest `count` entries of `probs`, descending; ties broken by ascending
/// index. Pads with zeros if `probs` is shorter than `count`.
Vector top_values(const Vector& probs, std::size_t count);

}  // namespace tprobe
