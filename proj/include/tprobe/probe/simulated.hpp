#pragma once

#include "tprobe/core/measurement_map.hpp"
#include "tprobe/core/process.hpp"
#include "tprobe/probe/backend.hpp"

#include <optional>
#include <string>
#include <vector>

namespace tprobe {

/// Token id -> latent coordinates (row = id).
class TokenTable {
 public:
  TokenTable() = default;
  explicit TokenTable(Matrix coordinates, std::vector<std::string> strings = {});

  std::size_t vocab_size() const noexcept { return static_cast<std::size_t>(coords_.rows()); }
  std::size_t dim_x() const noexcept { return static_cast<std::size_t>(coords_.cols()); }
  Vector point(TokenId id) const;
  const Matrix& coordinates() const noexcept { return coords_; }
  const std::vector<std::string>& strings() const noexcept { return strings_; }

 private:
  Matrix coords_;
  std::vector<std::string> strings_;
};

enum class SamplingMode { analytic, empirical };

struct SimulatedBackendSpec {
  ProcessSpec process;
  MeasurementMapSpec measurement;
  SamplingMode mode = SamplingMode::analytic;
  /// Applied on top of g's distribution when sampling.
  double temperature = 1.0;
  /// Feed the sampled token's coordinates back as the next context entry
  /// instead of f's prediction. This leaves the smooth iteration model.
  bool discretized = false;
};

/// A simulated autoregressive process read out through a softmax over the
/// token vocabulary.
class SimulatedBackend final : public ProcessBackend {
 public:
  /// The read-out vocabulary must match the table (a random read-out with
  /// vocab 0 adopts the table's size).
  SimulatedBackend(SimulatedBackendSpec spec, TokenTable table);

  std::string identifier() const override;
  std::size_t vocab_size() const override { return table_.vocab_size(); }
  bool provides_distributions() const override { return spec_.mode == SamplingMode::analytic && !spec_.discretized; }
  std::unique_ptr<BackendSession> open_session() const override;

  const Process& process() const noexcept { return process_; }
  const MeasurementMap& g() const noexcept { return g_; }
  const TokenTable& table() const noexcept { return table_; }
  const SimulatedBackendSpec& spec() const noexcept { return spec_; }

  /// n-1 copies of the coordinates of `neutral`.
  PrefixContext neutral_prefix(TokenId neutral = 0) const;

  /// Full response distributions along the deterministic trajectory.
  std::vector<Vector> trajectory_distributions(const PrefixContext& prefix, TokenId token, std::size_t m) const;

 private:
  SimulatedBackendSpec spec_;
  TokenTable table_;
  Process process_;
  MeasurementMap g_;
};

}  // namespace tprobe
