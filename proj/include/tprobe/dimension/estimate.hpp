#pragma once

#include "tprobe/dimension/index.hpp"

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace tprobe {

/// Neighbor counts around one anchor at log-spaced radii.
struct VolumeRadiusCurve {
  std::uint32_t token_id = 0;
  std::vector<double> radii;
  std::vector<std::uint64_t> counts;  // anchor excluded
  std::uint64_t total_points = 0;
  /// 10th percentile of pairwise distances in the cloud, and the number of
  /// the anchor's neighbors within it.
  double reference_radius = 0.0;
  std::uint64_t reference_count = 0;
};

struct EstimatorConfig {
  std::size_t num_radii = 64;
  /// Single-slope window: radii whose counts lie in
  /// [min_count, max_fraction * total_points].
  std::uint64_t min_count = 10;
  double max_fraction = 0.5;
  /// Corner acceptance.
  double min_residual_reduction = 0.25;
  double min_slope_gap = 1.0;
  std::size_t min_segment = 8;
  std::size_t min_corner_radii = 12;
  /// Isolation: fewer neighbors than this within the reference radius.
  std::uint64_t min_neighbors = 5;
  double reference_quantile = 0.10;
};

struct Corner {
  double radius = 0.0;
  double small_radius_slope = 0.0;
  double large_radius_slope = 0.0;
  double residual_reduction = 0.0;
};

struct DimensionEstimate {
  std::uint32_t token_id = 0;
  double base_dim = 0.0;
  std::optional<double> fiber_dim;
  std::optional<double> corner_radius;
  bool isolated = false;
};

/// Shared per-cloud quantities (diameter, reference radius).
struct CloudScale {
  double diameter = 0.0;
  double reference_radius = 0.0;
};
CloudScale cloud_scale(const DistanceIndex& index, const EstimatorConfig& config = {});

/// Curve around stored point `pos`: `num_radii` log-spaced radii from
/// min(smallest nonzero neighbor distance, reference_radius / 100) to the
/// cloud diameter. Throws ConfigError if num_radii < 8.
VolumeRadiusCurve volume_radius_curve(const DistanceIndex& index, std::size_t pos, const CloudScale& scale,
                                      std::size_t num_radii = 64);

/// Least-squares slope of log(count) against log(radius) over radius
/// indices [begin, end), skipping zero counts. Throws UndefinedSlopeError if
/// fewer than 4 radii in the window have nonzero counts.
double loglog_slope(const VolumeRadiusCurve& curve, std::size_t begin, std::size_t end);

/// Radius index range [begin, end) where counts lie in
/// [min_count, max_fraction * total_points].
std::pair<std::size_t, std::size_t> fit_window(const VolumeRadiusCurve& curve, std::uint64_t min_count,
                                               double max_fraction);

/// Best two-segment fit of the log-log curve within the fit window.
/// Returns a corner only if it cuts the single-line residual by at least
/// min_residual_reduction and the slopes differ by at least min_slope_gap.
std::optional<Corner> detect_corner(const VolumeRadiusCurve& curve, const EstimatorConfig& config = {});

bool flag_isolated(const DimensionEstimate& estimate, const VolumeRadiusCurve& curve, std::uint64_t min_neighbors = 5);

DimensionEstimate estimate_local_dimension(const DistanceIndex& index, std::size_t pos, const CloudScale& scale,
                                           const EstimatorConfig& config = {},
                                           VolumeRadiusCurve* curve_out = nullptr);

struct EstimateRun {
  std::vector<DimensionEstimate> estimates;  // ascending token id
  std::vector<VolumeRadiusCurve> curves;     // same order
};

/// Estimates for the given stored positions (all when empty), in parallel.
EstimateRun estimate_all(const DistanceIndex& index, const EstimatorConfig& config, std::size_t workers,
                         std::vector<std::size_t> positions = {});

/// token_id,base_dim,fiber_dim,corner_radius,isolated (absent values empty).
std::string estimates_csv_text(const std::vector<DimensionEstimate>& estimates);
std::vector<DimensionEstimate> read_estimates_csv(const std::filesystem::path& path);
/// token_id,radius,count in long form.
std::string curves_csv_text(const std::vector<VolumeRadiusCurve>& curves);

}  // namespace tprobe
