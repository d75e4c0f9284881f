#pragma once

#include "tprobe/core/linalg.hpp"
#include "tprobe/core/table_io.hpp"

#include <cstddef>
#include <cstdint>
#include <vector>

namespace tprobe {

/// Exact Euclidean range counting over a fixed point cloud (k-d tree with
/// bounding boxes). Immutable after construction; queries are safe to run
/// concurrently.
class DistanceIndex {
 public:
  /// Throws DataError on fewer than 2 points or non-finite coordinates.
  explicit DistanceIndex(LabeledRows cloud, std::size_t leaf_size = 16);

  std::size_t size() const noexcept { return ids_.size(); }
  std::size_t dim() const noexcept { return static_cast<std::size_t>(points_.cols()); }
  const std::vector<std::uint32_t>& ids() const noexcept { return ids_; }
  std::uint32_t id_at(std::size_t pos) const { return ids_.at(pos); }
  /// Row position of token `id`; throws DataError if absent.
  std::size_t position_of(std::uint32_t id) const;
  Vector point(std::size_t pos) const { return points_.row(static_cast<Eigen::Index>(pos)).transpose(); }

  /// Number of points at distance <= r from `query` (a point equal to the
  /// query counts).
  std::size_t range_count(const Vector& query, double r) const;
  /// range_count around stored point `pos`, not counting `pos` itself.
  std::size_t neighbor_count(std::size_t pos, double r) const;

  /// Distances from stored point `pos` to every other stored point, ascending.
  std::vector<double> sorted_distances_from(std::size_t pos) const;

  /// Largest pairwise distance (exact).
  double diameter() const noexcept { return diameter_; }
  /// q-quantile of pairwise distances (order statistic floor(q (P - 1))):
  /// exact up to 4e6 pairs, otherwise
  /// estimated from a fixed pseudo-random sample of 4e6 pairs.
  double distance_quantile(double q) const;

 private:
  struct Node {
    std::size_t begin = 0;
    std::size_t end = 0;
    std::int64_t left = -1;
    std::int64_t right = -1;
  };

  std::int64_t build(std::size_t begin, std::size_t end, std::size_t leaf_size);
  std::size_t count_node(std::size_t node, const double* q, double r) const;
  double distance(std::size_t a, std::size_t b) const;

  std::vector<std::uint32_t> ids_;
  RowMatrix points_;
  std::vector<std::size_t> order_;
  std::vector<Node> nodes_;
  std::vector<double> box_lo_;  // dim() entries per node
  std::vector<double> box_hi_;
  double diameter_ = 0.0;
};

}  // namespace tprobe
