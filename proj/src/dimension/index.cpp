#include "tprobe/dimension/index.hpp"

#include "tprobe/core/errors.hpp"
#include "tprobe/core/seed.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>

namespace tprobe {

namespace {

constexpr std::size_t kMaxQuantilePairs = 4'000'000;
constexpr double kBoxSlack = 1e-12;

}  // namespace

DistanceIndex::DistanceIndex(LabeledRows cloud, std::size_t leaf_size) : ids_(std::move(cloud.ids)) {
  if (ids_.size() < 2) {
    throw DataError(fmt::format("distance index needs at least 2 points, got {}", ids_.size()));
  }
  if (static_cast<std::size_t>(cloud.values.rows()) != ids_.size()) {
    throw DataError("distance index: id count differs from row count");
  }
  if (!cloud.values.allFinite()) {
    throw DataError("distance index: non-finite coordinates");
  }
  points_ = cloud.values;
  order_.resize(ids_.size());
  std::iota(order_.begin(), order_.end(), std::size_t{0});
  nodes_.reserve(2 * ids_.size() / std::max<std::size_t>(1, leaf_size) + 2);
  build(0, ids_.size(), std::max<std::size_t>(1, leaf_size));

  double best = 0.0;
  for (std::size_t i = 0; i < size(); ++i) {
    for (std::size_t j = i + 1; j < size(); ++j) {
      best = std::max(best, (points_.row(static_cast<Eigen::Index>(i)) - points_.row(static_cast<Eigen::Index>(j)))
                                .squaredNorm());
    }
  }
  diameter_ = std::sqrt(best);
}

std::int64_t DistanceIndex::build(std::size_t begin, std::size_t end, std::size_t leaf_size) {
  const auto id = static_cast<std::int64_t>(nodes_.size());
  nodes_.push_back(Node{begin, end, -1, -1});
  const Eigen::Index dims = points_.cols();
  Eigen::RowVectorXd lo = Eigen::RowVectorXd::Constant(dims, std::numeric_limits<double>::infinity());
  Eigen::RowVectorXd hi = Eigen::RowVectorXd::Constant(dims, -std::numeric_limits<double>::infinity());
  for (std::size_t i = begin; i < end; ++i) {
    lo = lo.cwiseMin(points_.row(static_cast<Eigen::Index>(order_[i])));
    hi = hi.cwiseMax(points_.row(static_cast<Eigen::Index>(order_[i])));
  }
  box_lo_.insert(box_lo_.end(), lo.data(), lo.data() + dims);
  box_hi_.insert(box_hi_.end(), hi.data(), hi.data() + dims);
  if (end - begin <= leaf_size) {
    return id;
  }
  Eigen::Index axis = 0;
  (hi - lo).maxCoeff(&axis);
  const std::size_t mid = begin + (end - begin) / 2;
  std::nth_element(order_.begin() + static_cast<std::ptrdiff_t>(begin), order_.begin() + static_cast<std::ptrdiff_t>(mid),
                   order_.begin() + static_cast<std::ptrdiff_t>(end), [&](std::size_t a, std::size_t b) {
                     const double va = points_(static_cast<Eigen::Index>(a), axis);
                     const double vb = points_(static_cast<Eigen::Index>(b), axis);
                     return va != vb ? va < vb : a < b;
                   });
  const std::int64_t left = build(begin, mid, leaf_size);
  const std::int64_t right = build(mid, end, leaf_size);
  nodes_[static_cast<std::size_t>(id)].left = left;
  nodes_[static_cast<std::size_t>(id)].right = right;
  return id;
}

std::size_t DistanceIndex::position_of(std::uint32_t id) const {
  const auto it = std::find(ids_.begin(), ids_.end(), id);
  if (it == ids_.end()) {
    throw DataError(fmt::format("token {} not in the point cloud", id));
  }
  return static_cast<std::size_t>(it - ids_.begin());
}

std::size_t DistanceIndex::count_node(std::size_t node_id, const double* q, double r) const {
  const Node& node = nodes_[node_id];
  const std::size_t dims = dim();
  const double* box_lo = box_lo_.data() + node_id * dims;
  const double* box_hi = box_hi_.data() + node_id * dims;
  double near = 0.0;
  double far = 0.0;
  for (Eigen::Index k = 0; k < points_.cols(); ++k) {
    const double lo = box_lo[k];
    const double hi = box_hi[k];
    const double below = lo - q[k];
    const double above = q[k] - hi;
    const double gap = std::max({below, above, 0.0});
    near += gap * gap;
    const double span = std::max(std::abs(q[k] - lo), std::abs(q[k] - hi));
    far += span * span;
  }
  if (std::sqrt(near) > r * (1.0 + kBoxSlack)) {
    return 0;
  }
  if (std::sqrt(far) * (1.0 + kBoxSlack) < r) {
    return node.end - node.begin;
  }
  if (node.left < 0) {
    std::size_t count = 0;
    for (std::size_t i = node.begin; i < node.end; ++i) {
      const auto row = static_cast<Eigen::Index>(order_[i]);
      double s = 0.0;
      for (Eigen::Index k = 0; k < points_.cols(); ++k) {
        const double d = points_(row, k) - q[k];
        s += d * d;
      }
      if (std::sqrt(s) <= r) {
        ++count;
      }
    }
    return count;
  }
  return count_node(static_cast<std::size_t>(node.left), q, r) + count_node(static_cast<std::size_t>(node.right), q, r);
}

std::size_t DistanceIndex::range_count(const Vector& query, double r) const {
  if (static_cast<std::size_t>(query.size()) != dim()) {
    throw DataError(fmt::format("query has {} coordinates, index has {}", query.size(), dim()));
  }
  if (r < 0.0) {
    return 0;
  }
  return count_node(0, query.data(), r);
}

std::size_t DistanceIndex::neighbor_count(std::size_t pos, double r) const {
  const Vector q = point(pos);
  const std::size_t c = range_count(q, r);
  return c > 0 ? c - 1 : 0;
}

double DistanceIndex::distance(std::size_t a, std::size_t b) const {
  return (points_.row(static_cast<Eigen::Index>(a)) - points_.row(static_cast<Eigen::Index>(b))).norm();
}

std::vector<double> DistanceIndex::sorted_distances_from(std::size_t pos) const {
  std::vector<double> out;
  out.reserve(size() - 1);
  for (std::size_t j = 0; j < size(); ++j) {
    if (j != pos) {
      out.push_back(distance(pos, j));
    }
  }
  std::sort(out.begin(), out.end());
  return out;
}

double DistanceIndex::distance_quantile(double q) const {
  if (!(q >= 0.0 && q <= 1.0)) {
    throw ConfigError(fmt::format("quantile must lie in [0, 1], got {}", q));
  }
  const std::size_t n = size();
  const std::size_t pairs = n * (n - 1) / 2;
  std::vector<double> d;
  if (pairs <= kMaxQuantilePairs) {
    d.reserve(pairs);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = i + 1; j < n; ++j) {
        d.push_back(distance(i, j));
      }
    }
  } else {
    d.reserve(kMaxQuantilePairs);
    std::mt19937_64 rng(derive_seed(n, {seed_tag::kSample}));
    while (d.size() < kMaxQuantilePairs) {
      const std::size_t i = rng() % n;
      const std::size_t j = rng() % n;
      if (i != j) {
        d.push_back(distance(i, j));
      }
    }
  }
  const auto k = static_cast<std::size_t>(std::floor(q * static_cast<double>(d.size() - 1)));
  std::nth_element(d.begin(), d.begin() + static_cast<std::ptrdiff_t>(k), d.end());
  return d[k];
}

}  // namespace tprobe
