#include "tprobe/dimension/estimate.hpp"

#include "tprobe/core/errors.hpp"
#include "tprobe/core/parallel.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>

namespace tprobe {

namespace {

struct LineFit {
  double slope = 0.0;
  double intercept = 0.0;
  double sse = 0.0;
};

LineFit fit_line(const double* x, const double* y, std::size_t n) {
  double mx = 0.0;
  double my = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= static_cast<double>(n);
  my /= static_cast<double>(n);
  double sxx = 0.0;
  double sxy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
  }
  LineFit f;
  f.slope = sxx > 0.0 ? sxy / sxx : 0.0;
  f.intercept = my - f.slope * mx;
  for (std::size_t i = 0; i < n; ++i) {
    const double r = y[i] - (f.intercept + f.slope * x[i]);
    f.sse += r * r;
  }
  return f;
}

std::vector<double> log_spaced(double lo, double hi, std::size_t count) {
  std::vector<double> out(count);
  const double a = std::log(lo);
  const double b = std::log(hi);
  for (std::size_t i = 0; i < count; ++i) {
    out[i] = std::exp(a + (b - a) * static_cast<double>(i) / static_cast<double>(count - 1));
  }
  out.front() = lo;
  out.back() = hi;
  return out;
}

std::uint64_t count_within(const std::vector<double>& sorted, double r) {
  return static_cast<std::uint64_t>(std::upper_bound(sorted.begin(), sorted.end(), r) - sorted.begin());
}

// Slope of log(1 + count) against log(radius) on radii log-spaced over
// [reference / 100, reference]. Counts stay below min_neighbors there, which
// bounds the slope by 1.5 ln(min_neighbors) / ln(100) < 1 for min_neighbors <= 5.
double sparse_slope(const std::vector<double>& sorted, double reference) {
  if (!(reference > 0.0)) {
    return 0.0;
  }
  const auto radii = log_spaced(reference / 100.0, reference, 32);
  std::vector<double> x;
  std::vector<double> y;
  for (double r : radii) {
    x.push_back(std::log(r));
    y.push_back(std::log1p(static_cast<double>(count_within(sorted, r))));
  }
  return std::max(0.0, fit_line(x.data(), y.data(), x.size()).slope);
}

std::string optional_text(const std::optional<double>& v) { return v ? format_real(*v) : std::string{}; }

}  // namespace

CloudScale cloud_scale(const DistanceIndex& index, const EstimatorConfig& config) {
  return CloudScale{index.diameter(), index.distance_quantile(config.reference_quantile)};
}

VolumeRadiusCurve volume_radius_curve(const DistanceIndex& index, std::size_t pos, const CloudScale& scale,
                                      std::size_t num_radii) {
  if (num_radii < 8) {
    throw ConfigError(fmt::format("volume-radius curve needs at least 8 radii, got {}", num_radii));
  }
  if (!(scale.diameter > 0.0)) {
    throw DataError("all points coincide; radii are undefined");
  }
  const std::vector<double> d = index.sorted_distances_from(pos);
  const auto first_nonzero = std::upper_bound(d.begin(), d.end(), 0.0);
  double lower = scale.reference_radius > 0.0 ? scale.reference_radius / 100.0 : scale.diameter * 1e-6;
  if (first_nonzero != d.end()) {
    lower = std::min(lower, *first_nonzero);
  }
  if (!(lower < scale.diameter)) {
    lower = scale.diameter / 100.0;
  }
  VolumeRadiusCurve c;
  c.token_id = index.id_at(pos);
  c.radii = log_spaced(lower, scale.diameter, num_radii);
  c.counts.reserve(num_radii);
  for (double r : c.radii) {
    c.counts.push_back(count_within(d, r));
  }
  c.total_points = index.size();
  c.reference_radius = scale.reference_radius;
  c.reference_count = count_within(d, scale.reference_radius);
  return c;
}

double loglog_slope(const VolumeRadiusCurve& curve, std::size_t begin, std::size_t end) {
  end = std::min(end, curve.radii.size());
  std::vector<double> x;
  std::vector<double> y;
  for (std::size_t i = begin; i < end; ++i) {
    if (curve.counts[i] > 0) {
      x.push_back(std::log(curve.radii[i]));
      y.push_back(std::log(static_cast<double>(curve.counts[i])));
    }
  }
  if (x.size() < 4) {
    throw UndefinedSlopeError(fmt::format("token {}: {} radii with nonzero counts in window [{}, {}), need 4",
                                          curve.token_id, x.size(), begin, end));
  }
  return fit_line(x.data(), y.data(), x.size()).slope;
}

std::pair<std::size_t, std::size_t> fit_window(const VolumeRadiusCurve& curve, std::uint64_t min_count,
                                               double max_fraction) {
  const double cap = max_fraction * static_cast<double>(curve.total_points);
  std::size_t begin = curve.counts.size();
  std::size_t end = begin;
  for (std::size_t i = 0; i < curve.counts.size(); ++i) {
    const auto c = curve.counts[i];
    if (c >= min_count && static_cast<double>(c) <= cap) {
      if (begin == curve.counts.size()) {
        begin = i;
      }
      end = i + 1;
    }
  }
  return {begin, end};
}

std::optional<Corner> detect_corner(const VolumeRadiusCurve& curve, const EstimatorConfig& config) {
  const auto [begin, end] = fit_window(curve, std::max<std::uint64_t>(1, config.min_count), config.max_fraction);
  const std::size_t w = end - begin;
  if (w < config.min_corner_radii || w < 2 * config.min_segment || config.min_segment < 2) {
    return std::nullopt;
  }
  std::vector<double> x(w);
  std::vector<double> y(w);
  for (std::size_t i = 0; i < w; ++i) {
    x[i] = std::log(curve.radii[begin + i]);
    y[i] = std::log(static_cast<double>(curve.counts[begin + i]));
  }
  const LineFit single = fit_line(x.data(), y.data(), w);
  if (!(single.sse > 0.0)) {
    return std::nullopt;
  }
  double best_sse = std::numeric_limits<double>::infinity();
  std::size_t best_b = 0;
  LineFit best_lo;
  LineFit best_hi;
  for (std::size_t b = config.min_segment; b + config.min_segment <= w; ++b) {
    const LineFit lo = fit_line(x.data(), y.data(), b);
    const LineFit hi = fit_line(x.data() + b, y.data() + b, w - b);
    if (lo.sse + hi.sse < best_sse) {
      best_sse = lo.sse + hi.sse;
      best_b = b;
      best_lo = lo;
      best_hi = hi;
    }
  }
  const double reduction = 1.0 - best_sse / single.sse;
  if (reduction < config.min_residual_reduction || std::abs(best_lo.slope - best_hi.slope) < config.min_slope_gap) {
    return std::nullopt;
  }
  double xc = (best_hi.intercept - best_lo.intercept) / (best_lo.slope - best_hi.slope);
  xc = std::clamp(xc, x[best_b - 1], x[best_b]);
  return Corner{std::exp(xc), best_lo.slope, best_hi.slope, reduction};
}

bool flag_isolated(const DimensionEstimate& estimate, const VolumeRadiusCurve& curve, std::uint64_t min_neighbors) {
  return estimate.base_dim < 1.0 || curve.reference_count < min_neighbors;
}

DimensionEstimate estimate_local_dimension(const DistanceIndex& index, std::size_t pos, const CloudScale& scale,
                                           const EstimatorConfig& config, VolumeRadiusCurve* curve_out) {
  VolumeRadiusCurve curve = volume_radius_curve(index, pos, scale, config.num_radii);
  DimensionEstimate est;
  est.token_id = curve.token_id;

  bool sparse = curve.reference_count < config.min_neighbors;
  if (!sparse) {
    if (const auto corner = detect_corner(curve, config)) {
      est.base_dim = corner->large_radius_slope;
      est.fiber_dim = corner->small_radius_slope;
      est.corner_radius = corner->radius;
    } else {
      auto [begin, end] = fit_window(curve, config.min_count, config.max_fraction);
      if (end - begin < 4) {
        std::tie(begin, end) = fit_window(curve, 1, 1.0);
      }
      if (end - begin >= 4) {
        est.base_dim = loglog_slope(curve, begin, end);
      } else {
        sparse = true;
      }
    }
  }
  if (sparse) {
    est.base_dim = sparse_slope(index.sorted_distances_from(pos), scale.reference_radius);
  }
  est.isolated = flag_isolated(est, curve, config.min_neighbors);
  if (curve_out != nullptr) {
    *curve_out = std::move(curve);
  }
  return est;
}

EstimateRun estimate_all(const DistanceIndex& index, const EstimatorConfig& config, std::size_t workers,
                         std::vector<std::size_t> positions) {
  if (positions.empty()) {
    positions.resize(index.size());
    std::iota(positions.begin(), positions.end(), std::size_t{0});
  }
  std::sort(positions.begin(), positions.end(),
            [&](std::size_t a, std::size_t b) { return index.id_at(a) < index.id_at(b); });
  const CloudScale scale = cloud_scale(index, config);
  EstimateRun run;
  run.estimates.resize(positions.size());
  run.curves.resize(positions.size());
  parallel_for(positions.size(), workers, [&](std::size_t i, std::size_t) {
    run.estimates[i] = estimate_local_dimension(index, positions[i], scale, config, &run.curves[i]);
  });
  return run;
}

std::string estimates_csv_text(const std::vector<DimensionEstimate>& estimates) {
  std::string out = "token_id,base_dim,fiber_dim,corner_radius,isolated\n";
  for (const auto& e : estimates) {
    out += fmt::format("{},{},{},{},{}\n", e.token_id, format_real(e.base_dim), optional_text(e.fiber_dim),
                       optional_text(e.corner_radius), e.isolated ? "true" : "false");
  }
  return out;
}

std::vector<DimensionEstimate> read_estimates_csv(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw DataError("cannot open " + path.string());
  }
  std::string line;
  std::getline(in, line);
  if (line.rfind("token_id,base_dim", 0) != 0) {
    throw DataError(path.string() + ": not an estimates file");
  }
  const auto parse_real = [&](const std::string& s, std::size_t lineno) {
    double v = 0.0;
    const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc{} || res.ptr != s.data() + s.size() || !std::isfinite(v)) {
      throw DataError(fmt::format("{}:{}: bad number '{}'", path.string(), lineno, s));
    }
    return v;
  };
  std::vector<DimensionEstimate> out;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) {
      continue;
    }
    std::vector<std::string> f;
    std::size_t start = 0;
    for (std::size_t comma; (comma = line.find(',', start)) != std::string::npos; start = comma + 1) {
      f.push_back(line.substr(start, comma - start));
    }
    f.push_back(line.substr(start));
    if (f.size() != 5) {
      throw DataError(fmt::format("{}:{}: expected 5 fields", path.string(), lineno));
    }
    DimensionEstimate e;
    std::uint32_t id = 0;
    if (std::from_chars(f[0].data(), f[0].data() + f[0].size(), id).ec != std::errc{}) {
      throw DataError(fmt::format("{}:{}: bad token id", path.string(), lineno));
    }
    e.token_id = id;
    e.base_dim = parse_real(f[1], lineno);
    if (!f[2].empty()) {
      e.fiber_dim = parse_real(f[2], lineno);
    }
    if (!f[3].empty()) {
      e.corner_radius = parse_real(f[3], lineno);
    }
    if (f[4] != "true" && f[4] != "false") {
      throw DataError(fmt::format("{}:{}: isolated must be true or false", path.string(), lineno));
    }
    e.isolated = f[4] == "true";
    out.push_back(e);
  }
  return out;
}

std::string curves_csv_text(const std::vector<VolumeRadiusCurve>& curves) {
  fmt::memory_buffer out;
  fmt::format_to(std::back_inserter(out), "token_id,radius,count\n");
  for (const auto& c : curves) {
    for (std::size_t i = 0; i < c.radii.size(); ++i) {
      fmt::format_to(std::back_inserter(out), "{},{},{}\n", c.token_id, c.radii[i], c.counts[i]);
    }
  }
  return fmt::to_string(out);
}

}  // namespace tprobe
