#include "tprobe/dimension/strata.hpp"

#include "tprobe/core/errors.hpp"
#include "tprobe/core/seed.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <random>
#include <set>

namespace tprobe {

namespace {

double spread(const BoxSummary& s) { return s.q3 - s.q1; }

double ratio(double num, double den) {
  if (den == 0.0) {
    return num == 0.0 ? 1.0 : std::numeric_limits<double>::infinity();
  }
  return num / den;
}

double median_of(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  return quantile_linear(v, 0.5);
}

}  // namespace

std::vector<Stratum> stratified_sample(const std::map<std::uint32_t, double>& dims,
                                       const std::vector<StratumSpec>& spec, std::uint64_t seed) {
  std::set<std::uint32_t> taken;
  std::vector<Stratum> out;
  for (std::size_t s = 0; s < spec.size(); ++s) {
    const auto& st = spec[s];
    std::vector<std::uint32_t> eligible;
    for (const auto& [id, dim] : dims) {
      if (taken.count(id) != 0) {
        continue;
      }
      if ((st.min_dim && dim < *st.min_dim) || (st.max_dim && !(dim < *st.max_dim))) {
        continue;
      }
      eligible.push_back(id);
    }
    if (eligible.size() < st.size) {
      throw DataError(fmt::format("stratum '{}' requests {} tokens but only {} are available", st.name, st.size,
                                  eligible.size()));
    }
    std::mt19937_64 rng(derive_seed(seed, {seed_tag::kStrata, s}));
    // Partial Fisher-Yates with an explicit bounded draw.
    for (std::size_t i = 0; i < st.size; ++i) {
      const std::size_t span = eligible.size() - i;
      const std::size_t j = i + static_cast<std::size_t>(rng() % span);
      std::swap(eligible[i], eligible[j]);
    }
    Stratum picked{st.name, std::vector<std::uint32_t>(eligible.begin(), eligible.begin() + static_cast<std::ptrdiff_t>(st.size))};
    std::sort(picked.ids.begin(), picked.ids.end());
    taken.insert(picked.ids.begin(), picked.ids.end());
    out.push_back(std::move(picked));
  }
  return out;
}

double quantile_linear(const std::vector<double>& sorted, double q) {
  if (sorted.empty()) {
    throw DataError("quantile of an empty sample");
  }
  const double h = q * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

BoxSummary box_summary(std::vector<double> values) {
  if (values.empty()) {
    throw DataError("box summary of an empty sample");
  }
  std::sort(values.begin(), values.end());
  BoxSummary s;
  s.count = values.size();
  s.min = values.front();
  s.max = values.back();
  s.q1 = quantile_linear(values, 0.25);
  s.median = quantile_linear(values, 0.5);
  s.q3 = quantile_linear(values, 0.75);
  const double lo_fence = s.q1 - 1.5 * spread(s);
  const double hi_fence = s.q3 + 1.5 * spread(s);
  s.whisker_low = s.q1;
  s.whisker_high = s.q3;
  for (double v : values) {
    if (v < lo_fence || v > hi_fence) {
      s.outliers.push_back(v);
    } else {
      s.whisker_low = std::min(s.whisker_low, v);
      s.whisker_high = std::max(s.whisker_high, v);
    }
  }
  return s;
}

StrataComparison compare_estimates(const std::map<std::uint32_t, double>& source_a,
                                   const std::map<std::uint32_t, double>& source_b,
                                   const std::vector<Stratum>& strata) {
  std::vector<std::uint32_t> missing;
  for (const auto& st : strata) {
    for (const auto id : st.ids) {
      if (source_a.count(id) == 0 || source_b.count(id) == 0) {
        missing.push_back(id);
      }
    }
  }
  if (!missing.empty()) {
    std::sort(missing.begin(), missing.end());
    missing.erase(std::unique(missing.begin(), missing.end()), missing.end());
    throw DataError(fmt::format("sources do not cover tokens: {}", fmt::join(missing, ", ")));
  }
  StrataComparison cmp;
  std::vector<double> all_a;
  std::vector<double> all_b;
  std::vector<double> all_diff;
  for (const auto& st : strata) {
    if (st.ids.empty()) {
      throw DataError(fmt::format("stratum '{}' is empty", st.name));
    }
    std::vector<double> a;
    std::vector<double> b;
    std::vector<double> diff;
    for (const auto id : st.ids) {
      a.push_back(source_a.at(id));
      b.push_back(source_b.at(id));
      diff.push_back(b.back() - a.back());
    }
    StratumComparison sc;
    sc.name = st.name;
    sc.a = box_summary(a);
    sc.b = box_summary(b);
    sc.bias = median_of(diff);
    sc.spread_ratio = ratio(spread(sc.b), spread(sc.a));
    all_a.insert(all_a.end(), a.begin(), a.end());
    all_b.insert(all_b.end(), b.begin(), b.end());
    all_diff.insert(all_diff.end(), diff.begin(), diff.end());
    cmp.strata.push_back(std::move(sc));
  }
  if (!all_diff.empty()) {
    cmp.bias = median_of(all_diff);
    cmp.spread_ratio = ratio(spread(box_summary(all_b)), spread(box_summary(all_a)));
  }
  return cmp;
}

std::map<std::uint32_t, double> base_dims(const std::vector<DimensionEstimate>& estimates) {
  std::map<std::uint32_t, double> out;
  for (const auto& e : estimates) {
    out[e.token_id] = e.base_dim;
  }
  return out;
}

nlohmann::json box_to_json(const BoxSummary& box) {
  return {{"count", box.count},       {"min", box.min},
          {"q1", box.q1},             {"median", box.median},
          {"q3", box.q3},             {"max", box.max},
          {"whisker_low", box.whisker_low}, {"whisker_high", box.whisker_high},
          {"outliers", box.outliers}};
}

nlohmann::json comparison_to_json(const StrataComparison& cmp) {
  nlohmann::json strata = nlohmann::json::array();
  for (const auto& s : cmp.strata) {
    strata.push_back({{"name", s.name},
                      {"a", box_to_json(s.a)},
                      {"b", box_to_json(s.b)},
                      {"bias", s.bias},
                      {"spread_ratio", std::isfinite(s.spread_ratio) ? nlohmann::json(s.spread_ratio) : nlohmann::json(nullptr)}});
  }
  return {{"strata", strata},
          {"bias", cmp.bias},
          {"spread_ratio", std::isfinite(cmp.spread_ratio) ? nlohmann::json(cmp.spread_ratio) : nlohmann::json(nullptr)}};
}

}  // namespace tprobe
