#pragma once

#include "tprobe/dimension/estimate.hpp"

#include <json.hpp>

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace tprobe {

/// A stratum selects tokens whose dimension lies in [min_dim, max_dim).
struct StratumSpec {
  std::string name;
  std::size_t size = 0;
  std::optional<double> min_dim;
  std::optional<double> max_dim;
};

struct Stratum {
  std::string name;
  std::vector<std::uint32_t> ids;  // ascending
};

/// Simple random samples per stratum, drawn in the order given; ids taken by
/// an earlier stratum are not eligible for later ones. Throws DataError if a
/// stratum has fewer eligible tokens than requested.
std::vector<Stratum> stratified_sample(const std::map<std::uint32_t, double>& dims,
                                       const std::vector<StratumSpec>& spec, std::uint64_t seed);

/// Five-number summary with Tukey whiskers (most extreme points within
/// 1.5 IQR of the quartiles). Quartiles interpolate linearly between order
/// statistics.
struct BoxSummary {
  std::size_t count = 0;
  double min = 0.0;
  double q1 = 0.0;
  double median = 0.0;
  double q3 = 0.0;
  double max = 0.0;
  double whisker_low = 0.0;
  double whisker_high = 0.0;
  std::vector<double> outliers;
};
BoxSummary box_summary(std::vector<double> values);
double quantile_linear(const std::vector<double>& sorted, double q);

struct StratumComparison {
  std::string name;
  BoxSummary a;
  BoxSummary b;
  double bias = 0.0;          // median of (b - a) over the stratum's tokens
  double spread_ratio = 1.0;  // IQR(b) / IQR(a)
};

struct StrataComparison {
  std::vector<StratumComparison> strata;
  double bias = 0.0;
  double spread_ratio = 1.0;
};

/// Throws DataError naming the ids missing from either source.
StrataComparison compare_estimates(const std::map<std::uint32_t, double>& source_a,
                                   const std::map<std::uint32_t, double>& source_b,
                                   const std::vector<Stratum>& strata);

std::map<std::uint32_t, double> base_dims(const std::vector<DimensionEstimate>& estimates);

nlohmann::json box_to_json(const BoxSummary& box);
nlohmann::json comparison_to_json(const StrataComparison& cmp);

}  // namespace tprobe
