#include "tprobe/probe/option.hpp"

#include "tprobe/core/errors.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <map>
#include <numeric>

namespace tprobe {

double PositionDistribution::total() const {
  double s = 0.0;
  for (const auto& e : entries) {
    s += e.prob;
  }
  return s;
}

void canonical_order(std::vector<TokenProb>& entries) {
  std::sort(entries.begin(), entries.end(), [](const TokenProb& a, const TokenProb& b) {
    if (a.prob != b.prob) {
      return a.prob > b.prob;
    }
    return a.token < b.token;
  });
}

PositionDistribution top_entries(const Vector& probs, std::size_t keep) {
  const auto size = static_cast<std::size_t>(probs.size());
  if (keep == 0 || keep > size) {
    keep = size;
  }
  std::vector<TokenId> order(size);
  std::iota(order.begin(), order.end(), TokenId{0});
  const auto cmp = [&](TokenId a, TokenId b) {
    if (probs(a) != probs(b)) {
      return probs(a) > probs(b);
    }
    return a < b;
  };
  std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(keep), order.end(), cmp);
  PositionDistribution out;
  out.complete = keep == size;
  out.entries.reserve(keep);
  for (std::size_t i = 0; i < keep; ++i) {
    out.entries.push_back({order[i], probs(order[i])});
  }
  return out;
}

ProbeOption ProbeOption::option1(std::size_t ell, std::size_t m, std::size_t repeats) {
  return ProbeOption{Variant::option1, ell, m, repeats};
}

ProbeOption ProbeOption::option2(std::size_t m, std::size_t repeats) {
  return ProbeOption{Variant::option2, 0, m, repeats};
}

ProbeOption ProbeOption::option3(std::size_t repeats) { return ProbeOption{Variant::option3, 0, 1, repeats}; }

std::size_t ProbeOption::coord_len(std::size_t vocab) const {
  return variant == Variant::option1 ? ell * m : vocab;
}

std::string option_variant_name(ProbeOption::Variant v) {
  switch (v) {
    case ProbeOption::Variant::option1:
      return "option1";
    case ProbeOption::Variant::option2:
      return "option2";
    case ProbeOption::Variant::option3:
      return "option3";
  }
  return "option1";
}

ProbeOption::Variant parse_option_variant(const std::string& name) {
  if (name == "option1") {
    return ProbeOption::Variant::option1;
  }
  if (name == "option2") {
    return ProbeOption::Variant::option2;
  }
  if (name == "option3") {
    return ProbeOption::Variant::option3;
  }
  throw ConfigError(fmt::format("unknown probe option '{}' (expected option1, option2 or option3)", name));
}

std::string ProbeOption::name() const {
  switch (variant) {
    case Variant::option1:
      return fmt::format("option1(ell={}, m={})", ell, m);
    case Variant::option2:
      return fmt::format("option2(m={})", m);
    case Variant::option3:
      return "option3(m=1)";
  }
  return {};
}

void ProbeOption::validate() const {
  if (m == 0) {
    throw ConfigError("probe option needs m >= 1");
  }
  if (repeats == 0) {
    throw ConfigError("probe option needs repeats >= 1");
  }
  if (variant == Variant::option1 && ell == 0) {
    throw ConfigError("option1 needs ell >= 1");
  }
  if (variant == Variant::option3 && m != 1) {
    throw ConfigError(fmt::format("option3 collects exactly one response token, got m = {}", m));
  }
}

std::vector<PositionDistribution> estimate_probabilities(const std::vector<std::vector<TokenId>>& samples) {
  std::vector<PositionDistribution> out;
  out.reserve(samples.size());
  for (std::size_t k = 0; k < samples.size(); ++k) {
    const auto& pos = samples[k];
    if (pos.empty()) {
      throw DataError(fmt::format("no samples at response position {}", k));
    }
    std::map<TokenId, std::size_t> counts;
    for (const TokenId t : pos) {
      ++counts[t];
    }
    PositionDistribution d;
    d.complete = true;
    d.entries.reserve(counts.size());
    const auto total = static_cast<double>(pos.size());
    for (const auto& [token, c] : counts) {
      d.entries.push_back({token, static_cast<double>(c) / total});
    }
    canonical_order(d.entries);
    out.push_back(std::move(d));
  }
  return out;
}

Vector flatten_option(const std::vector<PositionDistribution>& positions, const ProbeOption& option,
                      std::size_t vocab) {
  option.validate();
  if (positions.size() != option.m) {
    throw ConfigError(fmt::format("{} expects {} positions, got {}", option.name(), option.m, positions.size()));
  }
  switch (option.variant) {
    case ProbeOption::Variant::option1: {
      const auto ell = static_cast<Eigen::Index>(option.ell);
      Vector out = Vector::Zero(ell * static_cast<Eigen::Index>(option.m));
      for (std::size_t k = 0; k < positions.size(); ++k) {
        std::vector<TokenProb> entries = positions[k].entries;
        canonical_order(entries);
        const auto keep = std::min<std::size_t>(option.ell, entries.size());
        for (std::size_t i = 0; i < keep; ++i) {
          out(static_cast<Eigen::Index>(k) * ell + static_cast<Eigen::Index>(i)) = entries[i].prob;
        }
      }
      return out;
    }
    case ProbeOption::Variant::option2:
    case ProbeOption::Variant::option3: {
      Vector out = Vector::Zero(static_cast<Eigen::Index>(vocab));
      for (const auto& pos : positions) {
        for (const auto& e : pos.entries) {
          if (e.token >= vocab) {
            throw DataError(fmt::format("token id {} outside vocabulary of {}", e.token, vocab));
          }
          out(e.token) += e.prob;
        }
      }
      return out / static_cast<double>(positions.size());
    }
  }
  return {};
}

}  // namespace tprobe
