#pragma once

#include "tprobe/core/linalg.hpp"
#include "tprobe/core/process.hpp"

#include <cstddef>
#include <string>
#include <vector>

namespace tprobe {

struct TokenProb {
  TokenId token = 0;
  double prob = 0.0;
};

/// Probabilities observed at one response position, sorted by descending
/// probability with ties broken by ascending token id. `complete` marks a
/// full distribution over the vocabulary (as opposed to a top-k list).
struct PositionDistribution {
  std::vector<TokenProb> entries;
  bool complete = false;

  double total() const;
};

/// Sorts `entries` into canonical order (descending probability, then
/// ascending id).
void canonical_order(std::vector<TokenProb>& entries);

/// The `keep` most probable tokens of a dense distribution in canonical
/// order; keep = 0 keeps all of them.
PositionDistribution top_entries(const Vector& probs, std::size_t keep);

/// How per-position probabilities become coordinates.
///   option1: top-ell probabilities per position, position-major, length ell*m
///   option2: mean over m positions of each token's probability, length vocab
///   option3: the first position's distribution, m = 1, length vocab
struct ProbeOption {
  enum class Variant { option1, option2, option3 };

  Variant variant = Variant::option1;
  std::size_t ell = 3;
  std::size_t m = 30;
  std::size_t repeats = 256;

  static ProbeOption option1(std::size_t ell, std::size_t m, std::size_t repeats = 256);
  static ProbeOption option2(std::size_t m, std::size_t repeats = 256);
  static ProbeOption option3(std::size_t repeats = 256);

  std::size_t coord_len(std::size_t vocab) const;
  /// Entries per position a backend must return (0 = whole distribution).
  std::size_t needed_entries() const noexcept { return variant == Variant::option1 ? ell : 0; }
  /// ell as it enters the dimension gate.
  std::size_t gate_ell(std::size_t vocab) const noexcept { return variant == Variant::option1 ? ell : vocab; }
  std::string name() const;
  /// Throws ConfigError if the fields are inconsistent.
  void validate() const;
};

std::string option_variant_name(ProbeOption::Variant v);
ProbeOption::Variant parse_option_variant(const std::string& name);

/// Relative frequencies per position from sampled token ids, indexed
/// [position][sample]. Throws DataError on an empty position.
std::vector<PositionDistribution> estimate_probabilities(const std::vector<std::vector<TokenId>>& samples);

/// Flattens m per-position distributions into one coordinate vector.
/// Throws ConfigError if the number of positions disagrees with the option.
Vector flatten_option(const std::vector<PositionDistribution>& positions, const ProbeOption& option, std::size_t vocab);

}  // namespace tprobe
