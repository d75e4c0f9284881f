#include "tprobe/probe/probe.hpp"

#include "tprobe/core/json_fields.hpp"
#include "tprobe/core/parallel.hpp"
#include "tprobe/core/seed.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <mutex>
#include <optional>

namespace tprobe {

namespace {

constexpr double kSumTol = 1e-6;

void check_positions(const std::vector<PositionDistribution>& positions, std::size_t m, TokenId token) {
  if (positions.size() != m) {
    throw DataIntegrityError(fmt::format("token {}: backend returned {} positions, expected {}", token,
                                         positions.size(), m));
  }
  for (std::size_t k = 0; k < positions.size(); ++k) {
    const auto& pos = positions[k];
    double total = 0.0;
    for (const auto& e : pos.entries) {
      if (!std::isfinite(e.prob) || e.prob < 0.0 || e.prob > 1.0) {
        throw DataIntegrityError(
            fmt::format("token {}: position {} has probability {} for token {}", token, k, e.prob, e.token));
      }
      total += e.prob;
    }
    if (total > 1.0 + kSumTol || (pos.complete && std::abs(total - 1.0) > kSumTol)) {
      throw DataIntegrityError(fmt::format("token {}: position {} probabilities sum to {}", token, k, total));
    }
  }
}

}  // namespace

std::uint64_t token_seed(std::uint64_t seed, TokenId token) { return derive_seed(seed, {seed_tag::kProbe, token}); }

Vector probe_token(BackendSession& session, const ProcessBackend& backend, TokenId token, const ProbeOption& option,
                   const PrefixContext& prefix, std::uint64_t seed) {
  option.validate();
  if (token >= backend.vocab_size()) {
    throw ConfigError(fmt::format("token id {} outside vocabulary of {}", token, backend.vocab_size()));
  }
  std::vector<PositionDistribution> positions;
  try {
    if (backend.provides_distributions()) {
      positions = session.distributions(prefix, token, option.m, option.needed_entries());
    } else {
      const auto samples = session.sample(prefix, token, option.m, option.repeats, token_seed(seed, token));
      for (const auto& pos : samples) {
        for (const TokenId t : pos) {
          if (t >= backend.vocab_size()) {
            throw DataIntegrityError(fmt::format("token {}: sampled id {} outside vocabulary", token, t));
          }
        }
      }
      positions = estimate_probabilities(samples);
    }
  } catch (const BackendError& e) {
    throw ProbeError(token, e.retriable(), fmt::format("token {}: {}", token, e.what()));
  } catch (const Error&) {
    throw;
  } catch (const std::exception& e) {
    throw ProbeError(token, true, fmt::format("token {}: {}", token, e.what()));
  }
  check_positions(positions, option.m, token);
  return flatten_option(positions, option, backend.vocab_size());
}

Vector probe_token(const ProcessBackend& backend, TokenId token, const ProbeOption& option,
                   const PrefixContext& prefix, std::uint64_t seed) {
  const auto session = backend.open_session();
  return probe_token(*session, backend, token, option, prefix, seed);
}

ProbeResult probe_all(const ProcessBackend& backend, std::vector<TokenId> tokens, const ProbeOption& option,
                      const PrefixContext& prefix, const ProbeRunOptions& run) {
  option.validate();
  if (tokens.empty()) {
    throw ConfigError("probe_all needs a nonempty token set");
  }
  std::sort(tokens.begin(), tokens.end());
  tokens.erase(std::unique(tokens.begin(), tokens.end()), tokens.end());
  const std::size_t workers = std::max<std::size_t>(1, run.workers);
  const std::size_t attempts = std::max<std::size_t>(1, run.max_attempts);

  std::vector<std::unique_ptr<BackendSession>> sessions;
  for (std::size_t w = 0; w < std::min(workers, tokens.size()); ++w) {
    sessions.push_back(backend.open_session());
  }
  std::vector<std::optional<Vector>> rows(tokens.size());
  std::vector<std::optional<ProbeFailure>> failures(tokens.size());

  parallel_for(tokens.size(), workers, [&](std::size_t i, std::size_t w) {
    const TokenId token = tokens[i];
    for (std::size_t attempt = 1; attempt <= attempts; ++attempt) {
      try {
        rows[i] = probe_token(*sessions[w], backend, token, option, prefix, run.seed);
        return;
      } catch (const ProbeError& e) {
        if (!e.retriable() || attempt == attempts) {
          failures[i] = ProbeFailure{token, e.kind(), e.what(), attempt};
          return;
        }
      } catch (const DataIntegrityError& e) {
        failures[i] = ProbeFailure{token, e.kind(), e.what(), attempt};
        return;
      }
    }
  });

  ProbeResult result;
  const std::size_t len = option.coord_len(backend.vocab_size());
  std::size_t ok = 0;
  for (const auto& r : rows) {
    ok += r.has_value() ? 1 : 0;
  }
  result.matrix.rows.values.resize(static_cast<Eigen::Index>(ok), static_cast<Eigen::Index>(len));
  std::size_t at = 0;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (rows[i]) {
      result.matrix.rows.ids.push_back(tokens[i]);
      result.matrix.rows.values.row(static_cast<Eigen::Index>(at++)) = rows[i]->transpose();
    } else if (failures[i]) {
      result.missing.push_back(*failures[i]);
    }
  }
  result.matrix.meta = MeasurementMeta{option, prefix.digest(), backend.identifier(), run.seed, backend.vocab_size()};
  return result;
}

void MeasurementMatrix::validate() const {
  const Matrix& v = rows.values;
  if (static_cast<std::size_t>(v.rows()) != rows.ids.size()) {
    throw DataIntegrityError("measurement matrix id count differs from row count");
  }
  if (v.size() > 0 && (v.minCoeff() < 0.0 || v.maxCoeff() > 1.0 + kSumTol)) {
    throw DataIntegrityError("measurement matrix has entries outside [0, 1]");
  }
  if (meta.option.variant == ProbeOption::Variant::option1) {
    const auto ell = static_cast<Eigen::Index>(meta.option.ell);
    for (Eigen::Index r = 0; r < v.rows(); ++r) {
      for (Eigen::Index c = 0; c + 1 < v.cols(); ++c) {
        if ((c + 1) % ell != 0 && v(r, c + 1) > v(r, c)) {
          throw DataIntegrityError(fmt::format("token {}: option1 block increases at column {}", rows.ids[r], c + 1));
        }
      }
    }
  }
}

nlohmann::json option_to_json(const ProbeOption& option) {
  nlohmann::json j = {{"variant", option_variant_name(option.variant)}, {"m", option.m}, {"repeats", option.repeats}};
  if (option.variant == ProbeOption::Variant::option1) {
    j["ell"] = option.ell;
  }
  return j;
}

ProbeOption option_from_json(const nlohmann::json& j) {
  JsonFields f(j, "option");
  ProbeOption o;
  o.variant = parse_option_variant(f.required<std::string>("variant"));
  o.m = f.get<std::size_t>("m", o.variant == ProbeOption::Variant::option3 ? std::size_t{1} : o.m);
  o.repeats = f.get<std::size_t>("repeats", o.repeats);
  if (o.variant == ProbeOption::Variant::option1) {
    o.ell = f.get<std::size_t>("ell", o.ell);
  }
  f.finish();
  o.validate();
  return o;
}

nlohmann::json meta_to_json(const MeasurementMeta& meta) {
  return {{"option", option_to_json(meta.option)},
          {"prefix_digest", meta.prefix_digest},
          {"backend", meta.backend},
          {"seed", meta.seed},
          {"vocab", meta.vocab},
          {"coord_len", meta.option.coord_len(meta.vocab)}};
}

MeasurementMeta meta_from_json(const nlohmann::json& j) {
  MeasurementMeta m;
  m.option = option_from_json(j.at("option"));
  m.prefix_digest = j.at("prefix_digest").get<std::string>();
  m.backend = j.at("backend").get<std::string>();
  m.seed = j.at("seed").get<std::uint64_t>();
  m.vocab = j.at("vocab").get<std::size_t>();
  return m;
}

std::filesystem::path sidecar_path(const std::filesystem::path& csv_path) {
  std::filesystem::path p = csv_path;
  p.replace_extension(".meta.json");
  return p;
}

void write_measurement_matrix(const std::filesystem::path& csv_path, const MeasurementMatrix& matrix) {
  write_labeled_csv(csv_path, matrix.rows);
  write_file_atomic(sidecar_path(csv_path), meta_to_json(matrix.meta).dump(2) + "\n");
}

nlohmann::json failures_to_json(const std::vector<ProbeFailure>& missing) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& f : missing) {
    arr.push_back({{"token_id", f.token}, {"kind", f.kind}, {"message", f.message}, {"attempts", f.attempts}});
  }
  return arr;
}

}  // namespace tprobe
