#include "tprobe/probe/simulated.hpp"

#include "tprobe/core/seed.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <random>

namespace tprobe {

TokenTable::TokenTable(Matrix coordinates, std::vector<std::string> strings)
    : coords_(std::move(coordinates)), strings_(std::move(strings)) {
  if (coords_.rows() == 0 || coords_.cols() == 0) {
    throw ConfigError("token table must have at least one token and one coordinate");
  }
  if (!coords_.allFinite()) {
    throw DataError("token table has non-finite coordinates");
  }
  if (!strings_.empty() && strings_.size() != static_cast<std::size_t>(coords_.rows())) {
    throw ConfigError("token table strings and coordinates differ in length");
  }
}

Vector TokenTable::point(TokenId id) const {
  if (id >= vocab_size()) {
    throw ConfigError(fmt::format("token id {} outside vocabulary of {}", id, vocab_size()));
  }
  return coords_.row(id).transpose();
}

namespace {

MeasurementMapSpec adapt_measurement(MeasurementMapSpec spec, const TokenTable& table) {
  auto* readout = std::get_if<SoftmaxReadout>(&spec.kind);
  if (readout == nullptr) {
    throw ConfigError("simulated probing needs a softmax-readout measurement");
  }
  if (readout->readout.kind == ReadoutSpec::Kind::random) {
    if (readout->readout.vocab == 0) {
      readout->readout.vocab = table.vocab_size();
    } else if (readout->readout.vocab != table.vocab_size()) {
      throw ConfigError(fmt::format("read-out vocabulary {} differs from token table size {}", readout->readout.vocab,
                                    table.vocab_size()));
    }
  }
  return spec;
}

double uniform01(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

Vector tempered(const Vector& p, double temperature) {
  if (temperature == 1.0) {
    return p;
  }
  // p^(1/T), computed in log space.
  Vector logp = p.array().log().matrix() / temperature;
  const double top = logp.maxCoeff();
  Vector e = (logp.array() - top).exp().matrix();
  return e / e.sum();
}

std::vector<double> cumulative(const Vector& p) {
  std::vector<double> c(static_cast<std::size_t>(p.size()));
  double s = 0.0;
  for (Eigen::Index i = 0; i < p.size(); ++i) {
    s += p(i);
    c[static_cast<std::size_t>(i)] = s;
  }
  return c;
}

TokenId draw(const std::vector<double>& cdf, std::mt19937_64& rng) {
  const double u = uniform01(rng) * cdf.back();
  const auto it = std::upper_bound(cdf.begin(), cdf.end(), u);
  const auto idx = static_cast<std::size_t>(it - cdf.begin());
  return static_cast<TokenId>(std::min(idx, cdf.size() - 1));
}

class SimulatedSession final : public BackendSession {
 public:
  explicit SimulatedSession(const SimulatedBackend& backend) : b_(backend) {}

  std::vector<PositionDistribution> distributions(const PrefixContext& prefix, TokenId token, std::size_t m,
                                                  std::size_t keep) override {
    std::vector<PositionDistribution> out;
    for (const Vector& p : b_.trajectory_distributions(prefix, token, m)) {
      out.push_back(top_entries(p, keep));
    }
    return out;
  }

  std::vector<std::vector<TokenId>> sample(const PrefixContext& prefix, TokenId token, std::size_t m,
                                           std::size_t repeats, std::uint64_t seed) override {
    std::vector<std::vector<TokenId>> out(m, std::vector<TokenId>(repeats));
    const double temperature = b_.spec().temperature;
    if (!b_.spec().discretized) {
      std::vector<std::vector<double>> cdfs;
      for (const Vector& p : b_.trajectory_distributions(prefix, token, m)) {
        cdfs.push_back(cumulative(tempered(p, temperature)));
      }
      for (std::size_t r = 0; r < repeats; ++r) {
        std::mt19937_64 rng(derive_seed(seed, {seed_tag::kSample, r}));
        for (std::size_t k = 0; k < m; ++k) {
          out[k][r] = draw(cdfs[k], rng);
        }
      }
      return out;
    }
    const Process& proc = b_.process();
    const ContextWindow start = proc.query_window(prefix, b_.table().point(token));
    const auto d = static_cast<Eigen::Index>(proc.dim_x());
    for (std::size_t r = 0; r < repeats; ++r) {
      std::mt19937_64 rng(derive_seed(seed, {seed_tag::kSample, r}));
      ContextWindow w = start;
      for (std::size_t k = 0; k < m; ++k) {
        const Vector y = proc.eval_f(w);
        const TokenId t = draw(cumulative(tempered(b_.g().distribution(y), temperature)), rng);
        out[k][r] = t;
        if (k + 1 < m) {
          Vector next(w.flat().size());
          next.head(next.size() - d) = w.flat().tail(next.size() - d);
          next.tail(d) = b_.table().point(t);
          w = ContextWindow(std::move(next), proc.dim_x());
        }
      }
    }
    return out;
  }

 private:
  const SimulatedBackend& b_;
};

}  // namespace

SimulatedBackend::SimulatedBackend(SimulatedBackendSpec spec, TokenTable table)
    : spec_(std::move(spec)),
      table_(std::move(table)),
      process_(spec_.process),
      g_(MeasurementMap::materialize(adapt_measurement(spec_.measurement, table_), spec_.process.space.dim_x,
                                     &table_.coordinates())) {
  if (table_.dim_x() != process_.dim_x()) {
    throw ConfigError(fmt::format("token table has {} coordinates, process dim_x is {}", table_.dim_x(),
                                  process_.dim_x()));
  }
  if (!(spec_.temperature > 0.0)) {
    throw ConfigError("sampling temperature must be positive");
  }
}

std::string SimulatedBackend::identifier() const {
  std::string id = spec_.mode == SamplingMode::analytic ? "simulated:analytic"
                                                        : fmt::format("simulated:empirical(T={})", spec_.temperature);
  if (spec_.discretized) {
    id += "+discretized";
  }
  return id;
}

std::unique_ptr<BackendSession> SimulatedBackend::open_session() const {
  return std::make_unique<SimulatedSession>(*this);
}

PrefixContext SimulatedBackend::neutral_prefix(TokenId neutral) const {
  return PrefixContext{std::vector<Vector>(process_.n() - 1, table_.point(neutral))};
}

std::vector<Vector> SimulatedBackend::trajectory_distributions(const PrefixContext& prefix, TokenId token,
                                                               std::size_t m) const {
  if (m == 0) {
    throw ConfigError("response length m must be >= 1");
  }
  const ContextWindow start = process_.query_window(prefix, table_.point(token));
  std::vector<Vector> out;
  out.reserve(m);
  ContextWindow w = start;
  for (std::size_t k = 0; k < m; ++k) {
    const Vector y = process_.eval_f(w);
    out.push_back(g_.distribution(y));
    if (k + 1 < m) {
      const auto d = static_cast<Eigen::Index>(process_.dim_x());
      Vector next(w.flat().size());
      next.head(next.size() - d) = w.flat().tail(next.size() - d);
      next.tail(d) = y;
      w = ContextWindow(std::move(next), process_.dim_x());
    }
  }
  return out;
}

}  // namespace tprobe
