#include "tprobe/core/measurement_map.hpp"

#include "tprobe/core/errors.hpp"
#include "tprobe/core/seed.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <vector>

namespace tprobe {

namespace detail {

struct ReadoutImpl {
  Matrix weights;
  Vector bias;
  double temperature = 1.0;
};

}  // namespace detail

std::string measure_kind_name(const MeasureKind& kind) {
  struct Visitor {
    std::string operator()(const IdentityMeasure&) const { return "identity"; }
    std::string operator()(const SoftmaxReadout&) const { return "softmax-readout"; }
    std::string operator()(const CustomMeasure&) const { return "custom-test"; }
  };
  return std::visit(Visitor{}, kind);
}

Vector softmax(const Vector& logits, double temperature) {
  if (logits.size() == 0) {
    return Vector{};
  }
  const Vector scaled = logits / temperature;
  const double top = scaled.maxCoeff();
  Vector e = (scaled.array() - top).exp().matrix();
  return e / e.sum();
}

Vector top_values(const Vector& probs, std::size_t count) {
  std::vector<Eigen::Index> order(static_cast<std::size_t>(probs.size()));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  const auto keep = std::min<std::size_t>(count, order.size());
  std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(keep), order.end(),
                    [&](Eigen::Index a, Eigen::Index b) {
                      if (probs(a) != probs(b)) {
                        return probs(a) > probs(b);
                      }
                      return a < b;
                    });
  Vector out = Vector::Zero(static_cast<Eigen::Index>(count));
  for (std::size_t i = 0; i < keep; ++i) {
    out(static_cast<Eigen::Index>(i)) = probs(order[i]);
  }
  return out;
}

MeasurementMap MeasurementMap::materialize(const MeasurementMapSpec& spec, std::size_t dim_x,
                                           const Matrix* tied_table) {
  if (spec.ell == 0) {
    throw ConfigError("measurement ell must be >= 1");
  }
  MeasurementMap g;
  g.ell_ = spec.ell;
  g.dim_x_ = dim_x;

  if (std::holds_alternative<IdentityMeasure>(spec.kind)) {
    if (spec.ell != dim_x) {
      throw ConfigError(fmt::format("identity measurement needs ell == dim_x ({}), got {}", dim_x, spec.ell));
    }
    g.kind_ = Kind::identity;
  } else if (const auto* s = std::get_if<SoftmaxReadout>(&spec.kind)) {
    if (!(s->temperature > 0.0)) {
      throw ConfigError("softmax temperature must be positive");
    }
    auto impl = std::make_shared<detail::ReadoutImpl>();
    impl->temperature = s->temperature;
    if (s->readout.kind == ReadoutSpec::Kind::tied) {
      if (tied_table == nullptr) {
        throw ConfigError("tied read-out needs a token table");
      }
      if (static_cast<std::size_t>(tied_table->cols()) != dim_x) {
        throw ConfigError("tied read-out table width differs from dim_x");
      }
      impl->weights = *tied_table;
      impl->bias = Vector::Zero(tied_table->rows());
    } else {
      if (s->readout.vocab == 0) {
        throw ConfigError("softmax read-out vocab must be >= 1");
      }
      std::mt19937_64 rng(derive_seed(s->readout.seed, {seed_tag::kReadout}));
      std::normal_distribution<double> normal(0.0, 1.0);
      const double w_scale = s->readout.weight_scale / std::sqrt(static_cast<double>(dim_x));
      impl->weights.resize(static_cast<Eigen::Index>(s->readout.vocab), static_cast<Eigen::Index>(dim_x));
      for (Eigen::Index i = 0; i < impl->weights.rows(); ++i) {
        for (Eigen::Index j = 0; j < impl->weights.cols(); ++j) {
          impl->weights(i, j) = w_scale * normal(rng);
        }
      }
      impl->bias.resize(impl->weights.rows());
      for (Eigen::Index i = 0; i < impl->bias.size(); ++i) {
        impl->bias(i) = s->readout.bias_scale * normal(rng);
      }
    }
    if (spec.ell > static_cast<std::size_t>(impl->weights.rows())) {
      throw ConfigError(fmt::format("ell {} exceeds read-out vocabulary {}", spec.ell, impl->weights.rows()));
    }
    g.kind_ = Kind::softmax;
    g.readout_ = std::move(impl);
  } else {
    const auto& c = std::get<CustomMeasure>(spec.kind);
    if (c.name == "constant") {
      g.kind_ = Kind::constant;
      g.b_ = Vector::Constant(static_cast<Eigen::Index>(spec.ell), c.value);
    } else if (c.name == "random-smooth") {
      g.kind_ = Kind::random_smooth;
      std::mt19937_64 rng(derive_seed(c.seed, {seed_tag::kReadout}));
      std::normal_distribution<double> normal(0.0, 1.0);
      g.a_.resize(static_cast<Eigen::Index>(spec.ell), static_cast<Eigen::Index>(dim_x));
      for (Eigen::Index i = 0; i < g.a_.rows(); ++i) {
        for (Eigen::Index j = 0; j < g.a_.cols(); ++j) {
          g.a_(i, j) = normal(rng) / std::sqrt(static_cast<double>(dim_x));
        }
      }
      g.b_.resize(static_cast<Eigen::Index>(spec.ell));
      for (Eigen::Index i = 0; i < g.b_.size(); ++i) {
        g.b_(i) = 0.5 * normal(rng);
      }
    } else {
      throw ConfigError(fmt::format("unknown custom-test measurement '{}'", c.name));
    }
  }
  return g;
}

std::size_t MeasurementMap::vocab() const noexcept {
  return readout_ ? static_cast<std::size_t>(readout_->weights.rows()) : 0;
}

Vector MeasurementMap::distribution(const Vector& latent) const {
  if (!readout_) {
    throw ConfigError("measurement map has no token distribution");
  }
  if (static_cast<std::size_t>(latent.size()) != dim_x_) {
    throw ConfigError(fmt::format("measurement expects {} coordinates, got {}", dim_x_, latent.size()));
  }
  return softmax(readout_->weights * latent + readout_->bias, readout_->temperature);
}

Vector MeasurementMap::operator()(const Vector& latent) const {
  if (static_cast<std::size_t>(latent.size()) != dim_x_) {
    throw ConfigError(fmt::format("measurement expects {} coordinates, got {}", dim_x_, latent.size()));
  }
  switch (kind_) {
    case Kind::identity:
      return latent;
    case Kind::softmax:
      return top_values(distribution(latent), ell_);
    case Kind::constant:
      return b_;
    case Kind::random_smooth:
      return (a_ * latent + b_).array().tanh().matrix();
  }
  return latent;
}

}  // namespace tprobe
