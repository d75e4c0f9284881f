#include "tprobe/core/smooth_map.hpp"

#include "tprobe/core/errors.hpp"
#include "tprobe/core/seed.hpp"

#include <fmt/format.h>

#include <random>

namespace tprobe {

namespace detail {

class MapImpl {
 public:
  virtual ~MapImpl() = default;
  virtual Vector eval(const Vector& window) const = 0;
};

}  // namespace detail

namespace {

struct Layer {
  Matrix weights;
  Vector bias;
};

Matrix gaussian(std::size_t rows, std::size_t cols, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      m(i, j) = normal(rng);
    }
  }
  return m;
}

Vector gaussian_vector(std::size_t len, double scale, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Vector v(len);
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    v(i) = scale * normal(rng);
  }
  return v;
}

void rescale_spectral(Matrix& m, double target) {
  const Vector sv = singular_values(m);
  if (sv.size() > 0 && sv(0) > 0.0) {
    m *= target / sv(0);
  }
}

// tanh hidden layers, linear output layer.
class MlpImpl final : public detail::MapImpl {
 public:
  explicit MlpImpl(std::vector<Layer> layers) : layers_(std::move(layers)) {}

  Vector eval(const Vector& x) const override {
    Vector h = x;
    for (std::size_t l = 0; l + 1 < layers_.size(); ++l) {
      h = (layers_[l].weights * h + layers_[l].bias).array().tanh().matrix();
    }
    return layers_.back().weights * h + layers_.back().bias;
  }

  static std::vector<Layer> build(std::size_t in, const std::vector<std::size_t>& hidden, std::size_t out,
                                  double spectral_scale, double bias_scale, std::mt19937_64& rng) {
    std::vector<std::size_t> dims;
    dims.push_back(in);
    dims.insert(dims.end(), hidden.begin(), hidden.end());
    dims.push_back(out);
    std::vector<Layer> layers;
    for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
      Layer layer;
      layer.weights = gaussian(dims[l + 1], dims[l], rng);
      rescale_spectral(layer.weights, spectral_scale);
      const bool output = l + 2 == dims.size();
      layer.bias = output ? Vector::Zero(dims[l + 1]) : gaussian_vector(dims[l + 1], bias_scale, rng);
      layers.push_back(std::move(layer));
    }
    return layers;
  }

 private:
  std::vector<Layer> layers_;
};

class LinearImpl final : public detail::MapImpl {
 public:
  explicit LinearImpl(Matrix a) : a_(std::move(a)) {}
  Vector eval(const Vector& x) const override { return a_ * x; }

 private:
  Matrix a_;
};

class ProjectionImpl final : public detail::MapImpl {
 public:
  ProjectionImpl(std::size_t slot, std::size_t dim_x) : slot_(slot), dim_x_(dim_x) {}
  Vector eval(const Vector& x) const override {
    return x.segment(static_cast<Eigen::Index>(slot_ * dim_x_), static_cast<Eigen::Index>(dim_x_));
  }

 private:
  std::size_t slot_;
  std::size_t dim_x_;
};

class ConstantImpl final : public detail::MapImpl {
 public:
  explicit ConstantImpl(Vector c) : c_(std::move(c)) {}
  Vector eval(const Vector&) const override { return c_; }

 private:
  Vector c_;
};

// f = first(x_1) + h(x_2..x_n).
class FirstPlusRestImpl final : public detail::MapImpl {
 public:
  enum class First { identity, square, ranked_tanh };

  FirstPlusRestImpl(First first, Matrix a, std::size_t dim_x, std::vector<Layer> rest, Vector rest_const)
      : first_(first), a_(std::move(a)), dim_x_(dim_x), rest_(std::move(rest)), rest_const_(std::move(rest_const)) {}

  Vector eval(const Vector& x) const override {
    const auto d = static_cast<Eigen::Index>(dim_x_);
    const Vector x1 = x.head(d);
    Vector out;
    switch (first_) {
      case First::identity:
        out = x1;
        break;
      case First::square:
        out = x1.array().square().matrix();
        break;
      case First::ranked_tanh:
        out = a_ * x1.array().tanh().matrix();
        break;
    }
    if (rest_.empty()) {
      return out + rest_const_;
    }
    Vector h = x.tail(x.size() - d);
    for (std::size_t l = 0; l + 1 < rest_.size(); ++l) {
      h = (rest_[l].weights * h + rest_[l].bias).array().tanh().matrix();
    }
    return out + rest_.back().weights * h;
  }

 private:
  First first_;
  Matrix a_;
  std::size_t dim_x_;
  std::vector<Layer> rest_;
  Vector rest_const_;
};

std::shared_ptr<const detail::MapImpl> build_custom(const CustomTest& c, std::size_t n, std::size_t dim_x,
                                                    std::mt19937_64& rng) {
  using First = FirstPlusRestImpl::First;
  First first;
  Matrix a;
  if (c.name == "first-plus-smooth") {
    first = First::identity;
  } else if (c.name == "first-squared") {
    first = First::square;
  } else if (c.name == "first-block-rank") {
    if (c.rank > dim_x) {
      throw ConfigError(fmt::format("first-block-rank: rank {} exceeds dim_x {}", c.rank, dim_x));
    }
    first = First::ranked_tanh;
    a = Matrix::Zero(dim_x, dim_x);
    if (c.rank > 0) {
      a = gaussian(dim_x, c.rank, rng) * gaussian(c.rank, dim_x, rng);
    }
  } else {
    throw ConfigError(fmt::format("unknown custom-test map '{}'", c.name));
  }
  std::vector<Layer> rest;
  Vector rest_const = Vector::Zero(dim_x);
  if (n > 1) {
    rest = MlpImpl::build((n - 1) * dim_x, {16}, dim_x, 1.0, 0.5, rng);
  } else {
    rest_const = gaussian_vector(dim_x, 0.5, rng);
  }
  return std::make_shared<FirstPlusRestImpl>(first, std::move(a), dim_x, std::move(rest), std::move(rest_const));
}

}  // namespace

std::string map_kind_name(const MapKind& kind) {
  struct Visitor {
    std::string operator()(const RandomMlp&) const { return "random-mlp"; }
    std::string operator()(const LinearMap&) const { return "linear"; }
    std::string operator()(const Projection&) const { return "projection"; }
    std::string operator()(const ConstantMap&) const { return "constant"; }
    std::string operator()(const CustomTest&) const { return "custom-test"; }
  };
  return std::visit(Visitor{}, kind);
}

Matrix spectral_gaussian(std::size_t rows, std::size_t cols, double spectral_norm, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  Matrix m = gaussian(rows, cols, rng);
  rescale_spectral(m, spectral_norm);
  return m;
}

SmoothMap SmoothMap::materialize(const SmoothMapSpec& spec, std::size_t n, std::size_t dim_x) {
  if (n == 0 || dim_x == 0) {
    throw ConfigError("process needs n >= 1 and dim_x >= 1");
  }
  const std::size_t in = n * dim_x;
  std::mt19937_64 rng(derive_seed(spec.seed, {seed_tag::kMap}));

  struct Visitor {
    std::size_t n, dim_x, in;
    std::mt19937_64& rng;

    std::shared_ptr<const detail::MapImpl> operator()(const RandomMlp& p) const {
      if (!(p.spectral_scale > 0.0)) {
        throw ConfigError("random-mlp spectral_scale must be positive");
      }
      return std::make_shared<MlpImpl>(MlpImpl::build(in, p.hidden, dim_x, p.spectral_scale, p.bias_scale, rng));
    }
    std::shared_ptr<const detail::MapImpl> operator()(const LinearMap& p) const {
      if (static_cast<std::size_t>(p.coefficients.rows()) != dim_x ||
          static_cast<std::size_t>(p.coefficients.cols()) != in) {
        throw ConfigError(fmt::format("linear map must be {}x{}, got {}x{}", dim_x, in, p.coefficients.rows(),
                                      p.coefficients.cols()));
      }
      return std::make_shared<LinearImpl>(p.coefficients);
    }
    std::shared_ptr<const detail::MapImpl> operator()(const Projection& p) const {
      if (p.slot >= n) {
        throw ConfigError(fmt::format("projection slot {} outside window of {}", p.slot, n));
      }
      return std::make_shared<ProjectionImpl>(p.slot, dim_x);
    }
    std::shared_ptr<const detail::MapImpl> operator()(const ConstantMap& p) const {
      if (static_cast<std::size_t>(p.point.size()) != dim_x) {
        throw ConfigError(fmt::format("constant map point has {} coordinates, expected {}", p.point.size(), dim_x));
      }
      return std::make_shared<ConstantImpl>(p.point);
    }
    std::shared_ptr<const detail::MapImpl> operator()(const CustomTest& p) const {
      return build_custom(p, n, dim_x, rng);
    }
  };

  auto impl = std::visit(Visitor{n, dim_x, in, rng}, spec.kind);
  return SmoothMap(std::move(impl), in, dim_x);
}

Vector SmoothMap::operator()(const Vector& window) const {
  if (static_cast<std::size_t>(window.size()) != in_dim_) {
    throw ConfigError(fmt::format("map expects {} inputs, got {}", in_dim_, window.size()));
  }
  return impl_->eval(window);
}

}  // namespace tprobe
