#include "misc/ndmath.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <numbers>

namespace misc {

namespace {

std::atomic<std::uint64_t> g_next_net_id{1};

std::uint64_t fresh_id() { return g_next_net_id.fetch_add(1, std::memory_order_relaxed); }

void apply_activation(Activation act, Mat& z) {
  switch (act) {
    case Activation::kRelu:
      z = z.cwiseMax(0.0);
      break;
    case Activation::kTanh:
      z = z.array().tanh().matrix();
      break;
    case Activation::kIdentity:
      break;
  }
}

// Multiplies grad (w.r.t. layer output) by the activation derivative,
// expressed through the post-activation output.
void apply_activation_grad(Activation act, const Mat& out, Mat& grad) {
  switch (act) {
    case Activation::kRelu:
      grad = (out.array() > 0.0).select(grad, 0.0);
      break;
    case Activation::kTanh:
      grad.array() *= 1.0 - out.array().square();
      break;
    case Activation::kIdentity:
      break;
  }
}

}  // namespace

std::string shape_str(Eigen::Index rows, Eigen::Index cols) {
  return std::to_string(rows) + "x" + std::to_string(cols);
}

// ---------------------------------------------------------------- Rng

Rng::Rng(std::uint64_t seed) : seed_(seed), engine_(seed) {}

double Rng::uniform() {
  return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
}

double Rng::normal() {
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  double u1 = uniform();
  while (u1 <= 0.0) u1 = uniform();
  const double u2 = uniform();
  const double r = std::sqrt(-2.0 * std::log(u1));
  const double theta = 2.0 * std::numbers::pi * u2;
  spare_ = r * std::sin(theta);
  has_spare_ = true;
  return r * std::cos(theta);
}

std::size_t Rng::index(std::size_t n) {
  if (n == 0) throw std::invalid_argument("Rng::index: n must be positive");
  const std::uint64_t bound = static_cast<std::uint64_t>(n);
  const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                              std::numeric_limits<std::uint64_t>::max() % bound;
  std::uint64_t x = engine_();
  while (x >= limit) x = engine_();
  return static_cast<std::size_t>(x % bound);
}

Rng Rng::fork() {
  // splitmix64 finaliser decorrelates child seeds from the parent stream.
  std::uint64_t z = engine_() + 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return Rng(z ^ (z >> 31));
}

// ---------------------------------------------------------- Activation

std::string_view to_string(Activation act) {
  switch (act) {
    case Activation::kRelu:
      return "relu";
    case Activation::kTanh:
      return "tanh";
    case Activation::kIdentity:
      return "identity";
  }
  return "identity";
}

Activation activation_from_string(std::string_view name) {
  if (name == "relu") return Activation::kRelu;
  if (name == "tanh") return Activation::kTanh;
  if (name == "identity") return Activation::kIdentity;
  throw std::invalid_argument("unknown activation '" + std::string(name) + "'");
}

// ------------------------------------------------------------ MlpGrads

void MlpGrads::set_zero() {
  for (auto& w : weights) w.setZero();
  for (auto& b : biases) b.setZero();
}

void MlpGrads::add_scaled(const MlpGrads& other, double scale) {
  if (other.weights.size() != weights.size()) {
    throw DimensionError("MlpGrads::add_scaled: layer count mismatch");
  }
  for (std::size_t k = 0; k < weights.size(); ++k) {
    weights[k] += scale * other.weights[k];
    biases[k] += scale * other.biases[k];
  }
}

bool MlpGrads::all_finite() const {
  for (std::size_t k = 0; k < weights.size(); ++k) {
    if (!weights[k].allFinite() || !biases[k].allFinite()) return false;
  }
  return true;
}

double MlpGrads::squared_norm() const {
  double s = 0.0;
  for (std::size_t k = 0; k < weights.size(); ++k) {
    s += weights[k].squaredNorm() + biases[k].squaredNorm();
  }
  return s;
}

// ----------------------------------------------------------------- Mlp

Mlp::Mlp() : id_(fresh_id()) {}

Mlp::Mlp(std::vector<DenseLayer> layers) : layers_(std::move(layers)), id_(fresh_id()) {
  validate();
}

Mlp::Mlp(const Mlp& other) : layers_(other.layers_), id_(fresh_id()), version_(0) {}

Mlp& Mlp::operator=(const Mlp& other) {
  if (this != &other) {
    layers_ = other.layers_;
    ++version_;
  }
  return *this;
}

void Mlp::validate() const {
  for (std::size_t k = 0; k < layers_.size(); ++k) {
    const auto& l = layers_[k];
    if (l.biases.size() != l.weights.rows()) {
      throw DimensionError("layer " + std::to_string(k) + ": weights " +
                           shape_str(l.weights.rows(), l.weights.cols()) + " but biases " +
                           std::to_string(l.biases.size()));
    }
    if (k > 0 && layers_[k - 1].weights.rows() != l.weights.cols()) {
      throw DimensionError("layer " + std::to_string(k) + " expects input " +
                           std::to_string(l.weights.cols()) + " but layer " +
                           std::to_string(k - 1) + " emits " +
                           std::to_string(layers_[k - 1].weights.rows()));
    }
    if (!l.weights.allFinite() || !l.biases.allFinite()) {
      throw NumericError("layer " + std::to_string(k) + " has non-finite parameters");
    }
  }
}

Mlp Mlp::create(const MlpSpec& spec, Rng& rng) {
  if (spec.input_dim <= 0 || spec.output_dim <= 0) {
    throw DimensionError("MlpSpec: input and output dims must be positive");
  }
  std::vector<int> sizes;
  sizes.push_back(spec.input_dim);
  for (int h : spec.hidden) {
    if (h <= 0) throw DimensionError("MlpSpec: hidden sizes must be positive");
    sizes.push_back(h);
  }
  sizes.push_back(spec.output_dim);

  std::vector<DenseLayer> layers;
  for (std::size_t k = 0; k + 1 < sizes.size(); ++k) {
    const bool last = k + 2 == sizes.size();
    DenseLayer layer;
    layer.weights.resize(sizes[k + 1], sizes[k]);
    layer.biases.resize(sizes[k + 1]);
    double bound = 1.0 / std::sqrt(static_cast<double>(sizes[k]));
    if (last && spec.output_init_scale > 0.0) bound = spec.output_init_scale;
    for (Eigen::Index c = 0; c < layer.weights.cols(); ++c) {
      for (Eigen::Index r = 0; r < layer.weights.rows(); ++r) {
        layer.weights(r, c) = rng.uniform(-bound, bound);
      }
    }
    for (Eigen::Index r = 0; r < layer.biases.size(); ++r) {
      layer.biases(r) = rng.uniform(-bound, bound);
    }
    layer.activation = last ? spec.output_activation : spec.hidden_activation;
    layers.push_back(std::move(layer));
  }
  return Mlp(std::move(layers));
}

int Mlp::input_dim() const {
  return layers_.empty() ? 0 : static_cast<int>(layers_.front().weights.cols());
}

int Mlp::output_dim() const {
  return layers_.empty() ? 0 : static_cast<int>(layers_.back().weights.rows());
}

std::size_t Mlp::num_parameters() const {
  std::size_t n = 0;
  for (const auto& l : layers_) n += l.weights.size() + l.biases.size();
  return n;
}

std::vector<DenseLayer>& Mlp::mutable_layers() {
  ++version_;
  return layers_;
}

Mat Mlp::forward(const Mat& x, ForwardCache* cache) const {
  if (layers_.empty()) throw DimensionError("forward: network has no layers");
  if (x.rows() != input_dim()) {
    throw DimensionError("forward: input " + shape_str(x.rows(), x.cols()) +
                         " but network expects " + std::to_string(input_dim()) + " rows");
  }
  if (!x.allFinite()) throw NumericError("forward: non-finite input");
  if (cache != nullptr) {
    cache->net_id = id_;
    cache->version = version_;
    cache->inputs.clear();
    cache->outputs.clear();
    cache->inputs.reserve(layers_.size());
    cache->outputs.reserve(layers_.size());
  }
  Mat h = x;
  for (const auto& layer : layers_) {
    Mat z = layer.weights * h;
    z.colwise() += layer.biases;
    apply_activation(layer.activation, z);
    if (cache != nullptr) {
      cache->inputs.push_back(std::move(h));
      cache->outputs.push_back(z);
    }
    h = std::move(z);
  }
  return h;
}

Vec Mlp::forward(const Vec& x) const {
  Mat out = forward(Mat(x), nullptr);
  return out.col(0);
}

Backprop Mlp::backward(const ForwardCache& cache, const Mat& grad_out) const {
  if (cache.net_id != id_ || cache.version != version_ ||
      cache.inputs.size() != layers_.size()) {
    throw std::logic_error("backward: cache does not belong to this network's current parameters");
  }
  const Eigen::Index batch = cache.inputs.front().cols();
  if (grad_out.rows() != output_dim() || grad_out.cols() != batch) {
    throw DimensionError("backward: grad_out " + shape_str(grad_out.rows(), grad_out.cols()) +
                         " but expected " + shape_str(output_dim(), batch));
  }
  Backprop result;
  result.params.weights.resize(layers_.size());
  result.params.biases.resize(layers_.size());
  Mat g = grad_out;
  for (std::size_t k = layers_.size(); k-- > 0;) {
    const auto& layer = layers_[k];
    apply_activation_grad(layer.activation, cache.outputs[k], g);
    result.params.weights[k].noalias() = g * cache.inputs[k].transpose();
    result.params.biases[k] = g.rowwise().sum();
    Mat next = layer.weights.transpose() * g;
    g = std::move(next);
  }
  result.grad_in = std::move(g);
  return result;
}

MlpGrads Mlp::zero_grads() const {
  MlpGrads g;
  for (const auto& l : layers_) {
    g.weights.push_back(Mat::Zero(l.weights.rows(), l.weights.cols()));
    g.biases.push_back(Vec::Zero(l.biases.size()));
  }
  return g;
}

std::vector<double> Mlp::flat_parameters() const {
  std::vector<double> out;
  out.reserve(num_parameters());
  for (const auto& l : layers_) {
    out.insert(out.end(), l.weights.data(), l.weights.data() + l.weights.size());
    out.insert(out.end(), l.biases.data(), l.biases.data() + l.biases.size());
  }
  return out;
}

void Mlp::set_flat_parameters(std::span<const double> values) {
  if (values.size() != num_parameters()) {
    throw DimensionError("set_flat_parameters: got " + std::to_string(values.size()) +
                         " values for " + std::to_string(num_parameters()) + " parameters");
  }
  ++version_;
  std::size_t off = 0;
  for (auto& l : layers_) {
    std::copy_n(values.begin() + off, l.weights.size(), l.weights.data());
    off += l.weights.size();
    std::copy_n(values.begin() + off, l.biases.size(), l.biases.data());
    off += l.biases.size();
  }
}

bool Mlp::all_finite() const {
  return std::all_of(layers_.begin(), layers_.end(), [](const DenseLayer& l) {
    return l.weights.allFinite() && l.biases.allFinite();
  });
}

ForwardResult forward(const Mlp& net, const Vec& x) {
  ForwardResult r;
  Mat y = net.forward(Mat(x), &r.cache);
  r.y = y.col(0);
  return r;
}

Backprop backward(const Mlp& net, const ForwardCache& cache, const Vec& grad_out) {
  return net.backward(cache, Mat(grad_out));
}

// ---------------------------------------------------------------- Adam

AdamState::AdamState(const Mlp& net, AdamConfig cfg)
    : first_moment(net.zero_grads()), second_moment(net.zero_grads()), config(cfg) {}

void adam_step(Mlp& net, const MlpGrads& grads, AdamState& state) {
  const auto& layers = net.layers();
  if (grads.weights.size() != layers.size() || state.first_moment.weights.size() != layers.size()) {
    throw DimensionError("adam_step: gradient/state layer count does not match network (" +
                         std::to_string(grads.weights.size()) + " vs " +
                         std::to_string(layers.size()) + ")");
  }
  for (std::size_t k = 0; k < layers.size(); ++k) {
    if (grads.weights[k].rows() != layers[k].weights.rows() ||
        grads.weights[k].cols() != layers[k].weights.cols() ||
        grads.biases[k].size() != layers[k].biases.size()) {
      throw DimensionError("adam_step: layer " + std::to_string(k) + " gradient " +
                           shape_str(grads.weights[k].rows(), grads.weights[k].cols()) +
                           " vs parameters " +
                           shape_str(layers[k].weights.rows(), layers[k].weights.cols()));
    }
  }
  if (!grads.all_finite()) throw DivergenceError("adam_step: non-finite gradient");

  const auto& c = state.config;
  state.step += 1;
  const double t = static_cast<double>(state.step);
  const double bc1 = 1.0 - std::pow(c.beta1, t);
  const double bc2 = 1.0 - std::pow(c.beta2, t);
  const double step_size = c.learning_rate / bc1;
  const double sqrt_bc2 = std::sqrt(bc2);

  auto update = [&](auto& param, const auto& grad, auto& m, auto& v) {
    m = c.beta1 * m + (1.0 - c.beta1) * grad;
    v = c.beta2 * v + (1.0 - c.beta2) * grad.cwiseAbs2();
    param.array() -= step_size * m.array() / (v.array().sqrt() / sqrt_bc2 + c.eps);
  };
  auto& mut = net.mutable_layers();
  for (std::size_t k = 0; k < mut.size(); ++k) {
    update(mut[k].weights, grads.weights[k], state.first_moment.weights[k],
           state.second_moment.weights[k]);
    update(mut[k].biases, grads.biases[k], state.first_moment.biases[k],
           state.second_moment.biases[k]);
  }
}

void polyak_update(Mlp& target, const Mlp& main, double coeff) {
  if (!(coeff >= 0.0 && coeff <= 1.0)) {
    throw std::invalid_argument("polyak_update: coeff must lie in [0, 1]");
  }
  const auto& src = main.layers();
  if (src.size() != target.layers().size()) {
    throw DimensionError("polyak_update: layer count " + std::to_string(target.layers().size()) +
                         " vs " + std::to_string(src.size()));
  }
  for (std::size_t k = 0; k < src.size(); ++k) {
    const auto& tw = target.layers()[k].weights;
    if (tw.rows() != src[k].weights.rows() || tw.cols() != src[k].weights.cols()) {
      throw DimensionError("polyak_update: layer " + std::to_string(k) + " " +
                           shape_str(tw.rows(), tw.cols()) + " vs " +
                           shape_str(src[k].weights.rows(), src[k].weights.cols()));
    }
  }
  auto& dst = target.mutable_layers();
  for (std::size_t k = 0; k < src.size(); ++k) {
    dst[k].weights = coeff * dst[k].weights + (1.0 - coeff) * src[k].weights;
    dst[k].biases = coeff * dst[k].biases + (1.0 - coeff) * src[k].biases;
  }
}

double logsumexp(std::span<const double> v) {
  if (v.empty()) throw std::invalid_argument("logsumexp: empty input");
  double m = -std::numeric_limits<double>::infinity();
  for (double x : v) {
    if (!std::isfinite(x)) throw NumericError("logsumexp: non-finite value");
    m = std::max(m, x);
  }
  double s = 0.0;
  for (double x : v) s += std::exp(x - m);
  return m + std::log(s);
}

}  // namespace misc
