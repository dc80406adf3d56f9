#pragma once

// Minimal numerical core: seeded RNG, dense MLPs with manual backprop,
// Adam and Polyak averaging. Everything is 64-bit. Batched calls take
// matrices whose columns are samples.

#include <Eigen/Dense>

#include <cstdint>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace misc {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

/// Shape disagreement between two operands. The message names both shapes.
class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Non-finite input handed to a numerical routine.
class NumericError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// Training produced a non-finite loss or gradient.
class DivergenceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

std::string shape_str(Eigen::Index rows, Eigen::Index cols);

/// Deterministic random source. Draws are derived from raw mt19937_64 output
/// rather than std distributions, so a seed replays bit-exactly on any
/// standard library.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0);

  std::uint64_t seed() const { return seed_; }
  std::uint64_t next_u64() { return engine_(); }

  /// Uniform on [0, 1) with 53 random bits.
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  /// Standard normal via Box-Muller; the second variate is cached.
  double normal();
  double normal(double mean, double stddev) { return mean + stddev * normal(); }
  /// Unbiased integer in [0, n). n must be positive.
  std::size_t index(std::size_t n);
  bool bernoulli(double p) { return uniform() < p; }

  /// Independent child stream; advances this generator once.
  Rng fork();

  template <typename It>
  void shuffle(It first, It last) {
    const auto n = static_cast<std::size_t>(last - first);
    for (std::size_t i = n; i > 1; --i) {
      std::swap(first[i - 1], first[index(i)]);
    }
  }

 private:
  std::uint64_t seed_;
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

enum class Activation { kRelu, kTanh, kIdentity };

std::string_view to_string(Activation act);
/// Accepts "relu", "tanh", "identity". Throws std::invalid_argument otherwise.
Activation activation_from_string(std::string_view name);

struct DenseLayer {
  Mat weights;  // out x in
  Vec biases;   // out
  Activation activation = Activation::kIdentity;
};

struct MlpSpec {
  int input_dim = 1;
  std::vector<int> hidden = {64, 64};
  int output_dim = 1;
  Activation hidden_activation = Activation::kRelu;
  Activation output_activation = Activation::kIdentity;
  // Half-width of the uniform init of the last layer; <= 0 uses the fan-in rule.
  double output_init_scale = 0.0;
};

/// Per-layer gradients (or any other parameter-shaped quantity).
struct MlpGrads {
  std::vector<Mat> weights;
  std::vector<Vec> biases;

  void set_zero();
  void add_scaled(const MlpGrads& other, double scale);
  bool all_finite() const;
  double squared_norm() const;
};

/// Activation record of one forward call. Tied to the network identity and
/// parameter version that produced it.
struct ForwardCache {
  std::uint64_t net_id = 0;
  std::uint64_t version = 0;
  std::vector<Mat> inputs;   // input to each layer
  std::vector<Mat> outputs;  // post-activation output of each layer
};

struct Backprop {
  MlpGrads params;
  Mat grad_in;  // input_dim x batch
};

class Mlp {
 public:
  Mlp();
  explicit Mlp(std::vector<DenseLayer> layers);
  Mlp(const Mlp& other);
  Mlp& operator=(const Mlp& other);
  Mlp(Mlp&&) noexcept = default;
  Mlp& operator=(Mlp&&) noexcept = default;

  /// Fan-in uniform initialisation, U(-1/sqrt(in), 1/sqrt(in)).
  static Mlp create(const MlpSpec& spec, Rng& rng);

  int input_dim() const;
  int output_dim() const;
  std::size_t num_layers() const { return layers_.size(); }
  std::size_t num_parameters() const;
  const std::vector<DenseLayer>& layers() const { return layers_; }
  bool empty() const { return layers_.empty(); }

  /// Mutable access bumps the parameter version, invalidating caches.
  std::vector<DenseLayer>& mutable_layers();

  std::uint64_t id() const { return id_; }
  std::uint64_t version() const { return version_; }

  /// Batched forward pass; x is input_dim x batch.
  Mat forward(const Mat& x, ForwardCache* cache = nullptr) const;
  Vec forward(const Vec& x) const;

  /// Reverse pass for a cache produced by this network at its current
  /// parameter version. grad_out is output_dim x batch.
  Backprop backward(const ForwardCache& cache, const Mat& grad_out) const;

  MlpGrads zero_grads() const;

  std::vector<double> flat_parameters() const;
  void set_flat_parameters(std::span<const double> values);
  bool all_finite() const;

 private:
  void validate() const;

  std::vector<DenseLayer> layers_;
  std::uint64_t id_;
  std::uint64_t version_ = 0;
};

struct ForwardResult {
  Vec y;
  ForwardCache cache;
};

ForwardResult forward(const Mlp& net, const Vec& x);
Backprop backward(const Mlp& net, const ForwardCache& cache, const Vec& grad_out);

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  AdamState() = default;
  AdamState(const Mlp& net, AdamConfig cfg);

  MlpGrads first_moment;
  MlpGrads second_moment;
  std::int64_t step = 0;
  AdamConfig config;
};

/// One bias-corrected Adam descent step along `grads`.
/// Throws DivergenceError when a gradient entry is not finite.
void adam_step(Mlp& net, const MlpGrads& grads, AdamState& state);

/// target <- coeff * target + (1 - coeff) * main, elementwise.
void polyak_update(Mlp& target, const Mlp& main, double coeff);

/// log(sum(exp(v))) with max subtraction.
double logsumexp(std::span<const double> v);

}  // namespace misc
