#pragma once

// Small dense networks with hand-derived gradients: a tanh MLP, a masked
// softmax cross-entropy head, a Gaussian-mixture density head, and Adam.
// Batches are stored column-wise (one sample per column).

#include <array>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "prime/container.hpp"
#include "prime/rng.hpp"

namespace prime::nn {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

class Mlp {
 public:
  Mlp() = default;
  // sizes = {input, hidden..., output}; tanh on hidden layers, linear output.
  Mlp(std::vector<int> sizes, Rng& rng);
  Mlp(std::vector<int> sizes, Vector params);

  struct Cache {
    std::vector<Matrix> activations;  // input, then each hidden layer output
  };

  Matrix forward(const Matrix& x, Cache* cache = nullptr) const;
  // Accumulates d(loss)/d(params) into grad given d(loss)/d(output).
  void backward(const Cache& cache, const Matrix& grad_out, Vector& grad) const;

  int input_dim() const { return sizes_.front(); }
  int output_dim() const { return sizes_.back(); }
  Eigen::Index num_params() const { return params_.size(); }
  const std::vector<int>& sizes() const { return sizes_; }
  Vector& params() { return params_; }
  const Vector& params() const { return params_; }

  // Bias vector of the output layer (used for data-dependent init).
  Eigen::Map<Vector> output_bias();

  Json to_json() const;
  static Mlp from_json(const Json& j);

 private:
  void layout();
  std::vector<int> sizes_;
  std::vector<Eigen::Index> weight_offset_;
  std::vector<Eigen::Index> bias_offset_;
  Vector params_;
};

// Per-feature standardization fitted on training inputs.
struct Normalizer {
  Vector mean;
  Vector inv_std;

  static Normalizer fit(const Matrix& x);  // columns are samples
  static Normalizer identity(int dim);
  Matrix apply(const Matrix& x) const;
  Json to_json() const;
  static Normalizer from_json(const Json& j);
};

// Row-wise log-softmax over unmasked rows; masked rows get -inf.
Matrix masked_log_softmax(const Matrix& logits, std::span<const bool> mask);

// Weighted mean cross-entropy: sum_b w_b * -log p_b[label_b] / sum_b w_b.
// Writes d(loss)/d(logits) when grad != nullptr. Labels must be unmasked.
double softmax_cross_entropy(const Matrix& logits, std::span<const int> labels,
                             std::span<const double> weights, std::span<const bool> mask, Matrix* grad);

struct MixtureSpec {
  int dim = 1;
  int components = 5;
  double sigma_min = 1e-3;
  int output_size() const { return components * (1 + 2 * dim); }
};

// One decoded mixture: weights (simplex), means and standard deviations.
struct Mixture {
  Vector weights;  // components
  Matrix means;    // dim x components
  Matrix sigmas;   // dim x components, each >= sigma_min

  double log_density(const Vector& x) const;
  // Mean of the component maximizing weight x (its own density at its mean).
  int mode_component() const;
  Vector mode() const { return means.col(mode_component()); }
  Vector sample(Rng& rng) const;
};

// Output layout: [logits (K)] [means (K*D), component-major] [raw (K*D)],
// sigma = sigma_min + exp(raw).
Mixture decode_mixture(const Eigen::Ref<const Vector>& out, const MixtureSpec& spec);

// Weighted mean negative log-likelihood of targets (dim x B).
double mixture_nll(const Matrix& out, const Matrix& targets, std::span<const double> weights,
                   const MixtureSpec& spec, Matrix* grad);

// Sets output-layer biases so every component starts near the target
// distribution: means at target mean plus jitter, sigmas at target spread.
void init_mixture_bias(Mlp& net, const Matrix& targets, const MixtureSpec& spec, Rng& rng);

// Full objectives over a batch, gradients w.r.t. the network parameters.
double classification_objective(const Mlp& net, const Matrix& x, std::span<const int> labels,
                                std::span<const double> weights, std::span<const bool> mask, Vector* grad);
double mixture_objective(const Mlp& net, const Matrix& x, const Matrix& targets, std::span<const double> weights,
                         const MixtureSpec& spec, Vector* grad);

// Columns `idx` of m, in order.
Matrix gather_columns(const Matrix& m, std::span<const std::size_t> idx);

struct TrainConfig {
  int epochs = 30;
  int batch_size = 128;
  double learning_rate = 1e-3;
  double lr_decay = 1.0;  // multiplicative per epoch
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::uint64_t seed = 0;
  int patience = 0;  // 0 disables early stopping
  // Small datasets get extra epochs until at least this many updates ran.
  int min_updates = 0;
  std::vector<int> hidden = {64, 64};
  int mixture_components = 5;

  void validate() const;  // ConfigError
  Json to_json() const;
  // Keys absent from j keep the values in `defaults`.
  static TrainConfig from_json(const Json& j, TrainConfig defaults);
};

struct TrainingCurve {
  std::vector<double> epoch_loss;
  int epochs_run = 0;
};

class Adam {
 public:
  Adam(Eigen::Index n, const TrainConfig& cfg);
  void step(Vector& params, const Vector& grad, double lr);

 private:
  double b1_, b2_, eps_;
  Vector m_, v_;
  long t_ = 0;
};

// Loss over a minibatch of sample indices; fills grad (pre-sized, zeroed).
using BatchLoss = std::function<double(std::span<const std::size_t> batch, Vector& grad)>;

// Seeded minibatch Adam. Throws Diverged on a non-finite loss.
TrainingCurve train(Vector& params, std::size_t n_samples, const TrainConfig& cfg, const BatchLoss& loss,
                    const char* label);

}  // namespace prime::nn
