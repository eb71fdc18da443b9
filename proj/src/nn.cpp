#include "prime/nn.hpp"

#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>

#include "prime/errors.hpp"

namespace prime::nn {

namespace {
constexpr double kNegInf = -std::numeric_limits<double>::infinity();
const double kLogSqrt2Pi = 0.5 * std::log(2.0 * std::numbers::pi);
}  // namespace

// Mlp -------------------------------------------------------------------------

void Mlp::layout() {
  weight_offset_.clear();
  bias_offset_.clear();
  Eigen::Index off = 0;
  for (std::size_t l = 0; l + 1 < sizes_.size(); ++l) {
    weight_offset_.push_back(off);
    off += static_cast<Eigen::Index>(sizes_[l]) * sizes_[l + 1];
    bias_offset_.push_back(off);
    off += sizes_[l + 1];
  }
  if (params_.size() == 0) params_ = Vector::Zero(off);
  if (params_.size() != off) throw DimensionMismatch("parameter vector does not match layer sizes");
}

Mlp::Mlp(std::vector<int> sizes, Rng& rng) : sizes_(std::move(sizes)) {
  if (sizes_.size() < 2) throw PreconditionError("an MLP needs at least input and output sizes");
  layout();
  for (std::size_t l = 0; l + 1 < sizes_.size(); ++l) {
    const double limit = std::sqrt(6.0 / (sizes_[l] + sizes_[l + 1]));
    const Eigen::Index n = static_cast<Eigen::Index>(sizes_[l]) * sizes_[l + 1];
    for (Eigen::Index k = 0; k < n; ++k) params_[weight_offset_[l] + k] = rng.uniform(-limit, limit);
  }
}

Mlp::Mlp(std::vector<int> sizes, Vector params) : sizes_(std::move(sizes)), params_(std::move(params)) {
  layout();
}

Matrix Mlp::forward(const Matrix& x, Cache* cache) const {
  if (x.rows() != input_dim()) throw DimensionMismatch("MLP input has wrong dimension");
  const std::size_t layers = sizes_.size() - 1;
  if (cache) {
    cache->activations.clear();
    cache->activations.push_back(x);
  }
  Matrix a = x;
  for (std::size_t l = 0; l < layers; ++l) {
    Eigen::Map<const Matrix> w(params_.data() + weight_offset_[l], sizes_[l + 1], sizes_[l]);
    Eigen::Map<const Vector> b(params_.data() + bias_offset_[l], sizes_[l + 1]);
    Matrix z = w * a;
    z.colwise() += b;
    if (l + 1 < layers) {
      a = z.array().tanh().matrix();
      if (cache) cache->activations.push_back(a);
    } else {
      a = std::move(z);
    }
  }
  return a;
}

void Mlp::backward(const Cache& cache, const Matrix& grad_out, Vector& grad) const {
  const std::size_t layers = sizes_.size() - 1;
  Matrix delta = grad_out;
  for (std::size_t l = layers; l-- > 0;) {
    const Matrix& in = cache.activations[l];
    Eigen::Map<Matrix> gw(grad.data() + weight_offset_[l], sizes_[l + 1], sizes_[l]);
    Eigen::Map<Vector> gb(grad.data() + bias_offset_[l], sizes_[l + 1]);
    gw.noalias() += delta * in.transpose();
    gb += delta.rowwise().sum();
    if (l == 0) break;
    Eigen::Map<const Matrix> w(params_.data() + weight_offset_[l], sizes_[l + 1], sizes_[l]);
    Matrix back = w.transpose() * delta;
    delta = (back.array() * (1.0 - in.array().square())).matrix();
  }
}

Eigen::Map<Vector> Mlp::output_bias() {
  const std::size_t last = sizes_.size() - 2;
  return Eigen::Map<Vector>(params_.data() + bias_offset_[last], sizes_.back());
}

Json Mlp::to_json() const {
  return {{"sizes", sizes_}, {"params", std::vector<double>(params_.data(), params_.data() + params_.size())}};
}

Mlp Mlp::from_json(const Json& j) {
  const auto p = j.at("params").get<std::vector<double>>();
  return Mlp(j.at("sizes").get<std::vector<int>>(), Eigen::Map<const Vector>(p.data(), static_cast<Eigen::Index>(p.size())));
}

// Normalizer ------------------------------------------------------------------

Normalizer Normalizer::fit(const Matrix& x) {
  Normalizer n;
  n.mean = x.rowwise().mean();
  n.inv_std.resize(x.rows());
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    const double var = (x.row(r).array() - n.mean[r]).square().mean();
    const double sd = std::sqrt(var);
    n.inv_std[r] = sd > 1e-6 ? 1.0 / sd : 1.0;
  }
  return n;
}

Normalizer Normalizer::identity(int dim) { return {Vector::Zero(dim), Vector::Ones(dim)}; }

Matrix Normalizer::apply(const Matrix& x) const {
  if (x.rows() != mean.size()) throw DimensionMismatch("normalizer dimension mismatch");
  return ((x.colwise() - mean).array().colwise() * inv_std.array()).matrix();
}

Json Normalizer::to_json() const {
  return {{"mean", std::vector<double>(mean.data(), mean.data() + mean.size())},
          {"inv_std", std::vector<double>(inv_std.data(), inv_std.data() + inv_std.size())}};
}

Normalizer Normalizer::from_json(const Json& j) {
  const auto m = j.at("mean").get<std::vector<double>>();
  const auto s = j.at("inv_std").get<std::vector<double>>();
  Normalizer n;
  n.mean = Eigen::Map<const Vector>(m.data(), static_cast<Eigen::Index>(m.size()));
  n.inv_std = Eigen::Map<const Vector>(s.data(), static_cast<Eigen::Index>(s.size()));
  return n;
}

// Softmax head ------------------------------------------------------------------

Matrix masked_log_softmax(const Matrix& logits, std::span<const bool> mask) {
  Matrix out(logits.rows(), logits.cols());
  for (Eigen::Index b = 0; b < logits.cols(); ++b) {
    double mx = kNegInf;
    for (Eigen::Index k = 0; k < logits.rows(); ++k)
      if (mask[k]) mx = std::max(mx, logits(k, b));
    double sum = 0.0;
    for (Eigen::Index k = 0; k < logits.rows(); ++k)
      if (mask[k]) sum += std::exp(logits(k, b) - mx);
    const double lse = mx + std::log(sum);
    for (Eigen::Index k = 0; k < logits.rows(); ++k) out(k, b) = mask[k] ? logits(k, b) - lse : kNegInf;
  }
  return out;
}

double softmax_cross_entropy(const Matrix& logits, std::span<const int> labels,
                             std::span<const double> weights, std::span<const bool> mask, Matrix* grad) {
  const Matrix logp = masked_log_softmax(logits, mask);
  const double wsum = std::accumulate(weights.begin(), weights.end(), 0.0);
  double loss = 0.0;
  if (grad) grad->setZero(logits.rows(), logits.cols());
  for (Eigen::Index b = 0; b < logits.cols(); ++b) {
    const double w = weights[b] / wsum;
    loss -= w * logp(labels[b], b);
    if (grad) {
      for (Eigen::Index k = 0; k < logits.rows(); ++k)
        if (mask[k]) (*grad)(k, b) = w * std::exp(logp(k, b));
      (*grad)(labels[b], b) -= w;
    }
  }
  return loss;
}

// Mixture head -------------------------------------------------------------------

Mixture decode_mixture(const Eigen::Ref<const Vector>& out, const MixtureSpec& spec) {
  const int K = spec.components, D = spec.dim;
  Mixture m;
  const Vector logits = out.head(K);
  const double mx = logits.maxCoeff();
  m.weights = (logits.array() - mx).exp().matrix();
  m.weights /= m.weights.sum();
  m.means.resize(D, K);
  m.sigmas.resize(D, K);
  for (int k = 0; k < K; ++k)
    for (int d = 0; d < D; ++d) {
      m.means(d, k) = out[K + k * D + d];
      m.sigmas(d, k) = spec.sigma_min + std::exp(out[K + K * D + k * D + d]);
    }
  return m;
}

double Mixture::log_density(const Vector& x) const {
  const Eigen::Index K = weights.size();
  Vector lc(K);
  for (Eigen::Index k = 0; k < K; ++k) {
    double l = std::log(weights[k]);
    for (Eigen::Index d = 0; d < means.rows(); ++d) {
      const double z = (x[d] - means(d, k)) / sigmas(d, k);
      l += -0.5 * z * z - std::log(sigmas(d, k)) - kLogSqrt2Pi;
    }
    lc[k] = l;
  }
  const double mx = lc.maxCoeff();
  return mx + std::log((lc.array() - mx).exp().sum());
}

int Mixture::mode_component() const {
  int best = 0;
  double best_score = kNegInf;
  for (Eigen::Index k = 0; k < weights.size(); ++k) {
    double s = std::log(weights[k]);
    for (Eigen::Index d = 0; d < sigmas.rows(); ++d) s -= std::log(sigmas(d, k)) + kLogSqrt2Pi;
    if (s > best_score) {
      best_score = s;
      best = static_cast<int>(k);
    }
  }
  return best;
}

Vector Mixture::sample(Rng& rng) const {
  double u = rng.uniform();
  Eigen::Index k = 0;
  for (; k + 1 < weights.size(); ++k) {
    if (u < weights[k]) break;
    u -= weights[k];
  }
  Vector x(means.rows());
  for (Eigen::Index d = 0; d < means.rows(); ++d) x[d] = rng.normal(means(d, k), sigmas(d, k));
  return x;
}

double mixture_nll(const Matrix& out, const Matrix& targets, std::span<const double> weights,
                   const MixtureSpec& spec, Matrix* grad) {
  const int K = spec.components, D = spec.dim;
  if (out.rows() != spec.output_size() || targets.rows() != D || targets.cols() != out.cols())
    throw DimensionMismatch("mixture head shape mismatch");
  const double wsum = std::accumulate(weights.begin(), weights.end(), 0.0);
  if (grad) grad->setZero(out.rows(), out.cols());
  double loss = 0.0;
  Vector logw(K), lc(K), gamma(K);
  for (Eigen::Index b = 0; b < out.cols(); ++b) {
    const double w = weights[b] / wsum;
    const double mx = out.col(b).head(K).maxCoeff();
    const double lse = mx + std::log((out.col(b).head(K).array() - mx).exp().sum());
    for (int k = 0; k < K; ++k) {
      logw[k] = out(k, b) - lse;
      double l = logw[k];
      for (int d = 0; d < D; ++d) {
        const double sigma = spec.sigma_min + std::exp(out(K + K * D + k * D + d, b));
        const double z = (targets(d, b) - out(K + k * D + d, b)) / sigma;
        l += -0.5 * z * z - std::log(sigma) - kLogSqrt2Pi;
      }
      lc[k] = l;
    }
    const double lmx = lc.maxCoeff();
    const double log_lik = lmx + std::log((lc.array() - lmx).exp().sum());
    loss -= w * log_lik;
    if (!grad) continue;
    gamma = (lc.array() - log_lik).exp().matrix();
    for (int k = 0; k < K; ++k) {
      (*grad)(k, b) = w * (std::exp(logw[k]) - gamma[k]);
      for (int d = 0; d < D; ++d) {
        const double e = std::exp(out(K + K * D + k * D + d, b));
        const double sigma = spec.sigma_min + e;
        const double diff = targets(d, b) - out(K + k * D + d, b);
        (*grad)(K + k * D + d, b) = -w * gamma[k] * diff / (sigma * sigma);
        const double dsigma = gamma[k] * (1.0 / sigma - diff * diff / (sigma * sigma * sigma));
        (*grad)(K + K * D + k * D + d, b) = w * dsigma * e;
      }
    }
  }
  return loss;
}

void init_mixture_bias(Mlp& net, const Matrix& targets, const MixtureSpec& spec, Rng& rng) {
  const int K = spec.components, D = spec.dim;
  auto bias = net.output_bias();
  const Vector mean = targets.rowwise().mean();
  Vector sd(D);
  for (int d = 0; d < D; ++d) {
    const double v = targets.cols() > 0 ? (targets.row(d).array() - mean[d]).square().mean() : 1.0;
    sd[d] = std::max(std::sqrt(v), 10.0 * spec.sigma_min);
  }
  for (int k = 0; k < K; ++k) {
    bias[k] = 0.0;
    for (int d = 0; d < D; ++d) {
      bias[K + k * D + d] = mean[d] + 0.5 * sd[d] * rng.normal();
      bias[K + K * D + k * D + d] = std::log(sd[d]);
    }
  }
}

double classification_objective(const Mlp& net, const Matrix& x, std::span<const int> labels,
                                std::span<const double> weights, std::span<const bool> mask, Vector* grad) {
  Mlp::Cache cache;
  const Matrix logits = net.forward(x, grad ? &cache : nullptr);
  if (!grad) return softmax_cross_entropy(logits, labels, weights, mask, nullptr);
  Matrix g;
  const double loss = softmax_cross_entropy(logits, labels, weights, mask, &g);
  net.backward(cache, g, *grad);
  return loss;
}

double mixture_objective(const Mlp& net, const Matrix& x, const Matrix& targets, std::span<const double> weights,
                         const MixtureSpec& spec, Vector* grad) {
  Mlp::Cache cache;
  const Matrix out = net.forward(x, grad ? &cache : nullptr);
  if (!grad) return mixture_nll(out, targets, weights, spec, nullptr);
  Matrix g;
  const double loss = mixture_nll(out, targets, weights, spec, &g);
  net.backward(cache, g, *grad);
  return loss;
}

Matrix gather_columns(const Matrix& m, std::span<const std::size_t> idx) {
  Matrix out(m.rows(), static_cast<Eigen::Index>(idx.size()));
  for (std::size_t k = 0; k < idx.size(); ++k) out.col(static_cast<Eigen::Index>(k)) = m.col(static_cast<Eigen::Index>(idx[k]));
  return out;
}

// Training --------------------------------------------------------------------

void TrainConfig::validate() const {
  if (epochs < 1 || batch_size < 1 || !(learning_rate > 0) || !(lr_decay > 0) || !(epsilon > 0) ||
      !(beta1 >= 0 && beta1 < 1) || !(beta2 >= 0 && beta2 < 1) || patience < 0 || min_updates < 0 ||
      mixture_components < 1)
    throw ConfigError("training configuration values must be positive");
  for (int h : hidden)
    if (h < 1) throw ConfigError("hidden widths must be positive");
}

Json TrainConfig::to_json() const {
  return {{"epochs", epochs},     {"batch_size", batch_size}, {"learning_rate", learning_rate},
          {"lr_decay", lr_decay}, {"beta1", beta1},           {"beta2", beta2},
          {"epsilon", epsilon},   {"seed", seed},             {"patience", patience},
          {"min_updates", min_updates},
          {"hidden", hidden},     {"mixture_components", mixture_components}};
}

TrainConfig TrainConfig::from_json(const Json& j, TrainConfig d) {
  d.epochs = j.value("epochs", d.epochs);
  d.batch_size = j.value("batch_size", d.batch_size);
  d.learning_rate = j.value("learning_rate", d.learning_rate);
  d.lr_decay = j.value("lr_decay", d.lr_decay);
  d.beta1 = j.value("beta1", d.beta1);
  d.beta2 = j.value("beta2", d.beta2);
  d.epsilon = j.value("epsilon", d.epsilon);
  d.seed = j.value("seed", d.seed);
  d.patience = j.value("patience", d.patience);
  d.min_updates = j.value("min_updates", d.min_updates);
  d.hidden = j.value("hidden", d.hidden);
  d.mixture_components = j.value("mixture_components", d.mixture_components);
  d.validate();
  return d;
}

Adam::Adam(Eigen::Index n, const TrainConfig& cfg)
    : b1_(cfg.beta1), b2_(cfg.beta2), eps_(cfg.epsilon), m_(Vector::Zero(n)), v_(Vector::Zero(n)) {}

void Adam::step(Vector& params, const Vector& grad, double lr) {
  ++t_;
  m_ = b1_ * m_ + (1.0 - b1_) * grad;
  v_ = b2_ * v_ + (1.0 - b2_) * grad.cwiseProduct(grad);
  const double c1 = 1.0 - std::pow(b1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(b2_, static_cast<double>(t_));
  params.array() -= lr * (m_.array() / c1) / ((v_.array() / c2).sqrt() + eps_);
}

TrainingCurve train(Vector& params, std::size_t n_samples, const TrainConfig& cfg, const BatchLoss& loss,
                    const char* label) {
  cfg.validate();
  if (n_samples == 0) throw PreconditionError(std::string(label) + ": empty training set");
  TrainingCurve curve;
  Adam adam(params.size(), cfg);
  Vector grad(params.size());
  std::vector<std::size_t> order(n_samples);
  double lr = cfg.learning_rate;
  double best = std::numeric_limits<double>::infinity();
  int stale = 0;
  const std::size_t per_epoch = (n_samples + static_cast<std::size_t>(cfg.batch_size) - 1) / static_cast<std::size_t>(cfg.batch_size);
  const int epochs = std::max<int>(cfg.epochs, static_cast<int>((static_cast<std::size_t>(cfg.min_updates) + per_epoch - 1) / per_epoch));
  for (int epoch = 0; epoch < epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng rng(cfg.seed, Stream::kBatch, static_cast<std::uint64_t>(epoch));
    rng.shuffle(order);
    double total = 0.0;
    for (std::size_t start = 0; start < n_samples; start += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t end = std::min(n_samples, start + static_cast<std::size_t>(cfg.batch_size));
      std::span<const std::size_t> batch(order.data() + start, end - start);
      grad.setZero();
      const double l = loss(batch, grad);
      if (!std::isfinite(l) || !grad.allFinite())
        throw Diverged(std::string(label) + ": non-finite loss at epoch " + std::to_string(epoch));
      total += l * static_cast<double>(batch.size());
      adam.step(params, grad, lr);
    }
    const double epoch_loss = total / static_cast<double>(n_samples);
    curve.epoch_loss.push_back(epoch_loss);
    curve.epochs_run = epoch + 1;
    // Stretched schedules keep the same total decay as cfg.epochs epochs.
    lr *= std::pow(cfg.lr_decay, static_cast<double>(cfg.epochs) / epochs);
    if (cfg.patience > 0) {
      if (epoch_loss < best - 1e-6 * std::abs(best)) {
        best = epoch_loss;
        stale = 0;
      } else if (++stale >= cfg.patience) {
        break;
      }
    }
  }
  return curve;
}

}  // namespace prime::nn
