#include <gtest/gtest.h>

#include <cmath>
#include <limits>

#include "prime/errors.hpp"
#include "prime/nn.hpp"
#include "prime/verify.hpp"

using namespace prime;
using namespace prime::nn;

namespace {

Matrix random_matrix(int rows, int cols, Rng& rng) {
  Matrix m(rows, cols);
  for (int c = 0; c < cols; ++c)
    for (int r = 0; r < rows; ++r) m(r, c) = rng.normal();
  return m;
}

}  // namespace

TEST(Nn, ClassificationGradientMatchesFiniteDifferences) {
  Rng rng(1, Stream::kTest);
  const std::vector<int> sizes{6, 8, 7, 5};
  const Mlp init(sizes, rng);
  const Matrix x = random_matrix(6, 9, rng);
  const std::vector<int> labels{0, 1, 2, 4, 4, 1, 0, 2, 1};
  std::vector<double> w;
  for (int i = 0; i < 9; ++i) w.push_back(0.2 + rng.uniform());
  const std::array<bool, 5> mask{true, true, true, false, true};
  const double err = verify::gradient_check(
      [&](const Vector& p, Vector* g) {
        return classification_objective(Mlp(sizes, p), x, labels, w, mask, g);
      },
      init.params());
  EXPECT_LT(err, 1e-6);
}

TEST(Nn, MixtureGradientMatchesFiniteDifferences) {
  Rng rng(2, Stream::kTest);
  const MixtureSpec spec{3, 4, 1e-3};
  const std::vector<int> sizes{5, 10, spec.output_size()};
  const Mlp init(sizes, rng);
  const Matrix x = random_matrix(5, 7, rng);
  const Matrix y = random_matrix(3, 7, rng) * 0.5;
  std::vector<double> w(7, 1.0);
  w[2] = 3.0;
  const double err = verify::gradient_check(
      [&](const Vector& p, Vector* g) { return mixture_objective(Mlp(sizes, p), x, y, w, spec, g); },
      init.params());
  EXPECT_LT(err, 1e-6);
}

TEST(Nn, MaskedSoftmax) {
  Matrix logits(3, 1);
  logits << 1.0, 100.0, 2.0;
  const std::array<bool, 3> mask{true, false, true};
  const Matrix lp = masked_log_softmax(logits, mask);
  EXPECT_TRUE(std::isinf(lp(1, 0)) && lp(1, 0) < 0);
  EXPECT_NEAR(std::exp(lp(0, 0)) + std::exp(lp(2, 0)), 1.0, 1e-12);
}

TEST(Nn, CrossEntropyOfUniformLogits) {
  const Matrix logits = Matrix::Zero(4, 2);
  const std::array<int, 2> labels{0, 3};
  const std::array<double, 2> w{1.0, 1.0};
  const std::array<bool, 4> mask{true, true, true, true};
  EXPECT_NEAR(softmax_cross_entropy(logits, labels, w, mask, nullptr), std::log(4.0), 1e-12);
}

TEST(Nn, MixtureDecodeAndMode) {
  const MixtureSpec spec{1, 2, 0.01};
  Vector out(spec.output_size());
  // logits, means, raw sigmas
  out << 0.0, std::log(3.0), 0.2, 0.8, std::log(0.1), std::log(0.1);
  const Mixture m = decode_mixture(out, spec);
  EXPECT_NEAR(m.weights.sum(), 1.0, 1e-12);
  EXPECT_NEAR(m.weights(1), 0.75, 1e-12);
  EXPECT_NEAR(m.sigmas(0, 0), 0.11, 1e-12);
  EXPECT_EQ(m.mode_component(), 1);
  EXPECT_DOUBLE_EQ(m.mode()(0), 0.8);
}

TEST(Nn, NarrowComponentCanWinMode) {
  const MixtureSpec spec{1, 2, 1e-3};
  Vector out(spec.output_size());
  out << std::log(4.0), 0.0, 0.2, 0.8, std::log(1.0), std::log(0.01);
  EXPECT_EQ(decode_mixture(out, spec).mode_component(), 1);
}

TEST(Nn, MixtureLogDensityOfSingleGaussian) {
  const MixtureSpec spec{2, 1, 0.0};
  Vector out(spec.output_size());
  out << 0.0, 0.1, -0.2, 0.0, std::log(2.0);
  const Mixture m = decode_mixture(out, spec);
  Vector x(2);
  x << 0.1, -0.2;
  EXPECT_NEAR(m.log_density(x), -std::log(2 * std::numbers::pi) - std::log(2.0), 1e-12);
}

TEST(Nn, SigmaFloor) {
  const MixtureSpec spec{1, 1, 0.05};
  Vector out(spec.output_size());
  out << 0.0, 0.0, -1000.0;
  EXPECT_GE(decode_mixture(out, spec).sigmas(0, 0), 0.05);
}

TEST(Nn, MixtureSamplesFollowWeights) {
  const MixtureSpec spec{1, 2, 1e-3};
  Vector out(spec.output_size());
  out << 0.0, std::log(3.0), -5.0, 5.0, std::log(0.1), std::log(0.1);
  const Mixture m = decode_mixture(out, spec);
  Rng rng(3, Stream::kTest);
  int high = 0;
  for (int i = 0; i < 4000; ++i) high += m.sample(rng)(0) > 0;
  EXPECT_NEAR(high / 4000.0, 0.75, 0.03);
}

TEST(Nn, NormalizerHandlesConstantFeature) {
  Matrix x(2, 3);
  x << 1, 2, 3, 5, 5, 5;
  const auto n = Normalizer::fit(x);
  const Matrix z = n.apply(x);
  EXPECT_TRUE(z.allFinite());
  EXPECT_NEAR(z.row(0).mean(), 0.0, 1e-12);
  EXPECT_EQ(z(1, 0), 0.0);
}

TEST(Nn, TrainFitsLinearRegressionAndIsSeeded) {
  Rng rng(4, Stream::kTest);
  const Matrix x = random_matrix(2, 200, rng);
  Matrix y(1, 200);
  for (int c = 0; c < 200; ++c) y(0, c) = 0.5 * x(0, c) - 0.3 * x(1, c);
  const MixtureSpec spec{1, 1, 1e-3};
  TrainConfig cfg;
  cfg.epochs = 200;
  cfg.batch_size = 32;
  cfg.learning_rate = 5e-3;
  cfg.seed = 7;
  auto fit = [&] {
    Rng init(cfg.seed, Stream::kInit);
    Mlp net({2, 16, spec.output_size()}, init);
    std::vector<double> w;
    const auto curve = train(net.params(), 200, cfg,
                             [&](std::span<const std::size_t> b, Vector& g) {
                               w.assign(b.size(), 1.0);
                               return mixture_objective(net, gather_columns(x, b), gather_columns(y, b), w, spec, &g);
                             },
                             "test");
    return std::pair{net, curve};
  };
  const auto [net, curve] = fit();
  EXPECT_LT(curve.epoch_loss.back(), curve.epoch_loss.front());
  const Matrix out = net.forward(x);
  double err = 0;
  for (int c = 0; c < 200; ++c) err += std::abs(decode_mixture(out.col(c), spec).mode()(0) - y(0, c));
  EXPECT_LT(err / 200, 0.05);
  EXPECT_EQ(fit().first.params(), net.params());
}

TEST(Nn, NonFiniteLossThrowsDiverged) {
  Vector p = Vector::Zero(3);
  TrainConfig cfg;
  cfg.epochs = 1;
  EXPECT_THROW(train(p, 4, cfg,
                     [](std::span<const std::size_t>, Vector&) { return std::numeric_limits<double>::quiet_NaN(); },
                     "nan"),
               Diverged);
}

TEST(Nn, MinUpdatesExtendsEpochs) {
  Vector p = Vector::Zero(1);
  TrainConfig cfg;
  cfg.epochs = 1;
  cfg.batch_size = 10;
  cfg.min_updates = 25;
  int calls = 0;
  train(p, 20, cfg,
        [&](std::span<const std::size_t>, Vector& g) {
          ++calls;
          g(0) = 1.0;
          return 1.0;
        },
        "count");
  EXPECT_GE(calls, 25);
}

TEST(Nn, MlpJsonRoundTrip) {
  Rng rng(5, Stream::kTest);
  const Mlp net({3, 4, 2}, rng);
  const Mlp back = Mlp::from_json(Json::parse(net.to_json().dump()));
  EXPECT_EQ(back.sizes(), net.sizes());
  EXPECT_EQ(back.params(), net.params());
}

TEST(Nn, TrainConfigValidation) {
  TrainConfig cfg;
  cfg.batch_size = 0;
  EXPECT_THROW(cfg.validate(), ConfigError);
}
