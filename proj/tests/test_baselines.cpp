#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "oracle.hpp"
#include "resadmm/baselines.hpp"

using namespace resadmm;
using namespace resadmm::baselines;

TEST(Backprop, MatchesCentralDifferences) {
  std::mt19937_64 rng(12);
  for (ActKind k : {ActKind::sigmoid, ActKind::tanh, ActKind::sin})
    for (int N = 2; N <= 4; ++N) {
      const auto sh = NetworkShape::uniform(N, 3, 2, Activation{k});
      std::vector<Matrix> W;
      for (int i = 1; i <= N; ++i) W.push_back(oracle::random_matrix(sh.rows_of(i), 3, rng));
      const Matrix X = oracle::random_matrix(3, 4, rng, -2, 2), Y = oracle::random_matrix(2, 4, rng);
      const double lam = 0.05, dw = 0.25;
      const auto g = backprop(W, sh, X, Y, lam, dw);
      for (int i = 0; i < N; ++i) {
        const auto fd = oracle::fd_grad(
            [&](const Matrix& w) {
              auto Wt = W;
              Wt[static_cast<std::size_t>(i)] = w;
              const Matrix r = oracle::comb(predict(Wt, sh, X), -1.0, Y);
              double pen = 0;
              for (const auto& m : Wt) pen += oracle::sq(m);
              return 0.5 * dw * oracle::sq(r) + 0.5 * lam * pen;
            },
            W[static_cast<std::size_t>(i)]);
        EXPECT_LE(oracle::rel_err(g[static_cast<std::size_t>(i)], fd), 1e-5) << "N=" << N << " layer " << i + 1;
      }
    }
}

TEST(Optimizers, SgdHandStep) {
  std::vector<Matrix> W{Matrix{{1.0, 2.0}}};
  OptState st;
  step_sgd(W, {Matrix{{0.5, -1.0}}}, st, 0.1);
  EXPECT_DOUBLE_EQ(W[0](0, 0), 0.95);
  EXPECT_DOUBLE_EQ(W[0](0, 1), 2.1);
}

TEST(Optimizers, MomentumHandSteps) {
  std::vector<Matrix> W{Matrix{{0.0}}};
  OptState st;
  step_sgdm(W, {Matrix{{1.0}}}, st, 0.1, 0.7);
  EXPECT_DOUBLE_EQ(W[0](0, 0), -0.1);
  step_sgdm(W, {Matrix{{1.0}}}, st, 0.1, 0.7);  // velocity 1.7
  EXPECT_DOUBLE_EQ(W[0](0, 0), -0.1 - 0.17);
}

TEST(Optimizers, AdamHandSteps) {
  std::vector<Matrix> W{Matrix{{0.0}}};
  OptState st;
  // first bias-corrected step is lr * g/|g| up to eps
  step_adam(W, {Matrix{{4.0}}}, st, 1e-3, 0.9, 0.999, 1e-8);
  EXPECT_NEAR(W[0](0, 0), -1e-3, 1e-11);
  step_adam(W, {Matrix{{-2.0}}}, st, 1e-3, 0.9, 0.999, 1e-8);
  const double m = 0.9 * 0.4 + 0.1 * -2.0, v = 0.999 * 0.016 + 0.001 * 4.0;
  const double mh = m / (1 - 0.81), vh = v / (1 - 0.999 * 0.999);
  const double w1 = -1e-3 * 4.0 / (4.0 + 1e-8);
  EXPECT_NEAR(W[0](0, 0), w1 - 1e-3 * mh / (std::sqrt(vh) + 1e-8), 1e-15);
}

TEST(Optimizers, PresetsAndValidation) {
  EXPECT_EQ(OptimizerConfig::preset(OptKind::adam).lr, 1e-3);
  const auto s = OptimizerConfig::preset(OptKind::sgd);
  EXPECT_EQ(s.lr, 0.01);
  EXPECT_EQ(s.lr_decay, 0.9);
  EXPECT_EQ(s.batch_size, 64u);
  EXPECT_EQ(OptimizerConfig::preset(OptKind::sgdm).momentum, 0.7);
  auto bad = s;
  bad.momentum = 1.0;
  EXPECT_THROW(bad.validate(), std::invalid_argument);
  EXPECT_THROW(parse_opt("rmsprop"), std::invalid_argument);
}

TEST(Training, LearningRateDecaysPerEpoch) {
  // zero data gradient and unit weight decay: each step scales W by (1 - lr_epoch)
  const auto sh = NetworkShape::uniform(2, 1, 1, Activation{ActKind::sin});
  const Dataset D{Matrix{{0.0, 0.0, 0.0}}, Matrix{{0.0, 0.0, 0.0}}};
  auto c = OptimizerConfig::preset(OptKind::sgd);
  c.batch_size = 2;  // two batches per epoch
  c.weight_decay = 1.0;
  c.lr = 0.1;
  c.lr_decay = 0.5;
  const auto r = train_baseline(sh, {Matrix{{1.0}}, Matrix{{1.0}}}, D, c, 2, 1);
  EXPECT_EQ(r.iterations, 4);
  EXPECT_NEAR(r.W[0](0, 0), 0.9 * 0.9 * 0.95 * 0.95, 1e-15);
}

TEST(Training, DeterministicAndIterationCapped) {
  const auto sh = NetworkShape::uniform(3, 2, 1, Activation{ActKind::sigmoid});
  const auto D = gen_l1(2, 100, 3);
  const auto W0 = init_weights(sh, InitMethod::kaiming_normal, 3);
  for (OptKind k : {OptKind::sgd, OptKind::sgdm, OptKind::adam}) {
    const auto c = OptimizerConfig::preset(k);
    const auto a = train_baseline(sh, W0, D, c, 10, 5, &D, 7);
    const auto b = train_baseline(sh, W0, D, c, 10, 5, &D, 7);
    EXPECT_EQ(a.W, b.W);
    EXPECT_EQ(a.iterations, 7);
    EXPECT_EQ(a.trace.size(), 7u);
    EXPECT_EQ(a.test_mse.size(), 7u);
    EXPECT_EQ(a.train_mse, a.test_mse);  // same set passed twice
    EXPECT_GT(a.trace.back().op_count, 0u);
  }
}

TEST(Training, SgdReducesTrainingLoss) {
  const auto sh = NetworkShape::uniform(3, 2, 1, Activation{ActKind::sigmoid});
  const auto D = gen_l1(2, 400, 4);
  const auto r =
      train_baseline(sh, init_weights(sh, InitMethod::kaiming_normal, 4), D, OptimizerConfig::preset(OptKind::sgd), 20, 1);
  EXPECT_LT(r.train_mse.back(), 0.5 * r.train_mse.front());
}
