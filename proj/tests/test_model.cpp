#include <gtest/gtest.h>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <random>

#include "oracle.hpp"
#include "resadmm/model.hpp"

using namespace resadmm;

namespace {

// Per-sample vector loop, independent of the matrix kernels.
std::vector<double> forward_one(const std::vector<Matrix>& W, const NetworkShape& sh, std::vector<double> v) {
  for (int i = 1; i <= sh.N; ++i) {
    const Matrix& w = W[static_cast<std::size_t>(i - 1)];
    std::vector<double> z(w.rows(), 0.0);
    for (std::size_t r = 0; r < w.rows(); ++r)
      for (std::size_t c = 0; c < w.cols(); ++c) z[r] += w(r, c) * v[c];
    if (i == sh.N) return z;
    for (std::size_t r = 0; r < z.size(); ++r) v[r] += sh.act(i).sigma(z[r]);
  }
  return v;
}

const Activation kSin{ActKind::sin};

}  // namespace

TEST(Forward, ZeroWeightsIsIdentityOnHiddenStates) {
  const auto sh = NetworkShape::uniform(4, 3, 2, kSin);
  std::vector<Matrix> W;
  for (int i = 1; i <= 4; ++i) W.emplace_back(sh.rows_of(i), 3);
  std::mt19937_64 rng(1);
  const Matrix X = oracle::random_matrix(3, 5, rng);
  const auto V = forward(W, sh, X);
  ASSERT_EQ(V.size(), 5u);
  for (int i = 0; i < 4; ++i) EXPECT_EQ(V[static_cast<std::size_t>(i)], X);
  EXPECT_EQ(V[4], Matrix(2, 5));
}

TEST(Forward, ScalarTwoLayer) {
  const auto sh = NetworkShape::uniform(2, 1, 1, kSin);
  const auto V = forward({Matrix{{0}}, Matrix{{2}}}, sh, Matrix{{3}});
  EXPECT_EQ(V[2], Matrix{{6}});
}

TEST(Forward, MatchesPerSampleLoop) {
  std::mt19937_64 rng(2);
  for (ActKind k : {ActKind::sigmoid, ActKind::tanh, ActKind::sin, ActKind::relu}) {
    const auto sh = NetworkShape::uniform(3, 3, 2, Activation{k});
    std::vector<Matrix> W;
    for (int i = 1; i <= 3; ++i) W.push_back(oracle::random_matrix(sh.rows_of(i), 3, rng));
    const Matrix X = oracle::random_matrix(3, 6, rng, -2, 2);
    const Matrix P = predict(W, sh, X);
    for (std::size_t j = 0; j < 6; ++j) {
      const auto want = forward_one(W, sh, {X(0, j), X(1, j), X(2, j)});
      for (std::size_t r = 0; r < 2; ++r) EXPECT_NEAR(P(r, j), want[r], 1e-13);
    }
  }
}

TEST(Forward, ShapeErrors) {
  const auto sh = NetworkShape::uniform(3, 2, 1, kSin);
  std::vector<Matrix> W{Matrix(2, 2), Matrix(2, 2), Matrix(1, 2)};
  EXPECT_THROW(forward(W, sh, Matrix(3, 4)), ShapeError);
  W[2] = Matrix(2, 2);
  EXPECT_THROW(forward(W, sh, Matrix(2, 4)), ShapeError);
  W.pop_back();
  EXPECT_THROW(forward(W, sh, Matrix(2, 4)), ShapeError);
}

TEST(Objective, HandValues) {
  const auto sh = NetworkShape::uniform(2, 1, 1, kSin);
  EXPECT_EQ(objective({Matrix{{0}}, Matrix{{0}}}, sh, Matrix{{1}}, Matrix{{0}}, 1.0), 0.0);
  EXPECT_DOUBLE_EQ(objective({Matrix{{0}}, Matrix{{2}}}, sh, Matrix{{1}}, Matrix{{2}}, 1.0), 2.0);
}

TEST(Objective, EqualsMsePlusPenaltyRecomputed) {
  std::mt19937_64 rng(3);
  const auto sh = NetworkShape::uniform(3, 2, 1, Activation{ActKind::tanh});
  std::vector<Matrix> W;
  for (int i = 1; i <= 3; ++i) W.push_back(oracle::random_matrix(sh.rows_of(i), 2, rng));
  const Matrix X = oracle::random_matrix(2, 7, rng), Y = oracle::random_matrix(1, 7, rng);
  double fit = 0, pen = 0;
  for (std::size_t j = 0; j < 7; ++j) {
    const auto p = forward_one(W, sh, {X(0, j), X(1, j)});
    fit += (p[0] - Y(0, j)) * (p[0] - Y(0, j));
  }
  for (const auto& w : W) pen += oracle::sq(w);
  EXPECT_NEAR(objective(W, sh, X, Y, 0.3), 0.5 * fit + 0.15 * pen, 1e-12);
}

TEST(Mse, Examples) {
  const Matrix Y{{1, 2, 3, 4}};
  EXPECT_EQ(mse(Y, Y), 0.0);
  EXPECT_DOUBLE_EQ(mse(Matrix{{2, 3, 4, 5}}, Y), 1.0);
  std::mt19937_64 rng(4);
  const Matrix a = oracle::random_matrix(2, 5, rng), b = oracle::random_matrix(2, 5, rng);
  double s = 0;
  for (std::size_t j = 0; j < 5; ++j)
    for (std::size_t r = 0; r < 2; ++r) s += (a(r, j) - b(r, j)) * (a(r, j) - b(r, j));
  EXPECT_NEAR(mse(a, b), s / 5, 1e-13);
  EXPECT_THROW(mse(a, Matrix(1, 5)), ShapeError);
}

TEST(Datasets, L1Targets) {
  const double a[] = {1, -1}, z[] = {0, 0};
  EXPECT_EQ(l1_target(a, 2), 2.0);
  EXPECT_EQ(l1_target(z, 2), 0.0);
}

// E|U(-2,2)| = 1 per coordinate, so E||x||_1 = d.
TEST(Datasets, L1MeanWithinThreeSigma) {
  const auto ds = gen_l1(2, 10000, 9);
  double m = 0, m2 = 0;
  for (std::size_t j = 0; j < ds.n(); ++j) {
    EXPECT_GE(ds.X(0, j), -2.0);
    EXPECT_LT(ds.X(0, j), 2.0);
    m += ds.Y(0, j);
    m2 += ds.Y(0, j) * ds.Y(0, j);
  }
  m /= 1e4;
  const double sd = std::sqrt(m2 / 1e4 - m * m);
  EXPECT_LE(std::abs(m - 2.0), 3 * sd / 100.0);
}

TEST(Datasets, OscillationRegions) {
  const double r1[] = {-2, -2}, r2[] = {0, 0}, r3[] = {2, 1.5}, mid[] = {-2, 0.5};
  EXPECT_EQ(oscillation_target(r1, 2), -8.0);
  EXPECT_EQ(oscillation_target(r2, 2), 0.0);
  EXPECT_EQ(oscillation_target(r3, 2), 6.0);
  EXPECT_EQ(oscillation_target(mid, 2), 4.0 * 0.25);
  EXPECT_THROW(gen_oscillation(1, 3, 1), std::invalid_argument);
}

TEST(Datasets, Deterministic) {
  EXPECT_EQ(gen_l1(3, 50, 7).X, gen_l1(3, 50, 7).X);
  EXPECT_EQ(gen_oscillation(2, 50, 7).Y, gen_oscillation(2, 50, 7).Y);
  EXPECT_NE(gen_l1(3, 50, 7).X, gen_l1(3, 50, 8).X);
}

TEST(Split, SizesAndMultiset) {
  const auto ds = gen_l1(2, 10, 1);
  auto [tr, te] = split_train_test(ds, 0.8, 3);
  EXPECT_EQ(tr.n(), 8u);
  EXPECT_EQ(te.n(), 2u);
  auto [a, b] = split_train_test(gen_l1(1, 2, 1), 0.5, 3);
  EXPECT_EQ(a.n(), 1u);
  EXPECT_EQ(b.n(), 1u);
  std::vector<double> orig, back;
  for (std::size_t j = 0; j < 10; ++j) orig.push_back(ds.X(0, j));
  for (std::size_t j = 0; j < 8; ++j) back.push_back(tr.X(0, j));
  for (std::size_t j = 0; j < 2; ++j) back.push_back(te.X(0, j));
  std::sort(orig.begin(), orig.end());
  std::sort(back.begin(), back.end());
  EXPECT_EQ(orig, back);
  EXPECT_THROW(split_train_test(ds, 1.0, 3), std::invalid_argument);
}

TEST(Datasets, CsvRoundTripExact) {
  const auto ds = gen_oscillation(3, 20, 5);
  const auto path = (std::filesystem::temp_directory_path() / "resadmm_ds_roundtrip.csv").string();
  write_dataset_csv(ds, path);
  const auto back = read_dataset_csv(path);
  std::remove(path.c_str());
  EXPECT_EQ(back.X, ds.X);
  EXPECT_EQ(back.Y, ds.Y);
}

TEST(Activations, BoundTriples) {
  const auto sg = Activation{ActKind::sigmoid}.bounds().value();
  EXPECT_EQ(sg.psi0, 1.0);
  EXPECT_EQ(sg.psi1, 0.25);
  EXPECT_NEAR(sg.psi2, 1.0 / (6.0 * std::sqrt(3.0)), 1e-9);
  const auto th = Activation{ActKind::tanh}.bounds().value();
  EXPECT_EQ(th.psi1, 1.0);
  EXPECT_NEAR(th.psi2, 4.0 / (3.0 * std::sqrt(3.0)), 1e-9);
  const auto sn = Activation{ActKind::sin}.bounds().value();
  EXPECT_EQ(sn.psi2, 1.0);
  EXPECT_FALSE(Activation{ActKind::relu}.bounds().has_value());
  EXPECT_EQ(Activation{ActKind::relu}.dsigma(0.0), 0.0);
}

TEST(Activations, DerivativesMatchDifferences) {
  for (ActKind k : {ActKind::sigmoid, ActKind::tanh, ActKind::sin, ActKind::cos}) {
    const Activation a{k};
    for (double x : {-1.7, -0.2, 0.0, 0.9, 2.5}) {
      const double h = 1e-5;
      EXPECT_NEAR(a.dsigma(x), (a.sigma(x + h) - a.sigma(x - h)) / (2 * h), 1e-9) << a.name();
      EXPECT_NEAR(a.ddsigma(x), (a.dsigma(x + h) - a.dsigma(x - h)) / (2 * h), 1e-9) << a.name();
    }
  }
  EXPECT_THROW(Activation::parse("swish"), std::invalid_argument);
}

TEST(Init, ShapesAndDeterminism) {
  const auto sh = NetworkShape::uniform(3, 4, 1, kSin);
  for (InitMethod m : {InitMethod::kaiming_normal, InitMethod::constant, InitMethod::normal, InitMethod::uniform,
                       InitMethod::xavier_normal, InitMethod::orthogonal, InitMethod::sparse}) {
    const auto W = init_weights(sh, m, 17);
    EXPECT_NO_THROW(sh.check_weights(W));
    EXPECT_EQ(W, init_weights(sh, m, 17));
  }
  const Matrix C = init_weights(sh, InitMethod::constant, 1)[0];
  for (double x : C.data()) EXPECT_EQ(x, 0.1);
  // orthogonal: square blocks satisfy W W^T = I
  const Matrix Q = init_weights(sh, InitMethod::orthogonal, 3)[0];
  EXPECT_LE(max_abs_diff(oracle::prod(Q, transpose(Q)), Matrix::identity(4)), 1e-12);
  // sparse: ceil(0.1*4) = 1 zero per column
  const Matrix S = init_weights(sh, InitMethod::sparse, 3)[0];
  for (std::size_t c = 0; c < 4; ++c) {
    int zeros = 0;
    for (std::size_t r = 0; r < 4; ++r) zeros += S(r, c) == 0.0;
    EXPECT_GE(zeros, 1);
  }
  EXPECT_THROW(parse_init("he"), std::invalid_argument);
}

TEST(Init, KaimingVariance) {
  const auto sh = NetworkShape::uniform(2, 50, 1, kSin);
  const Matrix W = init_weights(sh, InitMethod::kaiming_normal, 4)[0];
  EXPECT_NEAR(oracle::sq(W) / 2500.0, 2.0 / 50.0, 0.005);
}
