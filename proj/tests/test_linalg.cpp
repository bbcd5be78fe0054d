#include <gtest/gtest.h>

#include <random>

#include "oracle.hpp"
#include "resadmm/linalg.hpp"

using namespace resadmm;

namespace {

std::uint64_t ops_of(const std::function<void()>& f) {
  const auto before = op_counter().ops;
  f();
  return op_counter().ops - before;
}

}  // namespace

TEST(Linalg, MatmulVariantsMatchLoops) {
  std::mt19937_64 rng(11);
  for (int t = 0; t < 20; ++t) {
    const std::size_t p = 1 + rng() % 5, q = 1 + rng() % 5, r = 1 + rng() % 5;
    const Matrix a = oracle::random_matrix(p, q, rng), b = oracle::random_matrix(q, r, rng);
    const Matrix want = oracle::prod(a, b);
    EXPECT_LE(max_abs_diff(matmul(a, b), want), 1e-14);
    EXPECT_LE(max_abs_diff(matmul_tn(transpose(a), b), want), 1e-14);
    EXPECT_LE(max_abs_diff(matmul_nt(a, transpose(b)), want), 1e-14);
  }
}

TEST(Linalg, HandMatmul) {
  const Matrix a{{1, 2}, {3, 4}}, b{{5}, {6}};
  EXPECT_EQ(matmul(a, b), (Matrix{{17}, {39}}));
  EXPECT_EQ(transpose(a), (Matrix{{1, 3}, {2, 4}}));
}

TEST(Linalg, ShapeErrorsNameBothOperands) {
  const Matrix a(2, 3), b(2, 3);
  try {
    matmul(a, b);
    FAIL() << "no throw";
  } catch (const ShapeError& e) {
    EXPECT_NE(std::string(e.what()).find("2x3 * 2x3"), std::string::npos);
  }
  EXPECT_THROW(add(a, Matrix(3, 2)), ShapeError);
  EXPECT_THROW(hadamard(a, Matrix(2, 2)), ShapeError);
  EXPECT_THROW(inner(a, Matrix(1, 6)), ShapeError);
  EXPECT_THROW(cholesky(a), ShapeError);
  EXPECT_THROW(Matrix(2, 2, std::vector<double>{1, 2, 3}), ShapeError);
  EXPECT_THROW((Matrix{{1, 2}, {3}}), ShapeError);
}

TEST(Linalg, Elementwise) {
  const Matrix a{{1, -2}}, b{{3, 4}};
  EXPECT_EQ(add(a, b), (Matrix{{4, 2}}));
  EXPECT_EQ(sub(a, b), (Matrix{{-2, -6}}));
  EXPECT_EQ(hadamard(a, b), (Matrix{{3, -8}}));
  EXPECT_EQ(axpy(2, a, b), (Matrix{{5, 0}}));
  EXPECT_EQ(lincomb(2, a, -1, b), (Matrix{{-1, -8}}));
  EXPECT_EQ(scale(-1, a), (Matrix{{-1, 2}}));
  EXPECT_DOUBLE_EQ(inner(a, b), -5);
  EXPECT_DOUBLE_EQ(frob_norm_sq(a), 5);
  EXPECT_DOUBLE_EQ(max_abs(a), 2);
  EXPECT_EQ(add_diag(Matrix{{1, 2}, {3, 4}}, 1), (Matrix{{2, 2}, {3, 5}}));
}

TEST(Linalg, CholeskyAndSolveResiduals) {
  std::mt19937_64 rng(5);
  for (int t = 0; t < 10; ++t) {
    const std::size_t n = 1 + rng() % 6, m = 1 + rng() % 4;
    const Matrix g = oracle::random_matrix(n, n, rng);
    const Matrix a = add_diag(matmul_nt(g, g), 0.5);
    const Matrix l = cholesky(a);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = i + 1; j < n; ++j) EXPECT_EQ(l(i, j), 0.0);
    EXPECT_LE(oracle::rel_err(oracle::prod(l, transpose(l)), a), 1e-13);
    const Matrix b = oracle::random_matrix(n, m, rng);
    EXPECT_LE(oracle::rel_err(oracle::prod(a, spd_solve(a, b)), b), 1e-12);
    const Matrix br = oracle::random_matrix(m, n, rng);
    EXPECT_LE(oracle::rel_err(oracle::prod(spd_solve_right(br, a), a), br), 1e-12);
  }
}

TEST(Linalg, CholeskyRejectsIndefiniteAndAsymmetric) {
  EXPECT_THROW(cholesky(Matrix{{1, 2}, {2, 1}}), NumericalError);
  EXPECT_THROW(cholesky(Matrix{{1, 0.5}, {0, 1}}), NumericalError);
}

TEST(Linalg, FiniteCheck) {
  Matrix a{{1, 2}};
  EXPECT_TRUE(all_finite(a));
  a(0, 1) = std::nan("");
  EXPECT_FALSE(all_finite(a));
}

TEST(Linalg, OpCounts) {
  const Matrix a(3, 4, 1.0), b(4, 2, 1.0);
  EXPECT_EQ(ops_of([&] { matmul(a, b); }), 3u * 2u * 7u);
  EXPECT_EQ(ops_of([&] { matmul_tn(transpose(a), b); }), 3u * 2u * 7u);
  EXPECT_EQ(ops_of([&] { add(a, a); }), 12u);
  EXPECT_EQ(ops_of([&] { axpy(1, a, a); }), 24u);
  EXPECT_EQ(ops_of([&] { lincomb(1, a, 1, a); }), 36u);
  EXPECT_EQ(ops_of([&] { transpose(a); }), 0u);
}

TEST(Linalg, SpecSmallCases) {
  const Matrix a{{1, 2}, {3, 4}};
  EXPECT_EQ(matmul(Matrix::identity(2), a), a);
  EXPECT_EQ(matmul(a, Matrix{{0}, {1}}), (Matrix{{2}, {4}}));
  EXPECT_EQ(hadamard(a, Matrix::ones(2, 2)), a);
  EXPECT_DOUBLE_EQ(frob_norm(Matrix{{3, 4}}), 5.0);
  EXPECT_EQ(transpose(transpose(a)), a);
  EXPECT_EQ(spd_solve(Matrix::identity(2), a), a);
  EXPECT_NEAR(spd_solve(Matrix{{2}}, Matrix{{4}})(0, 0), 2.0, 1e-15);
}

// Gaussian elimination with partial pivoting, kept deliberately separate from Cholesky.
TEST(Linalg, SpdSolveMatchesGaussianElimination) {
  std::mt19937_64 rng(21);
  for (int t = 0; t < 10; ++t) {
    const std::size_t n = 2 + rng() % 4, m = 1 + rng() % 3;
    const Matrix v = oracle::random_matrix(n, 1, rng);
    Matrix a = scale(oracle::uniform(rng, 0.1, 2.0), Matrix::identity(n));
    const double beta = oracle::uniform(rng, 0.5, 3.0);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) a(i, j) += beta * v[i] * v[j];
    const Matrix b = oracle::random_matrix(n, m, rng);
    Matrix g = a, x = b;
    for (std::size_t c = 0; c < n; ++c) {
      std::size_t p = c;
      for (std::size_t r = c + 1; r < n; ++r)
        if (std::abs(g(r, c)) > std::abs(g(p, c))) p = r;
      for (std::size_t k = 0; k < n; ++k) std::swap(g(c, k), g(p, k));
      for (std::size_t k = 0; k < m; ++k) std::swap(x(c, k), x(p, k));
      for (std::size_t r = c + 1; r < n; ++r) {
        const double f = g(r, c) / g(c, c);
        for (std::size_t k = c; k < n; ++k) g(r, k) -= f * g(c, k);
        for (std::size_t k = 0; k < m; ++k) x(r, k) -= f * x(c, k);
      }
    }
    for (std::size_t r = n; r-- > 0;)
      for (std::size_t k = 0; k < m; ++k) {
        double s = x(r, k);
        for (std::size_t c = r + 1; c < n; ++c) s -= g(r, c) * x(c, k);
        x(r, k) = s / g(r, r);
      }
    EXPECT_LE(oracle::rel_err(spd_solve(a, b), x), 1e-10);
  }
}

TEST(Linalg, NonSpdErrorNamesPivot) {
  try {
    cholesky(Matrix{{1, 0}, {0, -3}});
    FAIL() << "no throw";
  } catch (const NumericalError& e) {
    EXPECT_NE(std::string(e.what()).find("index 1"), std::string::npos);
  }
}
