#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "resadmm/activation.hpp"
#include "resadmm/linalg.hpp"

namespace resadmm {

struct NetworkShape {
  int N = 3;
  std::size_t d = 2;
  std::size_t q = 1;
  std::vector<Activation> activations;  // N-1 entries, activations[i-1] is sigma_i

  static NetworkShape uniform(int N, std::size_t d, std::size_t q, Activation a) {
    if (N < 2) throw std::invalid_argument("NetworkShape: N must be >= 2");
    return NetworkShape{N, d, q, std::vector<Activation>(static_cast<std::size_t>(N - 1), a)};
  }

  // 1-based layer index
  const Activation& act(int i) const { return activations.at(static_cast<std::size_t>(i - 1)); }
  std::size_t rows_of(int i) const { return i == N ? q : d; }

  void validate() const {
    if (N < 2) throw ShapeError("NetworkShape: N must be >= 2");
    if (activations.size() != static_cast<std::size_t>(N - 1))
      throw ShapeError("NetworkShape: need N-1 activations");
    if (d == 0 || q == 0) throw ShapeError("NetworkShape: zero width");
  }

  void check_weights(const std::vector<Matrix>& W) const {
    validate();
    if (W.size() != static_cast<std::size_t>(N)) throw ShapeError("weights: expected N matrices");
    for (int i = 1; i <= N; ++i) {
      const Matrix& w = W[static_cast<std::size_t>(i - 1)];
      if (w.rows() != rows_of(i) || w.cols() != d)
        throw ShapeError("weights: W_" + std::to_string(i) + " has shape " + w.shape_str());
    }
  }
};

struct Dataset {
  Matrix X;  // d x n
  Matrix Y;  // q x n
  std::size_t n() const { return X.cols(); }
};

inline Matrix apply_sigma(const Activation& a, const Matrix& z) {
  return map(z, [&](double x) { return a.sigma(x); });
}
inline Matrix apply_dsigma(const Activation& a, const Matrix& z) {
  return map(z, [&](double x) { return a.dsigma(x); });
}

// V_0..V_N
inline std::vector<Matrix> forward(const std::vector<Matrix>& W, const NetworkShape& shape, const Matrix& X) {
  shape.check_weights(W);
  if (X.rows() != shape.d) throw ShapeError("forward: X has " + X.shape_str());
  std::vector<Matrix> V;
  V.reserve(static_cast<std::size_t>(shape.N + 1));
  V.push_back(X);
  for (int i = 1; i < shape.N; ++i) {
    const Matrix& prev = V.back();
    V.push_back(add(prev, apply_sigma(shape.act(i), matmul(W[static_cast<std::size_t>(i - 1)], prev))));
  }
  V.push_back(matmul(W.back(), V.back()));
  return V;
}

inline Matrix predict(const std::vector<Matrix>& W, const NetworkShape& shape, const Matrix& X) {
  return forward(W, shape, X).back();
}

inline double weight_penalty(const std::vector<Matrix>& W) {
  double s = 0.0;
  for (const auto& w : W) s += frob_norm_sq(w);
  return s;
}

inline double objective(const std::vector<Matrix>& W, const NetworkShape& shape, const Matrix& X,
                        const Matrix& Y, double lambda) {
  const Matrix pred = predict(W, shape, X);
  return 0.5 * frob_norm_sq(sub(pred, Y)) + 0.5 * lambda * weight_penalty(W);
}

inline double mse(const Matrix& pred, const Matrix& Y) {
  if (!pred.same_shape(Y)) throw ShapeError("mse: " + pred.shape_str() + " vs " + Y.shape_str());
  if (Y.cols() == 0) return 0.0;
  double s = 0.0;
  for (std::size_t k = 0; k < Y.size(); ++k) s += (pred[k] - Y[k]) * (pred[k] - Y[k]);
  return s / static_cast<double>(Y.cols());
}

// ---- datasets ----

inline Matrix uniform_inputs(std::size_t d, std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-2.0, 2.0);
  Matrix X(d, n);
  for (std::size_t j = 0; j < n; ++j)
    for (std::size_t i = 0; i < d; ++i) X(i, j) = u(rng);
  return X;
}

inline double l1_target(const double* x, std::size_t d) {
  double s = 0.0;
  for (std::size_t i = 0; i < d; ++i) s += std::abs(x[i]);
  return s;
}

// Region 1: all coordinates <= -1. Region 3: any coordinate > 1. Region 2: the rest.
// Exponents by 1-based coordinate index j: region 1 (odd 1, even 2), region 3 (odd 2, even 1), region 2 all 2.
inline double oscillation_target(const double* x, std::size_t d) {
  bool all_le = true, any_gt = false;
  for (std::size_t i = 0; i < d; ++i) {
    all_le = all_le && x[i] <= -1.0;
    any_gt = any_gt || x[i] > 1.0;
  }
  double p = 1.0;
  for (std::size_t i = 0; i < d; ++i) {
    const bool odd = (i % 2) == 0;
    int e = 2;
    if (all_le) e = odd ? 1 : 2;
    else if (any_gt) e = odd ? 2 : 1;
    p *= e == 1 ? x[i] : x[i] * x[i];
  }
  return p;
}

inline Dataset make_dataset(const Matrix& X, double (*f)(const double*, std::size_t)) {
  const std::size_t d = X.rows(), n = X.cols();
  Matrix Y(1, n);
  std::vector<double> col(d);
  for (std::size_t j = 0; j < n; ++j) {
    for (std::size_t i = 0; i < d; ++i) col[i] = X(i, j);
    Y(0, j) = f(col.data(), d);
  }
  return Dataset{X, Y};
}

inline Dataset gen_l1(std::size_t d, std::size_t n, std::uint64_t seed) {
  if (d < 1) throw std::invalid_argument("gen_l1: d must be >= 1");
  return make_dataset(uniform_inputs(d, n, seed), &l1_target);
}

inline Dataset gen_oscillation(std::size_t d, std::size_t n, std::uint64_t seed) {
  if (d < 2) throw std::invalid_argument("gen_oscillation: d must be >= 2");
  return make_dataset(uniform_inputs(d, n, seed), &oscillation_target);
}

inline Dataset select_columns(const Dataset& ds, const std::vector<std::size_t>& idx) {
  Dataset out{Matrix(ds.X.rows(), idx.size()), Matrix(ds.Y.rows(), idx.size())};
  for (std::size_t c = 0; c < idx.size(); ++c) {
    for (std::size_t i = 0; i < ds.X.rows(); ++i) out.X(i, c) = ds.X(i, idx[c]);
    for (std::size_t i = 0; i < ds.Y.rows(); ++i) out.Y(i, c) = ds.Y(i, idx[c]);
  }
  return out;
}

inline std::pair<Dataset, Dataset> split_train_test(const Dataset& ds, double ratio, std::uint64_t seed) {
  if (!(ratio > 0.0 && ratio < 1.0)) throw std::invalid_argument("split_train_test: ratio must be in (0,1)");
  std::vector<std::size_t> idx(ds.n());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::mt19937_64 rng(seed);
  std::shuffle(idx.begin(), idx.end(), rng);
  const auto n_train = static_cast<std::size_t>(std::floor(ratio * static_cast<double>(ds.n())));
  std::vector<std::size_t> a(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n_train));
  std::vector<std::size_t> b(idx.begin() + static_cast<std::ptrdiff_t>(n_train), idx.end());
  return {select_columns(ds, a), select_columns(ds, b)};
}

inline void write_dataset_csv(const Dataset& ds, const std::string& path) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot write " + path);
  f.precision(17);
  for (std::size_t i = 0; i < ds.X.rows(); ++i) f << (i ? "," : "") << "x_" << i + 1;
  for (std::size_t i = 0; i < ds.Y.rows(); ++i) f << ",y_" << i + 1;
  f << "\n";
  for (std::size_t j = 0; j < ds.n(); ++j) {
    for (std::size_t i = 0; i < ds.X.rows(); ++i) f << (i ? "," : "") << ds.X(i, j);
    for (std::size_t i = 0; i < ds.Y.rows(); ++i) f << "," << ds.Y(i, j);
    f << "\n";
  }
}

inline Dataset read_dataset_csv(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot read " + path);
  std::string line;
  std::getline(f, line);
  std::size_t d = 0, q = 0;
  {
    std::stringstream ss(line);
    std::string tok;
    while (std::getline(ss, tok, ',')) {
      if (tok.rfind("x_", 0) == 0) ++d;
      else if (tok.rfind("y_", 0) == 0) ++q;
      else throw std::runtime_error("dataset csv: bad header token '" + tok + "'");
    }
  }
  std::vector<std::vector<double>> rows;
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string tok;
    std::vector<double> r;
    while (std::getline(ss, tok, ',')) r.push_back(std::stod(tok));
    if (r.size() != d + q) throw std::runtime_error("dataset csv: wrong field count");
    rows.push_back(std::move(r));
  }
  Dataset ds{Matrix(d, rows.size()), Matrix(q, rows.size())};
  for (std::size_t j = 0; j < rows.size(); ++j) {
    for (std::size_t i = 0; i < d; ++i) ds.X(i, j) = rows[j][i];
    for (std::size_t i = 0; i < q; ++i) ds.Y(i, j) = rows[j][d + i];
  }
  return ds;
}

// ---- initializers ----

enum class InitMethod { kaiming_normal, constant, normal, uniform, xavier_normal, orthogonal, sparse };

inline InitMethod parse_init(const std::string& s) {
  const std::pair<const char*, InitMethod> table[] = {
      {"kaiming_normal", InitMethod::kaiming_normal}, {"constant", InitMethod::constant},
      {"normal", InitMethod::normal},                 {"uniform", InitMethod::uniform},
      {"xavier_normal", InitMethod::xavier_normal},   {"orthogonal", InitMethod::orthogonal},
      {"sparse", InitMethod::sparse}};
  for (const auto& [name, m] : table)
    if (s == name) return m;
  throw std::invalid_argument("unknown init method '" + s + "'");
}

namespace detail {
inline Matrix orthogonal_init(std::size_t r, std::size_t c, std::mt19937_64& rng) {
  // Gram-Schmidt on a Gaussian matrix, orthonormal along the longer side
  std::normal_distribution<double> g(0.0, 1.0);
  const bool tall = r >= c;
  const std::size_t m = tall ? r : c, k = tall ? c : r;
  std::vector<std::vector<double>> q(k, std::vector<double>(m));
  for (auto& v : q)
    for (auto& x : v) x = g(rng);
  for (std::size_t a = 0; a < k; ++a) {
    for (std::size_t b = 0; b < a; ++b) {
      double dot = 0.0;
      for (std::size_t t = 0; t < m; ++t) dot += q[a][t] * q[b][t];
      for (std::size_t t = 0; t < m; ++t) q[a][t] -= dot * q[b][t];
    }
    double nrm = 0.0;
    for (double x : q[a]) nrm += x * x;
    nrm = std::sqrt(nrm);
    for (auto& x : q[a]) x /= nrm;
  }
  Matrix w(r, c);
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) w(i, j) = tall ? q[j][i] : q[i][j];
  return w;
}
}  // namespace detail

inline Matrix init_matrix(std::size_t r, std::size_t c, InitMethod m, std::mt19937_64& rng) {
  Matrix w(r, c);
  const double fan_in = static_cast<double>(c), fan_out = static_cast<double>(r);
  switch (m) {
    case InitMethod::kaiming_normal: {
      std::normal_distribution<double> g(0.0, std::sqrt(2.0 / fan_in));
      for (auto& x : w.data()) x = g(rng);
      break;
    }
    case InitMethod::constant:
      for (auto& x : w.data()) x = 0.1;
      break;
    case InitMethod::normal: {
      std::normal_distribution<double> g(0.0, 0.1);
      for (auto& x : w.data()) x = g(rng);
      break;
    }
    case InitMethod::uniform: {
      std::uniform_real_distribution<double> u(0.0, 1.0);
      for (auto& x : w.data()) x = u(rng);
      break;
    }
    case InitMethod::xavier_normal: {
      std::normal_distribution<double> g(0.0, std::sqrt(2.0 / (fan_in + fan_out)));
      for (auto& x : w.data()) x = g(rng);
      break;
    }
    case InitMethod::orthogonal: return detail::orthogonal_init(r, c, rng);
    case InitMethod::sparse: {
      // sparsity 0.1 per column, nonzeros N(0, 0.01)
      std::normal_distribution<double> g(0.0, 0.01);
      for (auto& x : w.data()) x = g(rng);
      const auto zeros = static_cast<std::size_t>(std::ceil(0.1 * fan_out));
      std::vector<std::size_t> rows(r);
      for (std::size_t j = 0; j < c; ++j) {
        std::iota(rows.begin(), rows.end(), std::size_t{0});
        std::shuffle(rows.begin(), rows.end(), rng);
        for (std::size_t z = 0; z < zeros; ++z) w(rows[z], j) = 0.0;
      }
      break;
    }
  }
  return w;
}

inline std::vector<Matrix> init_weights(const NetworkShape& shape, InitMethod m, std::uint64_t seed) {
  shape.validate();
  std::mt19937_64 rng(seed);
  std::vector<Matrix> W;
  for (int i = 1; i <= shape.N; ++i) W.push_back(init_matrix(shape.rows_of(i), shape.d, m, rng));
  return W;
}

}  // namespace resadmm
