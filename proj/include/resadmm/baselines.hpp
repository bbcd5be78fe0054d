#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "model.hpp"
#include "trace.hpp"

namespace resadmm::baselines {

enum class OptKind { sgd, sgdm, adam };

inline OptKind parse_opt(const std::string& s) {
  if (s == "sgd") return OptKind::sgd;
  if (s == "sgdm") return OptKind::sgdm;
  if (s == "adam") return OptKind::adam;
  throw std::invalid_argument("unknown optimizer '" + s + "'");
}

struct OptimizerConfig {
  OptKind kind = OptKind::sgd;
  double lr = 0.01;
  double momentum = 0.7;
  double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
  double lr_decay = 0.9;  // multiplied into lr once per epoch
  std::size_t batch_size = 64;
  double weight_decay = 0.0;  // lambda of the penalty term, off by default

  void validate() const {
    if (!(lr > 0)) throw std::invalid_argument("optimizer: lr must be > 0");
    if (!(momentum >= 0 && momentum < 1)) throw std::invalid_argument("optimizer: momentum must be in [0,1)");
    if (!(lr_decay > 0)) throw std::invalid_argument("optimizer: lr_decay must be > 0");
    if (batch_size == 0) throw std::invalid_argument("optimizer: batch_size must be >= 1");
    if (!(beta1 >= 0 && beta1 < 1 && beta2 >= 0 && beta2 < 1 && eps > 0))
      throw std::invalid_argument("optimizer: bad adam constants");
  }
  static OptimizerConfig preset(OptKind k) {
    OptimizerConfig c;
    c.kind = k;
    if (k == OptKind::adam) c.lr = 1e-3;
    return c;
  }
};

// Gradient of data_weight * 1/2 |V_N - Y|^2 + lambda/2 sum |W_i|^2.
inline std::vector<Matrix> backprop(const std::vector<Matrix>& W, const NetworkShape& shape, const Matrix& X,
                                    const Matrix& Y, double lambda, double data_weight = 1.0) {
  shape.check_weights(W);
  const int N = shape.N;
  const auto V = forward(W, shape, X);
  if (Y.rows() != V.back().rows() || Y.cols() != V.back().cols()) throw ShapeError("backprop: Y shape mismatch");
  std::vector<Matrix> g(static_cast<std::size_t>(N));
  const Matrix G = scale(data_weight, sub(V.back(), Y));
  const auto u = [](int i) { return static_cast<std::size_t>(i); };
  g[u(N - 1)] = axpy(lambda, W[u(N - 1)], matmul_nt(G, V[u(N - 1)]));
  Matrix delta = matmul_tn(W[u(N - 1)], G);  // dLoss/dV_{N-1}
  for (int i = N - 1; i >= 1; --i) {
    const Matrix& Vin = V[u(i - 1)];
    const Matrix D = hadamard(delta, apply_dsigma(shape.act(i), matmul(W[u(i - 1)], Vin)));
    g[u(i - 1)] = axpy(lambda, W[u(i - 1)], matmul_nt(D, Vin));
    if (i > 1) delta = add(delta, matmul_tn(W[u(i - 1)], D));
  }
  return g;
}

struct OptState {
  std::vector<Matrix> m, v;  // velocity (sgdm) or first/second moments (adam)
  long t = 0;
};

inline void step_sgd(std::vector<Matrix>& W, const std::vector<Matrix>& g, OptState& st, double lr) {
  for (std::size_t i = 0; i < W.size(); ++i) W[i] = axpy(-lr, g[i], W[i]);
  ++st.t;
}

inline void step_sgdm(std::vector<Matrix>& W, const std::vector<Matrix>& g, OptState& st, double lr, double m) {
  if (st.m.empty())
    for (const auto& x : g) st.m.push_back(Matrix::zeros(x.rows(), x.cols()));
  for (std::size_t i = 0; i < W.size(); ++i) {
    st.m[i] = axpy(m, st.m[i], g[i]);
    W[i] = axpy(-lr, st.m[i], W[i]);
  }
  ++st.t;
}

inline void step_adam(std::vector<Matrix>& W, const std::vector<Matrix>& g, OptState& st, double lr, double b1,
                      double b2, double eps) {
  if (st.m.empty())
    for (const auto& x : g) {
      st.m.push_back(Matrix::zeros(x.rows(), x.cols()));
      st.v.push_back(Matrix::zeros(x.rows(), x.cols()));
    }
  ++st.t;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(st.t));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(st.t));
  for (std::size_t i = 0; i < W.size(); ++i) {
    st.m[i] = lincomb(b1, st.m[i], 1.0 - b1, g[i]);
    st.v[i] = lincomb(b2, st.v[i], 1.0 - b2, hadamard(g[i], g[i]));
    Matrix w = W[i];
    for (std::size_t e = 0; e < w.size(); ++e) {
      const double mh = st.m[i][e] / c1, vh = st.v[i][e] / c2;
      w[e] -= lr * mh / (std::sqrt(vh) + eps);
    }
    W[i] = std::move(w);
  }
}

inline void step(std::vector<Matrix>& W, const std::vector<Matrix>& g, OptState& st, const OptimizerConfig& c,
                 double lr) {
  switch (c.kind) {
    case OptKind::sgd: step_sgd(W, g, st, lr); break;
    case OptKind::sgdm: step_sgdm(W, g, st, lr, c.momentum); break;
    case OptKind::adam: step_adam(W, g, st, lr, c.beta1, c.beta2, c.eps); break;
  }
}

struct TrainResult {
  std::vector<Matrix> W;
  std::vector<TraceRecord> trace;
  std::vector<double> train_mse;  // per iteration
  std::vector<double> test_mse;   // per iteration when a test set is given
  long iterations = 0;
};

inline std::size_t batches_per_epoch(std::size_t n, std::size_t b) { return (n + b - 1) / b; }

// Minibatch training with per-epoch shuffling and per-epoch lr decay.
// Batch loss is the mean over the batch: data_weight = 1/|batch|.
// max_iterations > 0 stops early after that many batch steps.
inline TrainResult train_baseline(const NetworkShape& shape, const std::vector<Matrix>& W0, const Dataset& train,
                                  const OptimizerConfig& cfg, long epochs, std::uint64_t seed,
                                  const Dataset* test = nullptr, long max_iterations = 0) {
  cfg.validate();
  TrainResult res;
  res.W = W0;
  OptState st;
  std::mt19937_64 rng(seed);
  const std::size_t n = train.n();
  std::vector<std::size_t> idx(n);
  double lr = cfg.lr;
  long it = 0;
  for (long ep = 0; ep < epochs; ++ep) {
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    std::shuffle(idx.begin(), idx.end(), rng);
    for (std::size_t b0 = 0; b0 < n; b0 += cfg.batch_size) {
      if (max_iterations > 0 && it >= max_iterations) return res;
      const std::vector<std::size_t> sel(idx.begin() + static_cast<std::ptrdiff_t>(b0),
                                         idx.begin() + static_cast<std::ptrdiff_t>(std::min(n, b0 + cfg.batch_size)));
      const Dataset batch = select_columns(train, sel);
      const auto ops0 = op_counter().ops;
      const auto t0 = std::chrono::steady_clock::now();
      const auto g = backprop(res.W, shape, batch.X, batch.Y, cfg.weight_decay, 1.0 / static_cast<double>(sel.size()));
      const auto prev = res.W;
      step(res.W, g, st, cfg, lr);
      const auto t1 = std::chrono::steady_clock::now();
      ++it;
      TraceRecord r;
      r.k = it;
      r.op_count = op_counter().ops - ops0;
      r.wall_ns = std::chrono::duration_cast<std::chrono::nanoseconds>(t1 - t0).count();
      double dx = 0, gn = 0;
      for (std::size_t i = 0; i < g.size(); ++i) {
        dx += frob_norm_sq(sub(res.W[i], prev[i]));
        gn += frob_norm_sq(g[i]);
      }
      r.delta_x = std::sqrt(dx);
      r.grad_lag = std::sqrt(gn);
      r.objective = objective(res.W, shape, train.X, train.Y, cfg.weight_decay);
      for (const auto& w : res.W)
        if (!all_finite(w)) throw NumericalError("baseline: non-finite weights at iteration " + std::to_string(it) +
                                                 "; last good iteration " + std::to_string(it - 1));
      res.trace.push_back(r);
      res.train_mse.push_back(mse(predict(res.W, shape, train.X), train.Y));
      if (test) res.test_mse.push_back(mse(predict(res.W, shape, test->X), test->Y));
      res.iterations = it;
    }
    lr *= cfg.lr_decay;
  }
  return res;
}

}  // namespace resadmm::baselines
