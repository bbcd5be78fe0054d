#pragma once

#include <chrono>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "resadmm/inner_solver.hpp"
#include "resadmm/linalg.hpp"
#include "resadmm/model.hpp"
#include "resadmm/trace.hpp"

namespace resadmm::admm2 {

struct Hyper {
  double lambda = 1e-3;
  double mu = 0.1;
  double beta = 1.0;
  Variant variant = Variant::prox_grad;
  Schedule omega = Schedule::constant(1.0);  // prox-point W
  Schedule nu = Schedule::constant(1.0);     // prox-point V
  Schedule tau = Schedule::constant(1.0);    // prox-grad W
  Schedule iota = Schedule::constant(1.0);   // prox-grad V
  InnerOptions inner{};
};

// W[i-1] = W_i, V[i-1] = V_i for i = 1..N; V_0 is the data matrix X.
struct State {
  std::vector<Matrix> W;
  std::vector<Matrix> V;
  Matrix Lambda;
  long k = 0;
};

struct ValidationReport {
  bool ok = true;
  std::vector<std::string> failures;
};

inline ValidationReport validate_2s_params(const Hyper& h, const NetworkShape& shape, bool strict) {
  ValidationReport r;
  auto fail = [&](const std::string& m) {
    r.ok = false;
    r.failures.push_back(m);
  };
  if (!(h.lambda > 0)) fail("lambda must be > 0");
  if (!(h.mu > 0)) fail("mu must be > 0");
  if (!(h.beta > 0)) fail("beta must be > 0");
  const bool pp = h.variant == Variant::prox_point;
  const Schedule& s1 = pp ? h.omega : h.tau;
  const Schedule& s2 = pp ? h.nu : h.iota;
  if (!(s1.min() > 0) || !(s2.min() > 0)) fail("proximal schedules must stay positive");
  if (strict) {
    if (!(h.beta > 1)) fail("Assumption 2: beta must exceed 1");
    for (const auto& a : shape.activations)
      if (!a.bounds()) fail("Assumption 1: activation " + a.name() + " has no bounds");
  }
  return r;
}

inline const Matrix& v_at(const State& s, const Matrix& X, int i) {
  return i == 0 ? X : s.V[static_cast<std::size_t>(i - 1)];
}
inline const Matrix& w_at(const State& s, int i) { return s.W[static_cast<std::size_t>(i - 1)]; }

inline State init_2s(const std::vector<Matrix>& W0, const NetworkShape& shape, const Dataset& data) {
  State s;
  s.W = W0;
  auto V = forward(W0, shape, data.X);
  s.V.assign(V.begin() + 1, V.end());
  s.Lambda = Matrix::zeros(shape.q, data.n());
  return s;
}

// ---- the relaxation ----

inline Matrix layer_residual(const Activation& a, const Matrix& Win, const Matrix& Vin, const Matrix& Vout) {
  return sub(add(Vin, apply_sigma(a, matmul(Win, Vin))), Vout);
}

inline double aug_lag_2s(const State& s, const NetworkShape& shape, const Dataset& data, const Hyper& h) {
  const int N = shape.N;
  double L = 0.5 * frob_norm_sq(sub(s.V.back(), data.Y)) + 0.5 * h.lambda * weight_penalty(s.W);
  for (int i = 1; i < N; ++i)
    L += 0.5 * h.mu * frob_norm_sq(layer_residual(shape.act(i), w_at(s, i), v_at(s, data.X, i - 1), v_at(s, data.X, i)));
  const Matrix r = sub(matmul(w_at(s, N), v_at(s, data.X, N - 1)), s.V.back());
  L += inner(s.Lambda, r) + 0.5 * h.beta * frob_norm_sq(r);
  return L;
}

// ---- pure update kernels (shared by serial and pipelined executors) ----
namespace kernel {

// argmin_W lambda/2|W|^2 + beta/2|W Vp - VN + Lam/beta|^2
inline Matrix w_last(const Matrix& Vp, const Matrix& VN, const Matrix& Lam, double lambda, double beta) {
  const Matrix A = add_diag(scale(beta, matmul_nt(Vp, Vp)), lambda);
  const Matrix B = matmul_nt(lincomb(beta, VN, -1.0, Lam), Vp);
  return spd_solve_right(B, A);
}

inline Matrix w_hidden_prox_grad(const Matrix& Wold, const Matrix& Vin, const Matrix& Vout, const Activation& a,
                                 double lambda, double mu, double tau) {
  const Matrix Z = matmul(Wold, Vin);
  const Matrix R = sub(add(Vin, apply_sigma(a, Z)), Vout);
  const Matrix G = matmul_nt(hadamard(R, apply_dsigma(a, Z)), Vin);
  return lincomb(tau / (lambda + tau), Wold, -mu / (lambda + tau), G);
}

struct WHiddenProblem {
  const Matrix& Wold;
  const Matrix& Vin;
  const Matrix& Vout;
  const Activation& a;
  double lambda, mu, omega;

  double value(const Matrix& W) const {
    return 0.5 * lambda * frob_norm_sq(W) + 0.5 * mu * frob_norm_sq(layer_residual(a, W, Vin, Vout)) +
           0.5 * omega * frob_norm_sq(sub(W, Wold));
  }
  Matrix gradient(const Matrix& W) const {
    const Matrix Z = matmul(W, Vin);
    const Matrix R = sub(add(Vin, apply_sigma(a, Z)), Vout);
    Matrix g = scale(mu, matmul_nt(hadamard(R, apply_dsigma(a, Z)), Vin));
    g = axpy(lambda, W, g);
    return axpy(omega, sub(W, Wold), g);
  }
};

inline InnerResult w_hidden_prox_point(const Matrix& Wold, const Matrix& Vin, const Matrix& Vout,
                                       const Activation& a, double lambda, double mu, double omega,
                                       const InnerOptions& opt) {
  const WHiddenProblem p{Wold, Vin, Vout, a, lambda, mu, omega};
  return minimize_gd(
      Wold, [&](const Matrix& W) { return p.value(W); }, [&](const Matrix& W) { return p.gradient(W); }, opt);
}

// Vin = V_{i-1}^k, Wi = W_i^k, Wn = W_{i+1}^k, Vold = V_i^{k-1}, Vnext = V_{i+1}^{k-1}
inline Matrix v_hidden_prox_grad(const Matrix& Vin, const Matrix& Wi, const Matrix& Wn, const Matrix& Vold,
                                 const Matrix& Vnext, const Activation& ai, const Activation& an, double mu,
                                 double iota) {
  const Matrix Zn = matmul(Wn, Vold);
  const Matrix Sn = apply_sigma(an, Zn);
  Matrix a = add(add(Vin, Vnext), sub(apply_sigma(ai, matmul(Wi, Vin)), Vold));
  a = sub(a, Sn);
  const Matrix Rn = sub(add(Vold, Sn), Vnext);
  const Matrix G = matmul_tn(Wn, hadamard(Rn, apply_dsigma(an, Zn)));
  const double c = mu / (mu + iota);
  return sub(lincomb(c, a, iota / (mu + iota), Vold), scale(c, G));
}

struct VHiddenProblem {
  Matrix target;  // V_{i-1} + sigma_i(W_i V_{i-1})
  const Matrix& Wn;
  const Matrix& Vold;
  const Matrix& Vnext;
  const Activation& an;
  double mu, nu;

  double value(const Matrix& V) const {
    return 0.5 * mu * frob_norm_sq(sub(target, V)) + 0.5 * mu * frob_norm_sq(layer_residual(an, Wn, V, Vnext)) +
           0.5 * nu * frob_norm_sq(sub(V, Vold));
  }
  Matrix gradient(const Matrix& V) const {
    const Matrix Z = matmul(Wn, V);
    const Matrix R = sub(add(V, apply_sigma(an, Z)), Vnext);
    Matrix g = scale(mu, sub(V, target));
    g = axpy(mu, add(R, matmul_tn(Wn, hadamard(R, apply_dsigma(an, Z)))), g);
    return axpy(nu, sub(V, Vold), g);
  }
};

inline InnerResult v_hidden_prox_point(const Matrix& Vin, const Matrix& Wi, const Matrix& Wn, const Matrix& Vold,
                                       const Matrix& Vnext, const Activation& ai, const Activation& an, double mu,
                                       double nu, const InnerOptions& opt) {
  const VHiddenProblem p{add(Vin, apply_sigma(ai, matmul(Wi, Vin))), Wn, Vold, Vnext, an, mu, nu};
  return minimize_gd(
      Vold, [&](const Matrix& V) { return p.value(V); }, [&](const Matrix& V) { return p.gradient(V); }, opt);
}

// Vin = V_{N-2}^k, Wp = W_{N-1}^k, WN = W_N^k, VN = V_N^{k-1}, Lam = Lambda^{k-1}
inline Matrix v_penultimate(const Matrix& Vin, const Matrix& Wp, const Matrix& WN, const Matrix& VN,
                            const Matrix& Lam, const Activation& a, double mu, double beta) {
  const Matrix A = add_diag(scale(beta, matmul_tn(WN, WN)), mu);
  const Matrix s = add(apply_sigma(a, matmul(Wp, Vin)), Vin);
  const Matrix rhs = add(scale(mu, s), matmul_tn(WN, lincomb(beta, VN, -1.0, Lam)));
  return spd_solve(A, rhs);
}

inline Matrix v_last(const Matrix& Y, const Matrix& WN, const Matrix& Vp, const Matrix& Lam, double beta) {
  return scale(1.0 / (1.0 + beta), add(axpy(beta, matmul(WN, Vp), Y), Lam));
}

inline Matrix dual(const Matrix& Lam, const Matrix& WN, const Matrix& Vp, const Matrix& VN, double beta) {
  return axpy(beta, sub(matmul(WN, Vp), VN), Lam);
}

}  // namespace kernel

// ---- state-level updates; k-1 schedules are read at s.k ----

inline Matrix update_wN(const State& s, const NetworkShape& shape, const Dataset& data, const Hyper& h) {
  return kernel::w_last(v_at(s, data.X, shape.N - 1), s.V.back(), s.Lambda, h.lambda, h.beta);
}

inline Matrix update_wi_prox_grad(const State& s, int i, const NetworkShape& shape, const Dataset& data,
                                  const Hyper& h) {
  return kernel::w_hidden_prox_grad(w_at(s, i), v_at(s, data.X, i - 1), v_at(s, data.X, i), shape.act(i),
                                    h.lambda, h.mu, h.tau.at(s.k));
}

inline Matrix update_wi_prox_point(const State& s, int i, const NetworkShape& shape, const Dataset& data,
                                   const Hyper& h) {
  return kernel::w_hidden_prox_point(w_at(s, i), v_at(s, data.X, i - 1), v_at(s, data.X, i), shape.act(i),
                                     h.lambda, h.mu, h.omega.at(s.k), h.inner)
      .x;
}

// The V updates read the current (partially updated) state: W's already at k,
// V_{i-1} at k, V_i and V_{i+1} at k-1.
inline Matrix update_vi_prox_grad(const State& s, int i, const NetworkShape& shape, const Dataset& data,
                                  const Hyper& h) {
  return kernel::v_hidden_prox_grad(v_at(s, data.X, i - 1), w_at(s, i), w_at(s, i + 1), v_at(s, data.X, i),
                                    v_at(s, data.X, i + 1), shape.act(i), shape.act(i + 1), h.mu, h.iota.at(s.k));
}

inline Matrix update_vi_prox_point(const State& s, int i, const NetworkShape& shape, const Dataset& data,
                                   const Hyper& h) {
  return kernel::v_hidden_prox_point(v_at(s, data.X, i - 1), w_at(s, i), w_at(s, i + 1), v_at(s, data.X, i),
                                     v_at(s, data.X, i + 1), shape.act(i), shape.act(i + 1), h.mu, h.nu.at(s.k),
                                     h.inner)
      .x;
}

inline Matrix update_vN1(const State& s, const NetworkShape& shape, const Dataset& data, const Hyper& h) {
  const int N = shape.N;
  return kernel::v_penultimate(v_at(s, data.X, N - 2), w_at(s, N - 1), w_at(s, N), s.V.back(), s.Lambda,
                               shape.act(N - 1), h.mu, h.beta);
}

inline Matrix update_vN(const State& s, const NetworkShape& shape, const Dataset& data, const Hyper& h) {
  return kernel::v_last(data.Y, w_at(s, shape.N), v_at(s, data.X, shape.N - 1), s.Lambda, h.beta);
}

inline Matrix update_lambda(const State& s, const NetworkShape& shape, const Dataset& data, const Hyper& h) {
  return kernel::dual(s.Lambda, w_at(s, shape.N), v_at(s, data.X, shape.N - 1), s.V.back(), h.beta);
}

// One cycle in place: W_N, W_{N-1}..W_1, V_1..V_{N-2}, V_{N-1}, V_N, Lambda.
inline void cycle_2s(State& s, const NetworkShape& shape, const Dataset& data, const Hyper& h) {
  const int N = shape.N;
  const bool pp = h.variant == Variant::prox_point;
  s.W[static_cast<std::size_t>(N - 1)] = update_wN(s, shape, data, h);
  for (int i = N - 1; i >= 1; --i)
    s.W[static_cast<std::size_t>(i - 1)] =
        pp ? update_wi_prox_point(s, i, shape, data, h) : update_wi_prox_grad(s, i, shape, data, h);
  for (int i = 1; i <= N - 2; ++i)
    s.V[static_cast<std::size_t>(i - 1)] =
        pp ? update_vi_prox_point(s, i, shape, data, h) : update_vi_prox_grad(s, i, shape, data, h);
  s.V[static_cast<std::size_t>(N - 2)] = update_vN1(s, shape, data, h);
  s.V[static_cast<std::size_t>(N - 1)] = update_vN(s, shape, data, h);
  s.Lambda = update_lambda(s, shape, data, h);
  s.k += 1;
}

// ---- derivatives and stationarity ----

struct Grad {
  std::vector<Matrix> W, V;
  Matrix Lambda;
  double norm() const {
    double t = frob_norm_sq(Lambda);
    for (const auto& m : W) t += frob_norm_sq(m);
    for (const auto& m : V) t += frob_norm_sq(m);
    return std::sqrt(t);
  }
};

inline Grad grad_L2s(const State& s, const NetworkShape& shape, const Dataset& data, const Hyper& h) {
  const int N = shape.N;
  const Matrix& X = data.X;
  Grad g;
  g.W.resize(static_cast<std::size_t>(N));
  g.V.resize(static_cast<std::size_t>(N));
  // r_i = V_{i-1} + sigma(W_i V_{i-1}) - V_i and its sigma' factor
  std::vector<Matrix> R(static_cast<std::size_t>(N)), D(static_cast<std::size_t>(N));
  for (int i = 1; i < N; ++i) {
    const Matrix Z = matmul(w_at(s, i), v_at(s, X, i - 1));
    R[static_cast<std::size_t>(i)] = sub(add(v_at(s, X, i - 1), apply_sigma(shape.act(i), Z)), v_at(s, X, i));
    D[static_cast<std::size_t>(i)] = hadamard(R[static_cast<std::size_t>(i)], apply_dsigma(shape.act(i), Z));
  }
  const Matrix& Vp = v_at(s, X, N - 1);
  const Matrix P = sub(matmul(w_at(s, N), Vp), s.V.back());  // W_N V_{N-1} - V_N
  g.W[static_cast<std::size_t>(N - 1)] =
      add(scale(h.lambda, w_at(s, N)), matmul_nt(axpy(h.beta, P, s.Lambda), Vp));
  for (int i = 1; i < N; ++i)
    g.W[static_cast<std::size_t>(i - 1)] =
        axpy(h.mu, matmul_nt(D[static_cast<std::size_t>(i)], v_at(s, X, i - 1)), scale(h.lambda, w_at(s, i)));
  for (int i = 1; i <= N - 2; ++i) {
    const auto u = static_cast<std::size_t>(i);
    Matrix gi = scale(-h.mu, R[u]);
    gi = axpy(h.mu, add(R[u + 1], matmul_tn(w_at(s, i + 1), D[u + 1])), gi);
    g.V[u - 1] = gi;
  }
  g.V[static_cast<std::size_t>(N - 2)] =
      add(scale(-h.mu, R[static_cast<std::size_t>(N - 1)]), matmul_tn(w_at(s, N), axpy(h.beta, P, s.Lambda)));
  g.V[static_cast<std::size_t>(N - 1)] = sub(sub(s.V.back(), data.Y), axpy(h.beta, P, s.Lambda));
  g.Lambda = P;
  return g;
}

// The six residual blocks of the stationarity system, flattened in order.
inline std::vector<Matrix> kkt_components_2s(const State& s, const NetworkShape& shape, const Dataset& data,
                                             const Hyper& h) {
  const int N = shape.N;
  const Matrix& X = data.X;
  std::vector<Matrix> out;
  const Matrix& Vp = v_at(s, X, N - 1);
  out.push_back(add(scale(h.lambda, w_at(s, N)), matmul_nt(s.Lambda, Vp)));
  std::vector<Matrix> R(static_cast<std::size_t>(N)), D(static_cast<std::size_t>(N));
  for (int i = 1; i < N; ++i) {
    const Matrix Z = matmul(w_at(s, i), v_at(s, X, i - 1));
    R[static_cast<std::size_t>(i)] = sub(add(v_at(s, X, i - 1), apply_sigma(shape.act(i), Z)), v_at(s, X, i));
    D[static_cast<std::size_t>(i)] = hadamard(R[static_cast<std::size_t>(i)], apply_dsigma(shape.act(i), Z));
    out.push_back(axpy(h.mu, matmul_nt(D[static_cast<std::size_t>(i)], v_at(s, X, i - 1)), scale(h.lambda, w_at(s, i))));
  }
  for (int i = 1; i <= N - 2; ++i) {
    const auto u = static_cast<std::size_t>(i);
    out.push_back(add(scale(-h.mu, R[u]), scale(h.mu, add(matmul_tn(w_at(s, i + 1), D[u + 1]), R[u + 1]))));
  }
  out.push_back(add(scale(-h.mu, R[static_cast<std::size_t>(N - 1)]), matmul_tn(w_at(s, N), s.Lambda)));
  out.push_back(sub(sub(s.V.back(), data.Y), s.Lambda));
  out.push_back(sub(matmul(w_at(s, N), Vp), s.V.back()));
  return out;
}

inline double kkt_residual_2s(const State& s, const NetworkShape& shape, const Dataset& data, const Hyper& h) {
  double t = 0.0;
  for (const auto& m : kkt_components_2s(s, shape, data, h)) t += frob_norm_sq(m);
  return std::sqrt(t);
}

inline double state_diff_norm(const State& a, const State& b) {
  double t = frob_norm_sq(sub(a.Lambda, b.Lambda));
  for (std::size_t i = 0; i < a.W.size(); ++i) t += frob_norm_sq(sub(a.W[i], b.W[i]));
  for (std::size_t i = 0; i < a.V.size(); ++i) t += frob_norm_sq(sub(a.V[i], b.V[i]));
  return std::sqrt(t);
}

inline bool state_finite(const State& s) {
  if (!all_finite(s.Lambda)) return false;
  for (const auto& m : s.W)
    if (!all_finite(m)) return false;
  for (const auto& m : s.V)
    if (!all_finite(m)) return false;
  return true;
}

inline std::size_t resident_entries(const State& s) {
  std::size_t t = s.Lambda.size();
  for (const auto& m : s.W) t += m.size();
  for (const auto& m : s.V) t += m.size();
  return t;
}

struct StepOptions {
  bool diagnostics = true;
};

// One serial cycle plus its trace row. Throws NumericalError on non-finite output.
inline std::pair<State, TraceRecord> step_serial_2s(const State& prev, const NetworkShape& shape,
                                                    const Dataset& data, const Hyper& h,
                                                    const StepOptions& opt = {}) {
  State s = prev;
  const auto ops0 = op_counter().ops;
  const auto t0 = std::chrono::steady_clock::now();
  cycle_2s(s, shape, data, h);
  const auto t1 = std::chrono::steady_clock::now();
  TraceRecord r;
  r.k = s.k;
  r.op_count = op_counter().ops - ops0;
  r.wall_ns = std::chrono::duration_cast<std::chrono::nanoseconds>(t1 - t0).count();
  if (!state_finite(s))
    throw NumericalError("non-finite iterate at k=" + std::to_string(s.k) + "; last good k=" +
                         std::to_string(prev.k));
  r.objective = objective(s.W, shape, data.X, data.Y, h.lambda);
  r.delta_x = state_diff_norm(s, prev);
  if (opt.diagnostics) {
    r.aug_lag = aug_lag_2s(s, shape, data, h);
    r.b1_margin = aug_lag_2s(prev, shape, data, h) - r.aug_lag;
    r.grad_lag = grad_L2s(s, shape, data, h).norm();
    r.kkt = kkt_residual_2s(s, shape, data, h);
    r.b2_ratio = r.delta_x > 0 ? r.grad_lag / r.delta_x : (r.grad_lag > 0 ? INFINITY : 0.0);
  }
  return {std::move(s), r};
}

}  // namespace resadmm::admm2
