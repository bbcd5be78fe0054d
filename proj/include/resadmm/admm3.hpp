#pragma once

#include <chrono>
#include <cmath>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "resadmm/inner_solver.hpp"
#include "resadmm/linalg.hpp"
#include "resadmm/model.hpp"
#include "resadmm/trace.hpp"

namespace resadmm::admm3 {

struct Hyper {
  double lambda = 1e-4;
  double mu = 1.0;
  std::vector<double> beta;  // beta_1..beta_N
  Variant variant = Variant::prox_grad;
  Schedule omega = Schedule::constant(1.0);  // prox-point U
  Schedule tau = Schedule::constant(10.0);   // prox-grad U
  std::vector<double> vmax;                  // V_0^max..V_{N-1}^max
  std::vector<double> eps_hat;               // optional overrides, default sqrt(Delta)/64
  std::vector<double> eps;                   // optional overrides, default omega_min/8
  double u_tol = 1e-10;

  static Hyper uniform(int N, double lambda, double mu, double beta, Variant v) {
    Hyper h;
    h.lambda = lambda;
    h.mu = mu;
    h.beta.assign(static_cast<std::size_t>(N), beta);
    h.variant = v;
    return h;
  }
  double b(int i) const { return beta.at(static_cast<std::size_t>(i - 1)); }
};

struct State {
  std::vector<Matrix> W;       // W_1..W_N
  std::vector<Matrix> U;       // U_1..U_{N-1}
  std::vector<Matrix> V;       // V_1..V_N
  std::vector<Matrix> Lambda;  // Lambda_1..Lambda_N
  std::vector<Matrix> U_lag;   // U^{k-1}
  std::vector<Matrix> V_lag;   // V_1^{k-1}..V_{N-1}^{k-1}
  long k = 0;
};

inline const Matrix& v_at(const State& s, const Matrix& X, int i) {
  return i == 0 ? X : s.V[static_cast<std::size_t>(i - 1)];
}
inline const Matrix& w_at(const State& s, int i) { return s.W[static_cast<std::size_t>(i - 1)]; }
inline const Matrix& u_at(const State& s, int i) { return s.U[static_cast<std::size_t>(i - 1)]; }
inline const Matrix& l_at(const State& s, int i) { return s.Lambda[static_cast<std::size_t>(i - 1)]; }

// ---- parameter validation ----

struct LayerReport {
  double S = 0, delta = 0, eps_hat = 0, eps = 0, omega_min = 0, omega_max = 0, theta = 0, eta = 0;
};

struct ValidationReport {
  bool ok = true;
  std::vector<std::string> failures;
  std::vector<LayerReport> layers;  // i = 1..N-1
  bool assumption7 = true, assumption8 = true;

  // A constant omega strictly inside every layer's admissible interval, if one exists.
  std::optional<double> common_omega() const {
    double lo = 0, hi = INFINITY;
    for (const auto& l : layers) {
      lo = std::max(lo, l.omega_min);
      hi = std::min(hi, l.omega_max);
    }
    if (layers.empty() || !(hi > lo)) return std::nullopt;
    return 0.5 * (lo + hi);
  }
};

inline ValidationReport validate_3s_params(const Hyper& h, const NetworkShape& shape, bool strict,
                                           std::optional<double> x_frob = std::nullopt) {
  ValidationReport r;
  const int N = shape.N;
  auto fail = [&](const std::string& m) {
    r.ok = false;
    r.failures.push_back(m);
  };
  if (!(h.lambda > 0)) fail("lambda must be > 0");
  if (!(h.mu > 0)) fail("mu must be > 0");
  if (h.beta.size() != static_cast<std::size_t>(N)) {
    fail("beta must have N entries");
    return r;
  }
  for (double b : h.beta)
    if (!(b > 0)) fail("beta entries must be > 0");
  const Schedule& sch = h.variant == Variant::prox_point ? h.omega : h.tau;
  if (!(sch.min() > 0)) fail("proximal schedule must stay positive");
  if (!strict) return r;

  for (const auto& a : shape.activations)
    if (!a.bounds()) {
      fail("Assumption 1: activation " + a.name() + " has no bounds");
      return r;
    }
  if (h.vmax.size() != static_cast<std::size_t>(N)) {
    fail("strict mode needs vmax with N entries (V_0..V_{N-1})");
    return r;
  }
  if (x_frob && !(h.vmax[0] > *x_frob)) {
    r.assumption7 = false;
    fail("Assumption 7: vmax[0] must exceed |X|_F");
  }
  if (!(h.b(N) > 1)) {
    r.assumption7 = false;
    fail("Assumption 7: beta_N must exceed 1");
  }
  for (int i = 1; i < N; ++i) {
    const ActBounds p = *shape.act(i).bounds();
    LayerReport L;
    const double bi = h.b(i);
    L.S = p.psi0 * p.psi2 + p.psi1 * p.psi1 + h.vmax[static_cast<std::size_t>(i)] * p.psi2 +
          h.vmax[static_cast<std::size_t>(i - 1)] * p.psi2;
    const double lb = std::max(32.0 * (1.0 + std::sqrt(2.0)) * h.mu * L.S, 16.0 * h.mu * p.psi1 * p.psi1);
    std::ostringstream tag;
    tag << " (layer " << i << ")";
    if (!(bi > lb)) {
      r.assumption7 = false;
      std::ostringstream m;
      m << "Assumption 7: beta_" << i << "=" << bi << " must exceed " << lb;
      fail(m.str());
    }
    const double A = bi / 4.0 - 8.0 * h.mu * L.S;
    L.delta = A * A - 128.0 * h.mu * h.mu * L.S * L.S;
    if (!(L.delta > 0) || !(A > 0)) {
      r.assumption8 = false;
      fail("Assumption 8: Delta must be positive" + tag.str());
      r.layers.push_back(L);
      continue;
    }
    const double sd = std::sqrt(L.delta);
    L.eps_hat = i - 1 < static_cast<int>(h.eps_hat.size()) ? h.eps_hat[static_cast<std::size_t>(i - 1)] : sd / 64.0;
    if (!(L.eps_hat > 0 && L.eps_hat < sd / 32.0)) {
      r.assumption8 = false;
      fail("Assumption 8: eps_hat outside (0, sqrt(Delta)/32)" + tag.str());
    }
    L.omega_min = (A - sd) / 16.0 + L.eps_hat;
    L.eps = i - 1 < static_cast<int>(h.eps.size()) ? h.eps[static_cast<std::size_t>(i - 1)] : L.omega_min / 8.0;
    if (!(L.eps > 0 && L.eps < L.omega_min / 4.0)) {
      r.assumption8 = false;
      fail("Assumption 8: eps outside (0, omega_min/4)" + tag.str());
    }
    const double rad = L.omega_min * L.omega_min + bi * L.omega_min / 16.0 - bi * L.eps / 4.0;
    L.omega_max = std::min((A + sd) / 16.0 - L.eps_hat, rad > 0 ? std::sqrt(rad) : 0.0);
    if (!(L.omega_min > 0)) {
      r.assumption8 = false;
      fail("Assumption 8: omega_min must be positive" + tag.str());
    }
    if (!(L.omega_max > L.omega_min)) {
      r.assumption8 = false;
      fail("Assumption 8: omega_max must exceed omega_min" + tag.str());
    }
    if (h.variant == Variant::prox_point) {
      if (!h.omega.non_decreasing()) {
        r.assumption8 = false;
        fail("Assumption 8: omega schedule must be non-decreasing");
      }
      if (!(h.omega.min() > L.omega_min && h.omega.max() < L.omega_max)) {
        r.assumption8 = false;
        std::ostringstream m;
        m << "Assumption 8: omega range [" << h.omega.min() << "," << h.omega.max() << "] not inside ("
          << L.omega_min << "," << L.omega_max << ")" << tag.str();
        fail(m.str());
      }
    }
    L.theta = 4.0 * L.omega_min * L.omega_min / bi + L.omega_min / 4.0;
    L.eta = 4.0 * h.mu * h.mu * p.psi1 * p.psi1 / bi + h.mu / 4.0;
    r.layers.push_back(L);
  }
  return r;
}

// ---- state ----

inline State init_3s(const std::vector<Matrix>& W0, const NetworkShape& shape, const Dataset& data) {
  State s;
  s.W = W0;
  auto V = forward(W0, shape, data.X);
  s.V.assign(V.begin() + 1, V.end());
  for (int i = 1; i < shape.N; ++i) {
    s.U.push_back(matmul(w_at(s, i), v_at(s, data.X, i - 1)));
    s.Lambda.push_back(Matrix::zeros(shape.d, data.n()));
  }
  s.Lambda.push_back(Matrix::zeros(shape.q, data.n()));
  s.U_lag = s.U;
  s.V_lag.assign(s.V.begin(), s.V.end() - 1);
  return s;
}

inline double aug_lag_3s(const State& s, const NetworkShape& shape, const Dataset& data, const Hyper& h) {
  const int N = shape.N;
  double L = 0.5 * frob_norm_sq(sub(s.V.back(), data.Y)) + 0.5 * h.lambda * weight_penalty(s.W);
  for (int i = 1; i < N; ++i) {
    const Matrix c = sub(add(v_at(s, data.X, i - 1), apply_sigma(shape.act(i), u_at(s, i))), v_at(s, data.X, i));
    L += 0.5 * h.mu * frob_norm_sq(c);
    const Matrix r = sub(matmul(w_at(s, i), v_at(s, data.X, i - 1)), u_at(s, i));
    L += inner(l_at(s, i), r) + 0.5 * h.b(i) * frob_norm_sq(r);
  }
  const Matrix r = sub(matmul(w_at(s, N), v_at(s, data.X, N - 1)), s.V.back());
  L += inner(l_at(s, N), r) + 0.5 * h.b(N) * frob_norm_sq(r);
  return L;
}

// L3s(X) + sum theta_i |U_i - U_i'|^2 + sum eta_i |V_i - V_i'|^2 with primes = lagged iterates
inline double aux_function(const State& s, const NetworkShape& shape, const Dataset& data, const Hyper& h,
                           const std::vector<double>& theta, const std::vector<double>& eta) {
  double L = aug_lag_3s(s, shape, data, h);
  for (int i = 1; i < shape.N; ++i) {
    const auto u = static_cast<std::size_t>(i - 1);
    L += theta.at(u) * frob_norm_sq(sub(s.U[u], s.U_lag[u])) + eta.at(u) * frob_norm_sq(sub(s.V[u], s.V_lag[u]));
  }
  return L;
}

// ---- pure update kernels ----
namespace kernel {

// argmin_W lambda/2|W|^2 + <Lam, W Vin - T> + beta/2 |W Vin - T|^2
inline Matrix w_update(const Matrix& Vin, const Matrix& T, const Matrix& Lam, double lambda, double beta) {
  const Matrix A = add_diag(scale(beta, matmul_nt(Vin, Vin)), lambda);
  const Matrix B = matmul_nt(lincomb(beta, T, -1.0, Lam), Vin);
  return spd_solve_right(B, A);
}

// Vin = V_{i-1}^k, Vold = V_i^{k-1}, Z = W_i^k V_{i-1}^k
inline Matrix u_prox_grad(const Matrix& Vin, const Matrix& Uold, const Matrix& Vold, const Matrix& Z,
                          const Matrix& Lam, const Activation& a, double mu, double beta, double tau) {
  const Matrix R = sub(add(Vin, apply_sigma(a, Uold)), Vold);
  const Matrix G = hadamard(R, apply_dsigma(a, Uold));
  const double c = 1.0 / (tau + beta);
  Matrix out = lincomb(-mu * c, G, tau * c, Uold);
  out = axpy(beta * c, Z, out);
  return axpy(c, Lam, out);
}

struct ScalarU {
  double a, v, c, u0, mu, beta, omega;
  const Activation* act;
  double value(double u) const {
    const double r = a + act->sigma(u) - v;
    return 0.5 * mu * r * r + 0.5 * beta * (u - c) * (u - c) + 0.5 * omega * (u - u0) * (u - u0);
  }
  double deriv(double u) const {
    return mu * (a + act->sigma(u) - v) * act->dsigma(u) + beta * (u - c) + omega * (u - u0);
  }
  double deriv2(double u) const {
    const double s1 = act->dsigma(u);
    return mu * (s1 * s1 + (a + act->sigma(u) - v) * act->ddsigma(u)) + beta + omega;
  }
};

inline double solve_scalar_u(const ScalarU& p, double tol) {
  const double c0 = (p.beta * p.c + p.omega * p.u0) / (p.beta + p.omega);
  const auto bnd = p.act->bounds();
  const double psi0 = bnd ? bnd->psi0 : 1.0, psi1 = bnd ? bnd->psi1 : 1.0;
  double R = (p.mu * (std::abs(p.a - p.v) + psi0) * psi1) / (p.beta + p.omega) + 1e-12 * (1.0 + std::abs(c0));
  int doublings = 0;
  while (!(p.deriv(c0 - R) <= 0 && p.deriv(c0 + R) >= 0)) {
    R *= 2.0;
    if (++doublings > 60) throw NumericalError("U update: bracket not found after 60 doublings");
  }
  const auto res = minimize_1d_bracketed([&](double u) { return p.value(u); }, [&](double u) { return p.deriv(u); },
                                         [&](double u) { return p.deriv2(u); }, c0 - R, c0 + R, tol);
  // never worse than the warm start
  return p.value(res.x) <= p.value(p.u0) ? res.x : p.u0;
}

inline Matrix u_prox_point(const Matrix& Vin, const Matrix& Uold, const Matrix& Vold, const Matrix& Z,
                           const Matrix& Lam, const Activation& a, double mu, double beta, double omega,
                           double tol) {
  Matrix out(Uold.rows(), Uold.cols());
  for (std::size_t e = 0; e < out.size(); ++e) {
    const ScalarU p{Vin[e], Vold[e], Z[e] + Lam[e] / beta, Uold[e], mu, beta, omega, &a};
    out[e] = solve_scalar_u(p, tol);
  }
  count_ops(30 * out.size());
  return out;
}

// Vin = V_{i-1}^k, Ui = U_i^k, Un = U_{i+1}^{k-1}, Vnext = V_{i+1}^{k-1}, Wn = W_{i+1}^k, Ln = Lambda_{i+1}^{k-1}
inline Matrix v_hidden(const Matrix& Vin, const Matrix& Ui, const Matrix& Un, const Matrix& Vnext, const Matrix& Wn,
                       const Matrix& Ln, const Activation& ai, const Activation& an, double mu, double beta_n) {
  const Matrix A = add_diag(scale(beta_n, matmul_tn(Wn, Wn)), 2.0 * mu);
  Matrix s = add(Vin, apply_sigma(ai, Ui));
  s = add(sub(s, apply_sigma(an, Un)), Vnext);
  const Matrix rhs = add(scale(mu, s), matmul_tn(Wn, lincomb(beta_n, Un, -1.0, Ln)));
  return spd_solve(A, rhs);
}

// Vin = V_{N-2}^k, Up = U_{N-1}^k, WN = W_N^k, VN = V_N^{k-1}, LN = Lambda_N^{k-1}
inline Matrix v_penultimate(const Matrix& Vin, const Matrix& Up, const Matrix& WN, const Matrix& VN, const Matrix& LN,
                            const Activation& a, double mu, double beta_N) {
  const Matrix A = add_diag(scale(beta_N, matmul_tn(WN, WN)), mu);
  const Matrix s = add(apply_sigma(a, Up), Vin);
  const Matrix rhs = add(scale(mu, s), matmul_tn(WN, lincomb(beta_N, VN, -1.0, LN)));
  return spd_solve(A, rhs);
}

inline Matrix v_last(const Matrix& Y, const Matrix& WN, const Matrix& Vp, const Matrix& LN, double beta_N) {
  return scale(1.0 / (1.0 + beta_N), add(axpy(beta_N, matmul(WN, Vp), Y), LN));
}

inline Matrix dual_hidden(const Matrix& Lam, const Matrix& Wi, const Matrix& Vin, const Matrix& Ui, double beta) {
  return axpy(beta, sub(matmul(Wi, Vin), Ui), Lam);
}

inline Matrix dual_last(const Matrix& Lam, const Matrix& WN, const Matrix& Vp, const Matrix& VN, double beta) {
  return axpy(beta, sub(matmul(WN, Vp), VN), Lam);
}

}  // namespace kernel

// ---- state-level updates; schedules read at s.k ----

inline Matrix update_wN_3s(const State& s, const NetworkShape& shape, const Dataset& data, const Hyper& h) {
  const int N = shape.N;
  return kernel::w_update(v_at(s, data.X, N - 1), s.V.back(), l_at(s, N), h.lambda, h.b(N));
}

inline Matrix update_wi_3s(const State& s, int i, const NetworkShape&, const Dataset& data, const Hyper& h) {
  return kernel::w_update(v_at(s, data.X, i - 1), u_at(s, i), l_at(s, i), h.lambda, h.b(i));
}

inline Matrix update_ui_prox_grad(const State& s, int i, const NetworkShape& shape, const Dataset& data,
                                  const Hyper& h) {
  const Matrix& Vin = v_at(s, data.X, i - 1);
  return kernel::u_prox_grad(Vin, u_at(s, i), v_at(s, data.X, i), matmul(w_at(s, i), Vin), l_at(s, i),
                             shape.act(i), h.mu, h.b(i), h.tau.at(s.k));
}

inline Matrix update_ui_prox_point(const State& s, int i, const NetworkShape& shape, const Dataset& data,
                                   const Hyper& h) {
  const Matrix& Vin = v_at(s, data.X, i - 1);
  return kernel::u_prox_point(Vin, u_at(s, i), v_at(s, data.X, i), matmul(w_at(s, i), Vin), l_at(s, i),
                              shape.act(i), h.mu, h.b(i), h.omega.at(s.k), h.u_tol);
}

inline Matrix update_vi_3s(const State& s, int i, const NetworkShape& shape, const Dataset& data, const Hyper& h) {
  return kernel::v_hidden(v_at(s, data.X, i - 1), u_at(s, i), u_at(s, i + 1), v_at(s, data.X, i + 1),
                          w_at(s, i + 1), l_at(s, i + 1), shape.act(i), shape.act(i + 1), h.mu, h.b(i + 1));
}

inline Matrix update_vN1_3s(const State& s, const NetworkShape& shape, const Dataset& data, const Hyper& h) {
  const int N = shape.N;
  return kernel::v_penultimate(v_at(s, data.X, N - 2), u_at(s, N - 1), w_at(s, N), s.V.back(), l_at(s, N),
                               shape.act(N - 1), h.mu, h.b(N));
}

inline Matrix update_vN_3s(const State& s, const NetworkShape& shape, const Dataset& data, const Hyper& h) {
  const int N = shape.N;
  return kernel::v_last(data.Y, w_at(s, N), v_at(s, data.X, N - 1), l_at(s, N), h.b(N));
}

inline Matrix update_lambda_i(const State& s, int i, const NetworkShape&, const Dataset& data, const Hyper& h) {
  return kernel::dual_hidden(l_at(s, i), w_at(s, i), v_at(s, data.X, i - 1), u_at(s, i), h.b(i));
}

inline Matrix update_lambda_N(const State& s, const NetworkShape& shape, const Dataset& data, const Hyper& h) {
  const int N = shape.N;
  return kernel::dual_last(l_at(s, N), w_at(s, N), v_at(s, data.X, N - 1), s.V.back(), h.b(N));
}

inline void cycle_3s(State& s, const NetworkShape& shape, const Dataset& data, const Hyper& h) {
  const int N = shape.N;
  const bool pp = h.variant == Variant::prox_point;
  s.U_lag = s.U;
  s.V_lag.assign(s.V.begin(), s.V.end() - 1);
  auto W = [&](int i) -> Matrix& { return s.W[static_cast<std::size_t>(i - 1)]; };
  auto U = [&](int i) -> Matrix& { return s.U[static_cast<std::size_t>(i - 1)]; };
  auto V = [&](int i) -> Matrix& { return s.V[static_cast<std::size_t>(i - 1)]; };
  W(N) = update_wN_3s(s, shape, data, h);
  for (int i = N - 1; i >= 1; --i) W(i) = update_wi_3s(s, i, shape, data, h);
  for (int i = 1; i <= N - 2; ++i) {
    U(i) = pp ? update_ui_prox_point(s, i, shape, data, h) : update_ui_prox_grad(s, i, shape, data, h);
    V(i) = update_vi_3s(s, i, shape, data, h);
  }
  U(N - 1) = pp ? update_ui_prox_point(s, N - 1, shape, data, h) : update_ui_prox_grad(s, N - 1, shape, data, h);
  V(N - 1) = update_vN1_3s(s, shape, data, h);
  V(N) = update_vN_3s(s, shape, data, h);
  for (int i = 1; i < N; ++i) s.Lambda[static_cast<std::size_t>(i - 1)] = update_lambda_i(s, i, shape, data, h);
  s.Lambda.back() = update_lambda_N(s, shape, data, h);
  s.k += 1;
}

// ---- derivatives and stationarity ----

struct Grad {
  std::vector<Matrix> W, U, V, Lambda;
  double norm() const {
    double t = 0;
    for (const auto* g : {&W, &U, &V, &Lambda})
      for (const auto& m : *g) t += frob_norm_sq(m);
    return std::sqrt(t);
  }
};

inline Grad grad_L3s(const State& s, const NetworkShape& shape, const Dataset& data, const Hyper& h) {
  const int N = shape.N;
  const Matrix& X = data.X;
  Grad g;
  // P_i = W_i V_{i-1} - U_i (i<N), P_N = W_N V_{N-1} - V_N; M_i = Lambda_i + beta_i P_i
  std::vector<Matrix> M(static_cast<std::size_t>(N + 1)), C(static_cast<std::size_t>(N));
  for (int i = 1; i <= N; ++i) {
    const Matrix& T = i < N ? u_at(s, i) : s.V.back();
    M[static_cast<std::size_t>(i)] = axpy(h.b(i), sub(matmul(w_at(s, i), v_at(s, X, i - 1)), T), l_at(s, i));
    g.W.push_back(add(scale(h.lambda, w_at(s, i)), matmul_nt(M[static_cast<std::size_t>(i)], v_at(s, X, i - 1))));
  }
  for (int i = 1; i < N; ++i)  // C_i = V_{i-1} + sigma(U_i) - V_i
    C[static_cast<std::size_t>(i)] = sub(add(v_at(s, X, i - 1), apply_sigma(shape.act(i), u_at(s, i))), v_at(s, X, i));
  for (int i = 1; i < N; ++i) {
    const auto u = static_cast<std::size_t>(i);
    g.U.push_back(sub(scale(h.mu, hadamard(C[u], apply_dsigma(shape.act(i), u_at(s, i)))), M[u]));
  }
  for (int i = 1; i <= N - 2; ++i) {
    const auto u = static_cast<std::size_t>(i);
    g.V.push_back(add(scale(h.mu, sub(C[u + 1], C[u])), matmul_tn(w_at(s, i + 1), M[u + 1])));
  }
  g.V.push_back(add(scale(-h.mu, C[static_cast<std::size_t>(N - 1)]), matmul_tn(w_at(s, N), M[static_cast<std::size_t>(N)])));
  g.V.push_back(sub(sub(s.V.back(), data.Y), M[static_cast<std::size_t>(N)]));
  for (int i = 1; i <= N; ++i) {
    const Matrix& T = i < N ? u_at(s, i) : s.V.back();
    g.Lambda.push_back(sub(matmul(w_at(s, i), v_at(s, X, i - 1)), T));
  }
  return g;
}

// Gradient of the auxiliary function with respect to X' (U', V' blocks appended).
inline double grad_aux_norm(const State& s, const NetworkShape& shape, const Dataset& data, const Hyper& h,
                            const std::vector<double>& theta, const std::vector<double>& eta) {
  Grad g = grad_L3s(s, shape, data, h);
  double extra = 0;
  for (int i = 1; i < shape.N; ++i) {
    const auto u = static_cast<std::size_t>(i - 1);
    const Matrix dU = scale(2 * theta[u], sub(s.U[u], s.U_lag[u]));
    const Matrix dV = scale(2 * eta[u], sub(s.V[u], s.V_lag[u]));
    g.U[u] = add(g.U[u], dU);
    g.V[u] = add(g.V[u], dV);
    extra += frob_norm_sq(dU) + frob_norm_sq(dV);
  }
  const double n = g.norm();
  return std::sqrt(n * n + extra);
}

inline std::vector<Matrix> kkt_components_3s(const State& s, const NetworkShape& shape, const Dataset& data,
                                             const Hyper& h) {
  const int N = shape.N;
  const Matrix& X = data.X;
  std::vector<Matrix> out;
  for (int i = 1; i < N; ++i) out.push_back(sub(matmul(w_at(s, i), v_at(s, X, i - 1)), u_at(s, i)));
  out.push_back(sub(s.V.back(), matmul(w_at(s, N), v_at(s, X, N - 1))));
  out.push_back(add(scale(h.lambda, w_at(s, N)), matmul_nt(l_at(s, N), v_at(s, X, N - 1))));
  for (int i = 1; i < N; ++i) out.push_back(add(scale(h.lambda, w_at(s, i)), matmul_nt(l_at(s, i), v_at(s, X, i - 1))));
  std::vector<Matrix> C(static_cast<std::size_t>(N));
  for (int i = 1; i < N; ++i)
    C[static_cast<std::size_t>(i)] = sub(add(v_at(s, X, i - 1), apply_sigma(shape.act(i), u_at(s, i))), v_at(s, X, i));
  for (int i = 1; i < N; ++i)
    out.push_back(sub(scale(h.mu, hadamard(C[static_cast<std::size_t>(i)], apply_dsigma(shape.act(i), u_at(s, i)))),
                      l_at(s, i)));
  for (int i = 1; i <= N - 2; ++i) {
    const auto u = static_cast<std::size_t>(i);
    out.push_back(add(scale(h.mu, sub(C[u + 1], C[u])), matmul_tn(w_at(s, i + 1), l_at(s, i + 1))));
  }
  out.push_back(add(scale(-h.mu, C[static_cast<std::size_t>(N - 1)]), matmul_tn(w_at(s, N), l_at(s, N))));
  out.push_back(sub(sub(s.V.back(), data.Y), l_at(s, N)));
  return out;
}

inline double kkt_residual_3s(const State& s, const NetworkShape& shape, const Dataset& data, const Hyper& h) {
  double t = 0;
  for (const auto& m : kkt_components_3s(s, shape, data, h)) t += frob_norm_sq(m);
  return std::sqrt(t);
}

inline double block_diff_sq(const std::vector<Matrix>& a, const std::vector<Matrix>& b) {
  double t = 0;
  for (std::size_t i = 0; i < a.size(); ++i) t += frob_norm_sq(sub(a[i], b[i]));
  return t;
}

// |X^k - X^{k-1}|_F over (W, U, V, Lambda)
inline double state_diff_norm(const State& a, const State& b) {
  return std::sqrt(block_diff_sq(a.W, b.W) + block_diff_sq(a.U, b.U) + block_diff_sq(a.V, b.V) +
                   block_diff_sq(a.Lambda, b.Lambda));
}

// |X'^k - X'^{k-1}|_F, including the lagged copies
inline double extended_diff_norm(const State& a, const State& b) {
  const double d = state_diff_norm(a, b);
  return std::sqrt(d * d + block_diff_sq(a.U_lag, b.U_lag) + block_diff_sq(a.V_lag, b.V_lag));
}

inline bool state_finite(const State& s) {
  for (const auto* g : {&s.W, &s.U, &s.V, &s.Lambda})
    for (const auto& m : *g)
      if (!all_finite(m)) return false;
  return true;
}

inline std::size_t resident_entries(const State& s) {
  std::size_t t = 0;
  for (const auto* g : {&s.W, &s.U, &s.V, &s.Lambda})
    for (const auto& m : *g) t += m.size();
  return t;
}

// Layers i (1..N-1) whose |V_i|_F exceeds vmax[i].
inline std::vector<int> vmax_violations(const State& s, const Hyper& h) {
  std::vector<int> out;
  for (std::size_t i = 1; i < h.vmax.size() && i <= s.V.size(); ++i)
    if (frob_norm(s.V[i - 1]) > h.vmax[i]) out.push_back(static_cast<int>(i));
  return out;
}

struct StepOptions {
  bool diagnostics = true;
  // theta/eta for the auxiliary function; empty -> aux_lag reported as aug_lag
  std::vector<double> theta, eta;
};

inline std::pair<State, TraceRecord> step_serial_3s(const State& prev, const NetworkShape& shape,
                                                    const Dataset& data, const Hyper& h,
                                                    const StepOptions& opt = {}) {
  State s = prev;
  const auto ops0 = op_counter().ops;
  const auto t0 = std::chrono::steady_clock::now();
  cycle_3s(s, shape, data, h);
  const auto t1 = std::chrono::steady_clock::now();
  TraceRecord r;
  r.k = s.k;
  r.op_count = op_counter().ops - ops0;
  r.wall_ns = std::chrono::duration_cast<std::chrono::nanoseconds>(t1 - t0).count();
  if (!state_finite(s))
    throw NumericalError("non-finite iterate at k=" + std::to_string(s.k) + "; last good k=" +
                         std::to_string(prev.k));
  r.objective = objective(s.W, shape, data.X, data.Y, h.lambda);
  if (opt.diagnostics) {
    r.aug_lag = aug_lag_3s(s, shape, data, h);
    const bool aux = !opt.theta.empty();
    if (aux) {
      r.aux_lag = aux_function(s, shape, data, h, opt.theta, opt.eta);
      r.b1_margin = aux_function(prev, shape, data, h, opt.theta, opt.eta) - r.aux_lag;
      r.delta_x = extended_diff_norm(s, prev);
      r.grad_lag = grad_aux_norm(s, shape, data, h, opt.theta, opt.eta);
    } else {
      r.aux_lag = r.aug_lag;
      r.b1_margin = aug_lag_3s(prev, shape, data, h) - r.aug_lag;
      r.delta_x = state_diff_norm(s, prev);
      r.grad_lag = grad_L3s(s, shape, data, h).norm();
    }
    r.kkt = kkt_residual_3s(s, shape, data, h);
    r.b2_ratio = r.delta_x > 0 ? r.grad_lag / r.delta_x : (r.grad_lag > 0 ? INFINITY : 0.0);
  } else {
    r.delta_x = state_diff_norm(s, prev);
  }
  return {std::move(s), r};
}

}  // namespace resadmm::admm3
