#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "pipeline_schedule.hpp"
#include "trace.hpp"

namespace resadmm::analysis {

// ---- descent / relative-error monitors ----

struct B1Report {
  bool holds = true;
  double c1_hat = std::numeric_limits<double>::infinity();  // inf when no step moved
  long worst_k = -1;                                         // most negative margin
  double worst_margin = 0.0;
};

// margins[j] = f(X^{k-1}) - f(X^k), deltas[j] = |X^k - X^{k-1}|_F
inline B1Report check_b1(const std::vector<double>& margins, const std::vector<double>& deltas,
                         double slack = 1e-10, const std::vector<long>& ks = {}) {
  B1Report r;
  for (std::size_t j = 0; j < margins.size(); ++j) {
    if (margins[j] < r.worst_margin || r.worst_k < 0) {
      r.worst_margin = margins[j];
      r.worst_k = ks.empty() ? static_cast<long>(j + 1) : ks[j];
    }
    if (margins[j] < -slack) r.holds = false;
    if (deltas[j] >= 1e-14) r.c1_hat = std::min(r.c1_hat, margins[j] / (deltas[j] * deltas[j]));
  }
  return r;
}

inline B1Report check_b1(const std::vector<TraceRecord>& rows, double slack = 1e-10) {
  std::vector<double> m, d;
  std::vector<long> ks;
  for (const auto& row : rows) {
    m.push_back(row.b1_margin);
    d.push_back(row.delta_x);
    ks.push_back(row.k);
  }
  return check_b1(m, d, slack, ks);
}

struct B2Report {
  double c2_hat = 0.0;  // max ratio over steps that moved
  std::vector<double> ratios;
  bool stalled_nonstationary = false;  // a step with dX = 0 but grad != 0
};

inline B2Report check_b2(const std::vector<double>& grads, const std::vector<double>& deltas,
                         double grad_tol = 1e-8) {
  B2Report r;
  for (std::size_t j = 0; j < grads.size(); ++j) {
    if (deltas[j] == 0.0) {
      if (grads[j] > grad_tol) r.stalled_nonstationary = true;
      r.ratios.push_back(grads[j] > grad_tol ? std::numeric_limits<double>::infinity() : 0.0);
      continue;
    }
    const double q = grads[j] / deltas[j];
    r.ratios.push_back(q);
    r.c2_hat = std::max(r.c2_hat, q);
  }
  return r;
}

inline B2Report check_b2(const std::vector<TraceRecord>& rows, double grad_tol = 1e-8) {
  std::vector<double> g, d;
  for (const auto& row : rows) {
    g.push_back(row.grad_lag);
    d.push_back(row.delta_x);
  }
  return check_b2(g, d, grad_tol);
}

// ---- rate fitting ----

struct RateFit {
  double eta_hat = 0.0;  // exp(slope) of log(gap) vs k
  double r2_linear = 0.0;
  double power_exponent = 0.0;  // slope of log(gap) vs log(k)
  double r2_power = 0.0;
  std::size_t used = 0;
};

namespace detail {
struct LineFit {
  double slope = 0, intercept = 0, r2 = 0;
};
inline LineFit least_squares(const std::vector<double>& x, const std::vector<double>& y) {
  LineFit f;
  const double n = static_cast<double>(x.size());
  if (x.size() < 2) return f;
  double sx = 0, sy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sx += x[i];
    sy += y[i];
  }
  const double mx = sx / n, my = sy / n;
  double sxx = 0, sxy = 0, syy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (sxx == 0) return f;
  f.slope = sxy / sxx;
  f.intercept = my - f.slope * mx;
  f.r2 = syy == 0 ? 1.0 : (sxy * sxy) / (sxx * syy);
  return f;
}
}  // namespace detail

// gaps[j] belongs to k = first_k + j; only the trailing `tail` fraction with positive gaps is fitted.
inline RateFit fit_rate(const std::vector<double>& gaps, double tail = 1.0, long first_k = 1) {
  RateFit out;
  const auto start = static_cast<std::size_t>(std::floor((1.0 - tail) * static_cast<double>(gaps.size())));
  std::vector<double> ks, lks, lg;
  for (std::size_t j = start; j < gaps.size(); ++j) {
    if (!(gaps[j] > 0) || !std::isfinite(gaps[j])) continue;
    const double k = static_cast<double>(first_k + static_cast<long>(j));
    ks.push_back(k);
    lks.push_back(std::log(k));
    lg.push_back(std::log(gaps[j]));
  }
  out.used = ks.size();
  const auto lin = detail::least_squares(ks, lg);
  out.eta_hat = std::exp(lin.slope);
  out.r2_linear = lin.r2;
  const auto pw = detail::least_squares(lks, lg);
  out.power_exponent = pw.slope;
  out.r2_power = pw.r2;
  return out;
}

// Distance of each iterate to the last one, for rate fitting without knowing the limit.
template <class State, class Dist>
std::vector<double> gaps_to_last(const std::vector<State>& iterates, Dist dist) {
  std::vector<double> g;
  if (iterates.empty()) return g;
  for (std::size_t j = 0; j + 1 < iterates.size(); ++j) g.push_back(dist(iterates[j], iterates.back()));
  return g;
}

// ---- operation-count model ----

struct CostModel {
  static std::uint64_t mul(std::uint64_t p, std::uint64_t q, std::uint64_t r) { return p * r * (2 * q - 1); }
  static std::uint64_t mul(std::uint64_t n) { return mul(n, n, n); }
  static std::uint64_t inv(std::uint64_t n) { return n * n * n; }
  static std::uint64_t elewise(std::uint64_t p, std::uint64_t q) { return p * q; }
  static std::uint64_t hadamard(std::uint64_t p, std::uint64_t q) { return p * q; }
};

enum class Block2 { W_N, W_i, V_i, V_N1, V_N, Lambda };
enum class Block3 { W_N, W_i, V_i, U_i, V_N1, V_N, Lambda_i, Lambda_N };

// Per-update basic-operation counts of the proximal-gradient variants.
inline std::uint64_t cost_2s_update(Block2 b, std::uint64_t d, std::uint64_t q, std::uint64_t n) {
  using M = CostModel;
  switch (b) {
    case Block2::W_N:
      return M::mul(d, n, d) + M::inv(d) + M::mul(q, d, d) + 2 * M::mul(q, n, d) + 2 * q * d + 2 * d * d + d;
    case Block2::W_i:
      return 2 * M::mul(d, d, n) + M::mul(d, n, d) + M::hadamard(d, n) + M::elewise(d, n) + M::elewise(d, n) +
             2 * d * n + 3 * d * d + 4;
    case Block2::V_i:
      return 5 * M::mul(d, d, n) + M::hadamard(d, n) + M::elewise(d, n) + 2 * M::elewise(d, n) + M::elewise(d, n) +
             10 * d * n + d * d + 6;
    case Block2::V_N1:
      return 2 * M::mul(d, d, n) + 2 * M::mul(d, d, q) + 3 * M::mul(d, q, d) + 2 * M::mul(d, q, n) + 3 * M::inv(d) +
             M::elewise(d, n) + 3 * d * n + 3 * d * d + 3 * d * q + 2 * d * d + 3 * d;
    case Block2::V_N:
      return M::mul(q, d, n) + 3 * q * n + q * d + 2;
    case Block2::Lambda:
      return M::mul(q, d, n) + 3 * q * n;
  }
  return 0;
}

inline std::uint64_t cost_3s_update(Block3 b, std::uint64_t d, std::uint64_t q, std::uint64_t n) {
  using M = CostModel;
  switch (b) {
    case Block3::W_N:
      return M::mul(d, n, d) + 2 * M::mul(q, n, d) + M::inv(d) + M::mul(q, d, d) + 2 * q * d + 2 * d * d + d;
    case Block3::W_i:
      return 3 * M::mul(d, n, d) + M::inv(d) + M::mul(d) + 4 * d * d + d;
    case Block3::V_i:
      return 3 * M::mul(d, d, n) + 5 * M::mul(d) + M::elewise(d, n) + M::elewise(d, n) + 3 * M::inv(d) + 5 * d * n +
             8 * d * d + 3 * d + 3;
    case Block3::U_i:
      return M::mul(d, d, n) + M::hadamard(d, n) + M::elewise(d, n) + M::elewise(d, n) + 8 * d * n + d * d + 8;
    case Block3::V_N1:
      return 3 * M::mul(d, q, d) + M::mul(d, d, n) + 2 * M::mul(d, d, q) + 2 * M::mul(d, q, n) + 3 * M::inv(d) +
             M::elewise(d, n) + 3 * d * n + 3 * d * d + 3 * d * q + 2 * d * d + 3 * d;
    case Block3::V_N:
      return M::mul(q, d, n) + 3 * q * n + q * d + 2;
    case Block3::Lambda_i:
      return M::mul(d, d, n) + 3 * d * n;
    case Block3::Lambda_N:
      return M::mul(q, d, n) + 3 * q * n;
  }
  return 0;
}

// Cost-model ops for one pipeline op.
inline std::uint64_t op_cost(pipeline::Splitting sp, const pipeline::OpSpec& op, int N, std::uint64_t d,
                             std::uint64_t q, std::uint64_t n) {
  using pipeline::Var;
  const int i = op.layer;
  if (sp == pipeline::Splitting::two) {
    switch (op.out) {
      case Var::W: return cost_2s_update(i == N ? Block2::W_N : Block2::W_i, d, q, n);
      case Var::V:
        return cost_2s_update(i == N ? Block2::V_N : (i == N - 1 ? Block2::V_N1 : Block2::V_i), d, q, n);
      case Var::L: return cost_2s_update(Block2::Lambda, d, q, n);
      case Var::U: break;
    }
    return 0;
  }
  switch (op.out) {
    case Var::W: return cost_3s_update(i == N ? Block3::W_N : Block3::W_i, d, q, n);
    case Var::U: return cost_3s_update(Block3::U_i, d, q, n);
    case Var::V: return cost_3s_update(i == N ? Block3::V_N : (i == N - 1 ? Block3::V_N1 : Block3::V_i), d, q, n);
    case Var::L: return cost_3s_update(i == N ? Block3::Lambda_N : Block3::Lambda_i, d, q, n);
  }
  return 0;
}

// Entries kept by one processor holding every block at two adjacent iterations.
inline std::uint64_t serial_memory(pipeline::Splitting sp, int N, std::uint64_t d, std::uint64_t q, std::uint64_t n) {
  const auto h = static_cast<std::uint64_t>(N - 1);
  std::uint64_t one = h * d * d + q * d + h * d * n + q * n;  // W, V
  if (sp == pipeline::Splitting::two)
    one += q * n;  // Lambda
  else
    one += h * d * n + h * d * n + q * n;  // U, Lambda_i, Lambda_N
  return 2 * one;
}

// Closed-form per-node entry counts from the distributed-memory enumeration.
inline std::uint64_t node_memory(pipeline::Splitting sp, int i, int N, std::uint64_t d, std::uint64_t q,
                                 std::uint64_t n) {
  if (sp == pipeline::Splitting::two) {
    if (i <= N - 2) return 3 * d * d + 5 * d * n;
    if (i == N - 1) return 2 * d * d + q * d + 4 * d * n + 2 * q * n;
    return q * d + 2 * d * n + 3 * q * n;
  }
  if (i <= N - 2) return 2 * d * d + 11 * d * n;
  if (i == N - 1) return d * d + q * d + 8 * d * n + 2 * q * n;
  return q * d + 2 * d * n + 4 * q * n;
}

struct ComplexityTable {
  std::uint64_t serial_ops = 0;
  std::uint64_t parallel_ops_span = 0;  // critical path with cost-model durations
  std::uint64_t serial_mem = 0;
  std::vector<std::uint64_t> per_node_mem;  // workers 1..N
};

inline ComplexityTable complexity_tables(pipeline::Splitting sp, long K, int N, std::uint64_t d, std::uint64_t q,
                                         std::uint64_t n) {
  ComplexityTable t;
  for (int w = 1; w <= N; ++w)
    for (const auto& op : pipeline::worker_ops(sp, w, N)) t.serial_ops += op_cost(sp, op, N, d, q, n);
  t.serial_ops *= static_cast<std::uint64_t>(K);
  const auto sched = pipeline::simulate_schedule(sp, K, N, [&](const pipeline::OpSpec& op) {
    return static_cast<std::int64_t>(op_cost(sp, op, N, d, q, n));
  });
  t.parallel_ops_span = static_cast<std::uint64_t>(pipeline::makespan_of(sched));
  t.serial_mem = serial_memory(sp, N, d, q, n);
  for (int w = 1; w <= N; ++w) t.per_node_mem.push_back(node_memory(sp, w, N, d, q, n));
  return t;
}

// Trailing moving average with window w (entries before a full window are skipped).
inline std::vector<double> moving_average(const std::vector<double>& x, std::size_t w) {
  std::vector<double> out;
  if (w == 0 || x.size() < w) return out;
  double s = 0;
  for (std::size_t j = 0; j < x.size(); ++j) {
    s += x[j];
    if (j >= w) s -= x[j - w];
    if (j + 1 >= w) out.push_back(s / static_cast<double>(w));
  }
  return out;
}

}  // namespace resadmm::analysis
