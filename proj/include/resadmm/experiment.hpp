#pragma once

#include <algorithm>
#include <bit>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <map>
#include <numeric>
#include <optional>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "admm2.hpp"
#include "admm3.hpp"
#include "analysis.hpp"
#include "baselines.hpp"
#include "model.hpp"
#include "parallel.hpp"
#include "trace.hpp"

namespace resadmm::experiment {

struct ConfigError : std::invalid_argument {
  std::string field;
  ConfigError(const std::string& f, const std::string& msg) : std::invalid_argument(f + ": " + msg), field(f) {}
};

enum class Trainer { admm2_pp, admm2_pg, admm3_pp, admm3_pg, sgd, sgdm, adam };

inline const char* trainer_name(Trainer t) {
  switch (t) {
    case Trainer::admm2_pp: return "admm2_pp";
    case Trainer::admm2_pg: return "admm2_pg";
    case Trainer::admm3_pp: return "admm3_pp";
    case Trainer::admm3_pg: return "admm3_pg";
    case Trainer::sgd: return "sgd";
    case Trainer::sgdm: return "sgdm";
    case Trainer::adam: return "adam";
  }
  return "?";
}

inline Trainer parse_trainer(const std::string& s) {
  for (Trainer t : {Trainer::admm2_pp, Trainer::admm2_pg, Trainer::admm3_pp, Trainer::admm3_pg, Trainer::sgd,
                    Trainer::sgdm, Trainer::adam})
    if (s == trainer_name(t)) return t;
  throw std::invalid_argument("unknown trainer '" + s + "'");
}

inline bool is_2s(Trainer t) { return t == Trainer::admm2_pp || t == Trainer::admm2_pg; }
inline bool is_3s(Trainer t) { return t == Trainer::admm3_pp || t == Trainer::admm3_pg; }
inline bool is_admm(Trainer t) { return is_2s(t) || is_3s(t); }
inline bool is_pp(Trainer t) { return t == Trainer::admm2_pp || t == Trainer::admm3_pp; }
inline bool is_pg(Trainer t) { return t == Trainer::admm2_pg || t == Trainer::admm3_pg; }

struct Config {
  std::string task = "l1";
  std::size_t d = 2;
  std::size_t n_samples = 1000;
  double split_ratio = 0.8;
  std::uint64_t seed = 1;

  int N = 3;
  Activation act{ActKind::sigmoid};
  InitMethod init = InitMethod::kaiming_normal;

  Trainer trainer = Trainer::admm2_pg;
  bool parallel = false;
  long iterations = 100;
  bool batched = false;
  std::size_t batch_size = 64;

  admm2::Hyper h2;
  admm3::Hyper h3;  // beta may hold one entry until finalize() expands it to N
  baselines::OptimizerConfig opt;

  std::string out_dir = "out";
  bool write_dataset = false;
  bool record_wall_ns = false;  // off keeps trace.csv byte-reproducible

  bool strict = false;  // set from the command line

  NetworkShape shape() const { return NetworkShape::uniform(N, d, 1, act); }
};

namespace detail {

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

inline double to_double(const std::string& v) {
  std::size_t used = 0;
  double x = 0;
  try {
    x = std::stod(v, &used);
  } catch (const std::exception&) {
    throw std::invalid_argument("expected a number, got '" + v + "'");
  }
  if (used != v.size() || !std::isfinite(x)) throw std::invalid_argument("expected a number, got '" + v + "'");
  return x;
}

inline long long to_int(const std::string& v) {
  std::size_t used = 0;
  long long x = 0;
  try {
    x = std::stoll(v, &used);
  } catch (const std::exception&) {
    throw std::invalid_argument("expected an integer, got '" + v + "'");
  }
  if (used != v.size()) throw std::invalid_argument("expected an integer, got '" + v + "'");
  return x;
}

inline std::size_t to_count(const std::string& v) {
  const auto x = to_int(v);
  if (x < 1) throw std::invalid_argument("must be >= 1");
  return static_cast<std::size_t>(x);
}

inline bool to_bool(const std::string& v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw std::invalid_argument("expected true/false, got '" + v + "'");
}

inline std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream is(s);
  while (std::getline(is, cur, sep)) out.push_back(trim(cur));
  return out;
}

inline std::vector<double> to_list(const std::string& v) {
  std::vector<double> out;
  for (const auto& p : split(v, ',')) out.push_back(to_double(p));
  if (out.empty()) throw std::invalid_argument("empty list");
  return out;
}

// "v" or "start:end:ramp"
inline Schedule to_schedule(const std::string& v) {
  const auto parts = split(v, ':');
  Schedule s;
  if (parts.size() == 1) {
    s = Schedule::constant(to_double(parts[0]));
  } else if (parts.size() == 3) {
    s.start = to_double(parts[0]);
    s.end = to_double(parts[1]);
    s.ramp = static_cast<long>(to_int(parts[2]));
    if (s.ramp < 0) throw std::invalid_argument("ramp must be >= 0");
  } else {
    throw std::invalid_argument("schedule must be 'v' or 'start:end:ramp'");
  }
  if (!(s.min() > 0)) throw std::invalid_argument("schedule values must be > 0");
  return s;
}

inline double positive(double x) {
  if (!(x > 0)) throw std::invalid_argument("must be > 0");
  return x;
}

struct KeySpec {
  std::function<bool(Trainer)> applies;
  std::function<void(Config&, const std::string&)> set;
};

inline bool any(Trainer) { return true; }
inline bool baseline(Trainer t) { return !is_admm(t); }

inline const std::map<std::string, KeySpec>& key_table() {
  static const std::map<std::string, KeySpec> t = {
      {"task",
       {any,
        [](Config& c, const std::string& v) {
          if (v != "l1" && v != "oscillation") throw std::invalid_argument("expected l1 or oscillation");
          c.task = v;
        }}},
      {"data.d", {any, [](Config& c, const std::string& v) { c.d = to_count(v); }}},
      {"data.n_samples", {any, [](Config& c, const std::string& v) { c.n_samples = to_count(v); }}},
      {"data.split_ratio",
       {any,
        [](Config& c, const std::string& v) {
          c.split_ratio = to_double(v);
          if (!(c.split_ratio > 0 && c.split_ratio < 1)) throw std::invalid_argument("must be in (0,1)");
        }}},
      {"data.seed",
       {any,
        [](Config& c, const std::string& v) {
          const auto s = to_int(v);
          if (s < 0) throw std::invalid_argument("must be >= 0");
          c.seed = static_cast<std::uint64_t>(s);
        }}},
      {"network.N",
       {any,
        [](Config& c, const std::string& v) {
          const auto n = to_int(v);
          if (n < 2) throw std::invalid_argument("must be >= 2");
          c.N = static_cast<int>(n);
        }}},
      {"network.activation", {any, [](Config& c, const std::string& v) { c.act = Activation::parse(v); }}},
      {"network.init", {any, [](Config& c, const std::string& v) { c.init = parse_init(v); }}},
      {"trainer.kind", {any, [](Config&, const std::string&) {}}},  // consumed before the others
      {"trainer.executor",
       {any,
        [](Config& c, const std::string& v) {
          if (v != "serial" && v != "parallel") throw std::invalid_argument("expected serial or parallel");
          c.parallel = v == "parallel";
        }}},
      {"trainer.iterations",
       {any, [](Config& c, const std::string& v) { c.iterations = static_cast<long>(to_count(v)); }}},
      {"trainer.batching",
       {any,
        [](Config& c, const std::string& v) {
          if (v != "full" && v != "batched") throw std::invalid_argument("expected full or batched");
          c.batched = v == "batched";
        }}},
      {"trainer.batch_size",
       {any,
        [](Config& c, const std::string& v) {
          c.batch_size = to_count(v);
          c.opt.batch_size = c.batch_size;
        }}},
      {"hyper.lambda",
       {is_admm,
        [](Config& c, const std::string& v) { c.h2.lambda = c.h3.lambda = positive(to_double(v)); }}},
      {"hyper.mu", {is_admm, [](Config& c, const std::string& v) { c.h2.mu = c.h3.mu = positive(to_double(v)); }}},
      {"hyper.beta",
       {is_admm,
        [](Config& c, const std::string& v) {
          const auto b = to_list(v);
          for (double x : b) positive(x);
          if (is_2s(c.trainer) && b.size() != 1) throw std::invalid_argument("2-splitting takes a single beta");
          c.h2.beta = b[0];
          c.h3.beta = b;
        }}},
      {"hyper.omega",
       {is_pp,
        [](Config& c, const std::string& v) {
          c.h2.omega = to_schedule(v);
          c.h3.omega = c.h2.omega;
        }}},
      {"hyper.nu",
       {[](Trainer t) { return t == Trainer::admm2_pp; },
        [](Config& c, const std::string& v) { c.h2.nu = to_schedule(v); }}},
      {"hyper.tau",
       {is_pg,
        [](Config& c, const std::string& v) {
          c.h2.tau = to_schedule(v);
          c.h3.tau = c.h2.tau;
        }}},
      {"hyper.iota",
       {[](Trainer t) { return t == Trainer::admm2_pg; },
        [](Config& c, const std::string& v) { c.h2.iota = to_schedule(v); }}},
      {"hyper.vmax", {is_3s, [](Config& c, const std::string& v) { c.h3.vmax = to_list(v); }}},
      {"hyper.inner_tol",
       {is_pp,
        [](Config& c, const std::string& v) { c.h2.inner.tol = c.h3.u_tol = positive(to_double(v)); }}},
      {"hyper.inner_max_iter",
       {[](Trainer t) { return t == Trainer::admm2_pp; },
        [](Config& c, const std::string& v) { c.h2.inner.max_iter = static_cast<int>(to_count(v)); }}},
      {"hyper.lr", {baseline, [](Config& c, const std::string& v) { c.opt.lr = to_double(v); }}},
      {"hyper.lr_decay", {baseline, [](Config& c, const std::string& v) { c.opt.lr_decay = to_double(v); }}},
      {"hyper.weight_decay",
       {baseline,
        [](Config& c, const std::string& v) {
          c.opt.weight_decay = to_double(v);
          if (c.opt.weight_decay < 0) throw std::invalid_argument("must be >= 0");
        }}},
      {"hyper.momentum",
       {[](Trainer t) { return t == Trainer::sgdm; },
        [](Config& c, const std::string& v) { c.opt.momentum = to_double(v); }}},
      {"hyper.beta1",
       {[](Trainer t) { return t == Trainer::adam; },
        [](Config& c, const std::string& v) { c.opt.beta1 = to_double(v); }}},
      {"hyper.beta2",
       {[](Trainer t) { return t == Trainer::adam; },
        [](Config& c, const std::string& v) { c.opt.beta2 = to_double(v); }}},
      {"hyper.eps",
       {[](Trainer t) { return t == Trainer::adam; },
        [](Config& c, const std::string& v) { c.opt.eps = to_double(v); }}},
      {"output.dir", {any, [](Config& c, const std::string& v) { c.out_dir = v; }}},
      {"output.dataset", {any, [](Config& c, const std::string& v) { c.write_dataset = to_bool(v); }}},
      {"output.wall_ns", {any, [](Config& c, const std::string& v) { c.record_wall_ns = to_bool(v); }}},
  };
  return t;
}

}  // namespace detail

// Default hyperparameters per trainer.
inline void apply_preset(Config& c) {
  switch (c.trainer) {
    case Trainer::admm2_pg:
    case Trainer::admm2_pp:
      c.h2 = admm2::Hyper{};
      c.h2.beta = 1.0;
      c.h2.mu = 0.1;
      c.h2.lambda = 1e-3;
      c.h2.variant = c.trainer == Trainer::admm2_pg ? Variant::prox_grad : Variant::prox_point;
      break;
    case Trainer::admm3_pg:
    case Trainer::admm3_pp:
      c.h3 = admm3::Hyper::uniform(1, 1e-4, 1.0, 100.0,
                                   c.trainer == Trainer::admm3_pg ? Variant::prox_grad : Variant::prox_point);
      c.h3.tau = Schedule::constant(10.0);
      break;
    case Trainer::sgd: c.opt = baselines::OptimizerConfig::preset(baselines::OptKind::sgd); break;
    case Trainer::sgdm: c.opt = baselines::OptimizerConfig::preset(baselines::OptKind::sgdm); break;
    case Trainer::adam: c.opt = baselines::OptimizerConfig::preset(baselines::OptKind::adam); break;
  }
}

// Cross-field checks after all keys are applied.
inline void finalize(Config& c) {
  if (c.parallel && !is_admm(c.trainer))
    throw ConfigError("trainer.executor", "parallel executor requires an ADMM trainer");
  if (c.parallel && c.batched) throw ConfigError("trainer.batching", "parallel executor requires batching=full");
  if (c.n_samples < 2) throw ConfigError("data.n_samples", "must be >= 2");
  const auto n_train = static_cast<std::size_t>(std::floor(c.split_ratio * static_cast<double>(c.n_samples)));
  if (n_train < 1 || n_train >= c.n_samples)
    throw ConfigError("data.split_ratio", "leaves an empty train or test set");
  if (c.task == "oscillation" && c.d < 2) throw ConfigError("data.d", "oscillation task needs d >= 2");
  c.opt.batch_size = c.batch_size;
  if (is_3s(c.trainer)) {
    const auto N = static_cast<std::size_t>(c.N);
    if (c.h3.beta.size() == 1) c.h3.beta.assign(N, c.h3.beta[0]);
    if (c.h3.beta.size() != N) throw ConfigError("hyper.beta", "needs 1 or N entries");
    if (!c.h3.vmax.empty() && c.h3.vmax.size() != N)
      throw ConfigError("hyper.vmax", "needs N entries (V_0..V_{N-1})");
  }
  if (!is_admm(c.trainer)) {
    c.opt.kind = c.trainer == Trainer::sgd    ? baselines::OptKind::sgd
                 : c.trainer == Trainer::sgdm ? baselines::OptKind::sgdm
                                              : baselines::OptKind::adam;
    try {
      c.opt.validate();
    } catch (const std::invalid_argument& e) {
      throw ConfigError("hyper", e.what());
    }
  }
}

inline Config parse_config(std::istream& is) {
  std::vector<std::pair<std::string, std::string>> kv;
  std::map<std::string, int> seen;
  std::string line;
  int ln = 0;
  while (std::getline(is, line)) {
    ++ln;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("line " + std::to_string(ln), "expected 'key = value'");
    const std::string k = detail::trim(line.substr(0, eq)), v = detail::trim(line.substr(eq + 1));
    if (k.empty()) throw ConfigError("line " + std::to_string(ln), "empty key");
    if (v.empty()) throw ConfigError(k, "empty value");
    if (seen.count(k)) throw ConfigError(k, "duplicate key (first on line " + std::to_string(seen[k]) + ")");
    seen[k] = ln;
    kv.emplace_back(k, v);
  }
  Config c;
  for (const auto& [k, v] : kv)
    if (k == "trainer.kind") {
      try {
        c.trainer = parse_trainer(v);
      } catch (const std::invalid_argument& e) {
        throw ConfigError(k, e.what());
      }
    }
  apply_preset(c);
  const auto& table = detail::key_table();
  for (const auto& [k, v] : kv) {
    const auto it = table.find(k);
    if (it == table.end()) throw ConfigError(k, "unknown key");
    if (!it->second.applies(c.trainer))
      throw ConfigError(k, std::string("not used by trainer ") + trainer_name(c.trainer));
    try {
      it->second.set(c, v);
    } catch (const ConfigError&) {
      throw;
    } catch (const std::invalid_argument& e) {
      throw ConfigError(k, e.what());
    }
  }
  finalize(c);
  return c;
}

inline Config parse_config_text(const std::string& text) {
  std::istringstream is(text);
  return parse_config(is);
}

inline Config load_config(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError(path, "cannot open config file");
  return parse_config(f);
}

// ---- weights dump ----
// Text header line "resadmm-weights N d q activation", then every W_i row-major
// as little-endian IEEE-754 doubles.

inline void write_weights(std::ostream& os, const std::vector<Matrix>& W, const NetworkShape& shape) {
  shape.check_weights(W);
  os << "resadmm-weights " << shape.N << " " << shape.d << " " << shape.q << " " << shape.act(1).name() << "\n";
  for (const auto& w : W)
    for (std::size_t e = 0; e < w.size(); ++e) {
      std::uint64_t bits = std::bit_cast<std::uint64_t>(w[e]);
      unsigned char b[8];
      for (int j = 0; j < 8; ++j) b[j] = static_cast<unsigned char>(bits >> (8 * j));
      os.write(reinterpret_cast<const char*>(b), 8);
    }
}

inline std::pair<std::vector<Matrix>, NetworkShape> read_weights(std::istream& is) {
  std::string line;
  if (!std::getline(is, line)) throw std::runtime_error("weights: missing header");
  std::istringstream h(line);
  std::string magic, act;
  int N = 0;
  std::size_t d = 0, q = 0;
  if (!(h >> magic >> N >> d >> q >> act) || magic != "resadmm-weights")
    throw std::runtime_error("weights: bad header");
  const auto shape = NetworkShape::uniform(N, d, q, Activation::parse(act));
  std::vector<Matrix> W;
  for (int i = 1; i <= N; ++i) {
    Matrix w(shape.rows_of(i), d);
    for (std::size_t e = 0; e < w.size(); ++e) {
      unsigned char b[8];
      if (!is.read(reinterpret_cast<char*>(b), 8)) throw std::runtime_error("weights: truncated payload");
      std::uint64_t bits = 0;
      for (int j = 0; j < 8; ++j) bits |= static_cast<std::uint64_t>(b[j]) << (8 * j);
      w[e] = std::bit_cast<double>(bits);
    }
    W.push_back(std::move(w));
  }
  return {std::move(W), shape};
}

// ---- running ----

struct RunResult {
  Config config;
  NetworkShape shape;
  Dataset train, test;
  std::vector<TraceRecord> trace;
  std::vector<long> metric_k;
  std::vector<double> train_mse, test_mse;
  std::vector<Matrix> W;
  double final_objective = 0, final_train_mse = 0, final_test_mse = 0;
  std::int64_t wall_ns = 0;    // whole run including diagnostics
  std::int64_t update_ns = 0;  // sum of per-update times
  std::uint64_t ops = 0;
  std::optional<analysis::B1Report> b1;
  std::optional<analysis::B2Report> b2;
  double kkt = std::numeric_limits<double>::quiet_NaN();
  std::optional<double> parallel_diff;  // max-abs weight diff, parallel vs serial
  std::optional<parallel::PipelineTrace> pipeline;
  std::vector<std::string> notes;
};

namespace detail {

inline void push_metrics(RunResult& r, long k, const std::vector<Matrix>& W) {
  r.metric_k.push_back(k);
  r.train_mse.push_back(mse(predict(W, r.shape, r.train.X), r.train.Y));
  r.test_mse.push_back(mse(predict(W, r.shape, r.test.X), r.test.Y));
}

inline std::vector<Dataset> make_batches(const Dataset& train, std::size_t b, std::uint64_t seed) {
  std::vector<std::size_t> idx(train.n());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::mt19937_64 rng(seed);
  std::shuffle(idx.begin(), idx.end(), rng);
  std::vector<Dataset> out;
  for (std::size_t s = 0; s < idx.size(); s += b)
    out.push_back(select_columns(
        train, std::vector<std::size_t>(idx.begin() + static_cast<std::ptrdiff_t>(s),
                                        idx.begin() + static_cast<std::ptrdiff_t>(std::min(idx.size(), s + b)))));
  return out;
}

inline double max_weight_diff(const std::vector<Matrix>& a, const std::vector<Matrix>& b) {
  double m = 0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, max_abs_diff(a[i], b[i]));
  return m;
}

inline TraceRecord final_row_2s(const admm2::State& s, const NetworkShape& shape, const Dataset& data,
                                const admm2::Hyper& h) {
  TraceRecord r;
  r.k = s.k;
  r.objective = objective(s.W, shape, data.X, data.Y, h.lambda);
  r.aug_lag = r.aux_lag = admm2::aug_lag_2s(s, shape, data, h);
  r.grad_lag = admm2::grad_L2s(s, shape, data, h).norm();
  r.kkt = admm2::kkt_residual_2s(s, shape, data, h);
  r.delta_x = r.b1_margin = r.b2_ratio = std::numeric_limits<double>::quiet_NaN();
  return r;
}

inline TraceRecord final_row_3s(const admm3::State& s, const NetworkShape& shape, const Dataset& data,
                                const admm3::Hyper& h) {
  TraceRecord r;
  r.k = s.k;
  r.objective = objective(s.W, shape, data.X, data.Y, h.lambda);
  r.aug_lag = r.aux_lag = admm3::aug_lag_3s(s, shape, data, h);
  r.grad_lag = admm3::grad_L3s(s, shape, data, h).norm();
  r.kkt = admm3::kkt_residual_3s(s, shape, data, h);
  r.delta_x = r.b1_margin = r.b2_ratio = std::numeric_limits<double>::quiet_NaN();
  return r;
}

inline void fill_b1b2(RunResult& r, const std::vector<TraceRecord>& rows) {
  r.b1 = analysis::check_b1(rows);
  r.b2 = analysis::check_b2(rows);
}

inline void run_2s(RunResult& r, const std::vector<Matrix>& W0) {
  const Config& c = r.config;
  const auto& h = c.h2;
  const auto v = admm2::validate_2s_params(h, r.shape, c.strict);
  if (!v.ok) throw ConfigError("hyper", v.failures.front());
  if (c.batched) {
    auto batches = make_batches(r.train, c.batch_size, c.seed);
    std::vector<admm2::State> st;
    for (const auto& b : batches) st.push_back(admm2::init_2s(W0, r.shape, b));
    std::vector<Matrix> W = W0;
    for (long k = 1; k <= c.iterations; ++k) {
      const std::size_t b = static_cast<std::size_t>(k - 1) % batches.size();
      st[b].W = W;
      auto [next, row] = admm2::step_serial_2s(st[b], r.shape, batches[b], h);
      st[b] = std::move(next);
      W = st[b].W;
      row.k = k;
      row.objective = objective(W, r.shape, r.train.X, r.train.Y, h.lambda);
      r.trace.push_back(row);
      push_metrics(r, k, W);
    }
    r.W = W;
    r.kkt = r.trace.back().kkt;
    r.notes.push_back("batched: " + std::to_string(batches.size()) +
                      " fixed batches; aug_lag, grad, kkt and B1/B2 refer to the batch updated at each step");
    fill_b1b2(r, r.trace);
    return;
  }
  const auto init = admm2::init_2s(W0, r.shape, r.train);
  std::vector<TraceRecord> serial_rows;
  admm2::State s = init;
  for (long k = 1; k <= c.iterations; ++k) {
    auto [next, row] = admm2::step_serial_2s(s, r.shape, r.train, h);
    s = std::move(next);
    serial_rows.push_back(row);
    if (!c.parallel) push_metrics(r, k, s.W);
  }
  if (!c.parallel) {
    r.trace = serial_rows;
    r.W = s.W;
    r.kkt = serial_rows.back().kkt;
    fill_b1b2(r, serial_rows);
    return;
  }
  const auto t0 = std::chrono::steady_clock::now();
  auto par = parallel::run_parallel_2s(init, r.shape, r.train, h, c.iterations);
  const auto t1 = std::chrono::steady_clock::now();
  TraceRecord row = final_row_2s(par.state, r.shape, r.train, h);
  for (const auto& x : serial_rows) row.op_count += x.op_count;
  row.wall_ns = std::chrono::duration_cast<std::chrono::nanoseconds>(t1 - t0).count();
  r.trace = {row};
  r.W = par.state.W;
  r.kkt = row.kkt;
  r.parallel_diff = max_weight_diff(par.state.W, s.W);
  r.pipeline = std::move(par.trace);
  push_metrics(r, c.iterations, r.W);
  fill_b1b2(r, serial_rows);
  r.notes.push_back("parallel: trace holds the final state only; B1/B2 come from the serial cross-check run");
}

inline void run_3s(RunResult& r, const std::vector<Matrix>& W0) {
  const Config& c = r.config;
  const auto& h = c.h3;
  const auto v = admm3::validate_3s_params(h, r.shape, c.strict, frob_norm(r.train.X));
  if (!v.ok) throw ConfigError("hyper", v.failures.front());
  admm3::StepOptions so;
  if (c.strict)
    for (const auto& L : v.layers) {
      so.theta.push_back(L.theta);
      so.eta.push_back(L.eta);
    }
  if (c.batched) {
    auto batches = make_batches(r.train, c.batch_size, c.seed);
    std::vector<admm3::State> st;
    for (const auto& b : batches) st.push_back(admm3::init_3s(W0, r.shape, b));
    std::vector<Matrix> W = W0;
    for (long k = 1; k <= c.iterations; ++k) {
      const std::size_t b = static_cast<std::size_t>(k - 1) % batches.size();
      st[b].W = W;
      auto [next, row] = admm3::step_serial_3s(st[b], r.shape, batches[b], h, so);
      st[b] = std::move(next);
      W = st[b].W;
      row.k = k;
      row.objective = objective(W, r.shape, r.train.X, r.train.Y, h.lambda);
      r.trace.push_back(row);
      push_metrics(r, k, W);
    }
    r.W = W;
    r.kkt = r.trace.back().kkt;
    r.notes.push_back("batched: " + std::to_string(batches.size()) +
                      " fixed batches; aug_lag, grad, kkt and B1/B2 refer to the batch updated at each step");
    fill_b1b2(r, r.trace);
    return;
  }
  const auto init = admm3::init_3s(W0, r.shape, r.train);
  std::vector<TraceRecord> serial_rows;
  admm3::State s = init;
  for (long k = 1; k <= c.iterations; ++k) {
    auto [next, row] = admm3::step_serial_3s(s, r.shape, r.train, h, so);
    s = std::move(next);
    serial_rows.push_back(row);
    if (!c.parallel) push_metrics(r, k, s.W);
  }
  if (!so.theta.empty()) r.notes.push_back("B1/B2 measured on the auxiliary function (strict parameters)");
  if (!c.parallel) {
    r.trace = serial_rows;
    r.W = s.W;
    r.kkt = serial_rows.back().kkt;
    fill_b1b2(r, serial_rows);
    return;
  }
  const auto t0 = std::chrono::steady_clock::now();
  auto par = parallel::run_parallel_3s(init, r.shape, r.train, h, c.iterations);
  const auto t1 = std::chrono::steady_clock::now();
  TraceRecord row = final_row_3s(par.state, r.shape, r.train, h);
  for (const auto& x : serial_rows) row.op_count += x.op_count;
  row.wall_ns = std::chrono::duration_cast<std::chrono::nanoseconds>(t1 - t0).count();
  r.trace = {row};
  r.W = par.state.W;
  r.kkt = row.kkt;
  r.parallel_diff = max_weight_diff(par.state.W, s.W);
  r.pipeline = std::move(par.trace);
  push_metrics(r, c.iterations, r.W);
  fill_b1b2(r, serial_rows);
  r.notes.push_back("parallel: trace holds the final state only; B1/B2 come from the serial cross-check run");
}

inline void run_baseline(RunResult& r, const std::vector<Matrix>& W0) {
  const Config& c = r.config;
  const long bpe = static_cast<long>(baselines::batches_per_epoch(r.train.n(), c.opt.batch_size));
  const long epochs = (c.iterations + bpe - 1) / bpe;
  auto res = baselines::train_baseline(r.shape, W0, r.train, c.opt, epochs, c.seed, &r.test, c.iterations);
  r.trace = std::move(res.trace);
  r.W = std::move(res.W);
  for (std::size_t j = 0; j < r.trace.size(); ++j) r.metric_k.push_back(r.trace[j].k);
  r.train_mse = std::move(res.train_mse);
  r.test_mse = std::move(res.test_mse);
  r.notes.push_back("baseline: aug_lag/aux_lag/kkt columns are not defined and stay 0; grad_lag is the batch gradient");
}

}  // namespace detail

inline double objective_lambda(const Config& c) {
  return is_2s(c.trainer) ? c.h2.lambda : is_3s(c.trainer) ? c.h3.lambda : c.opt.weight_decay;
}

// Runs one experiment in memory. Throws ConfigError for parameter problems and
// NumericalError (with the last good k) on blowup.
inline RunResult execute(const Config& cfg) {
  RunResult r;
  r.config = cfg;
  r.shape = cfg.shape();
  const Dataset all = cfg.task == "l1" ? gen_l1(cfg.d, cfg.n_samples, cfg.seed)
                                       : gen_oscillation(cfg.d, cfg.n_samples, cfg.seed);
  std::tie(r.train, r.test) = split_train_test(all, cfg.split_ratio, cfg.seed);
  const auto W0 = init_weights(r.shape, cfg.init, cfg.seed);
  const auto t0 = std::chrono::steady_clock::now();
  if (is_2s(cfg.trainer))
    detail::run_2s(r, W0);
  else if (is_3s(cfg.trainer))
    detail::run_3s(r, W0);
  else
    detail::run_baseline(r, W0);
  const auto t1 = std::chrono::steady_clock::now();
  r.wall_ns = std::chrono::duration_cast<std::chrono::nanoseconds>(t1 - t0).count();
  for (const auto& row : r.trace) {
    r.ops += row.op_count;
    r.update_ns += row.wall_ns;
  }
  r.final_objective = objective(r.W, r.shape, r.train.X, r.train.Y, objective_lambda(cfg));
  r.final_train_mse = mse(predict(r.W, r.shape, r.train.X), r.train.Y);
  r.final_test_mse = mse(predict(r.W, r.shape, r.test.X), r.test.Y);
  if (!cfg.record_wall_ns)
    for (auto& row : r.trace) row.wall_ns = 0;
  return r;
}

inline void write_summary(std::ostream& os, const RunResult& r) {
  const Config& c = r.config;
  os << std::setprecision(17);
  os << "trainer " << trainer_name(c.trainer) << "\n";
  os << "executor " << (c.parallel ? "parallel" : "serial") << "\n";
  os << "batching " << (c.batched ? "batched" : "full") << "\n";
  os << "task " << c.task << " d=" << c.d << " n_train=" << r.train.n() << " n_test=" << r.test.n()
     << " seed=" << c.seed << "\n";
  os << "network N=" << c.N << " activation=" << c.act.name() << "\n";
  os << "iterations " << c.iterations << "\n";
  os << "final_train_mse " << r.final_train_mse << "\n";
  os << "final_test_mse " << r.final_test_mse << "\n";
  os << "final_objective " << r.final_objective << "\n";
  os << "objective_lambda " << objective_lambda(c) << "\n";
  os << "wall_time_s " << static_cast<double>(r.wall_ns) * 1e-9 << "\n";
  os << "op_count " << r.ops << "\n";
  if (!std::isnan(r.kkt)) os << "kkt_residual " << r.kkt << "\n";
  if (r.b1)
    os << "b1_holds " << (r.b1->holds ? "yes" : "no") << " c1_hat " << r.b1->c1_hat << " worst_k " << r.b1->worst_k
       << " worst_margin " << r.b1->worst_margin << "\n";
  if (r.b2)
    os << "b2_c2_hat " << r.b2->c2_hat << " stalled_nonstationary " << (r.b2->stalled_nonstationary ? "yes" : "no")
       << "\n";
  if (r.parallel_diff) os << "parallel_vs_serial_max_abs_diff " << *r.parallel_diff << "\n";
  if (r.pipeline) os << "pipeline_makespan_slots " << parallel::makespan(*r.pipeline) << "\n";
  for (const auto& n : r.notes) os << "note " << n << "\n";
}

inline void write_metrics_csv(std::ostream& os, const RunResult& r) {
  os << "k,train_mse,test_mse\n" << std::setprecision(17);
  for (std::size_t j = 0; j < r.metric_k.size(); ++j)
    os << r.metric_k[j] << "," << r.train_mse[j] << "," << r.test_mse[j] << "\n";
}

// Writes trace.csv, metrics.csv, summary.txt and the optional artifacts into dir.
inline void write_artifacts(const RunResult& r, const std::string& dir, bool dump_weights) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  const fs::path p(dir);
  write_trace_csv((p / "trace.csv").string(), r.trace);
  auto open = [](const fs::path& f, std::ios::openmode m = std::ios::out) {
    std::ofstream os(f, m);
    if (!os) throw std::runtime_error("cannot write " + f.string());
    return os;
  };
  {
    auto os = open(p / "metrics.csv");
    write_metrics_csv(os, r);
  }
  {
    auto os = open(p / "summary.txt");
    write_summary(os, r);
  }
  if (r.pipeline) parallel::write_pipeline_csv((p / "pipeline.csv").string(), *r.pipeline);
  if (r.config.write_dataset) {
    write_dataset_csv(r.train, (p / "train.csv").string());
    write_dataset_csv(r.test, (p / "test.csv").string());
  }
  if (dump_weights) {
    auto os = open(p / "weights.bin", std::ios::out | std::ios::binary);
    write_weights(os, r.W, r.shape);
  }
}

// ---- comparison ----

struct CompareRow {
  std::string label;
  std::string trainer;
  std::string executor;
  int repeats = 0;
  double wall_mean = 0, wall_std = 0;  // seconds
  double mse_mean = 0, mse_std = 0;
};

inline std::pair<double, double> mean_std(const std::vector<double>& x) {
  const double m = std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(x.size());
  double v = 0;
  for (double e : x) v += (e - m) * (e - m);
  return {m, x.size() > 1 ? std::sqrt(v / static_cast<double>(x.size() - 1)) : 0.0};
}

// Repeat r runs with seed + r, so the spread covers data, split and initialization.
inline CompareRow compare_one(const Config& cfg, const std::string& label, int repeats) {
  if (repeats < 1) throw std::invalid_argument("repeats must be >= 1");
  std::vector<double> wall, test;
  for (int rep = 0; rep < repeats; ++rep) {
    Config c = cfg;
    c.seed = cfg.seed + static_cast<std::uint64_t>(rep);
    const auto r = execute(c);
    wall.push_back(static_cast<double>(r.wall_ns) * 1e-9);
    test.push_back(r.final_test_mse);
  }
  CompareRow row;
  row.label = label;
  row.trainer = trainer_name(cfg.trainer);
  row.executor = cfg.parallel ? "parallel" : "serial";
  row.repeats = repeats;
  std::tie(row.wall_mean, row.wall_std) = mean_std(wall);
  std::tie(row.mse_mean, row.mse_std) = mean_std(test);
  return row;
}

inline void write_compare_csv(std::ostream& os, const std::vector<CompareRow>& rows) {
  os << "config,trainer,executor,repeats,wall_s_mean,wall_s_std,test_mse_mean,test_mse_std\n"
     << std::setprecision(10);
  for (const auto& r : rows)
    os << r.label << "," << r.trainer << "," << r.executor << "," << r.repeats << "," << r.wall_mean << ","
       << r.wall_std << "," << r.mse_mean << "," << r.mse_std << "\n";
}

inline void print_compare_table(std::ostream& os, const std::vector<CompareRow>& rows) {
  os << std::left << std::setw(28) << "config" << std::setw(10) << "trainer" << std::setw(10) << "executor"
     << std::setw(5) << "R" << std::setw(26) << "wall_s (mean+-std)" << "test_mse (mean+-std)\n";
  for (const auto& r : rows) {
    std::ostringstream w, m;
    w << std::setprecision(4) << r.wall_mean << " +- " << r.wall_std;
    m << std::setprecision(6) << r.mse_mean << " +- " << r.mse_std;
    os << std::left << std::setw(28) << r.label << std::setw(10) << r.trainer << std::setw(10) << r.executor
       << std::setw(5) << r.repeats << std::setw(26) << w.str() << m.str() << "\n";
  }
}

}  // namespace resadmm::experiment
