#pragma once

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <exception>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <ostream>
#include <set>
#include <stdexcept>
#include <string>
#include <thread>
#include <tuple>
#include <utility>
#include <vector>

#include "admm2.hpp"
#include "admm3.hpp"
#include "pipeline_schedule.hpp"

namespace resadmm::parallel {

using pipeline::OpSpec;
using pipeline::Ref;
using pipeline::Splitting;
using pipeline::Var;

struct Payload {
  std::shared_ptr<const Matrix> m;
  std::int64_t end_slot = 0;  // logical time the value became available
};

struct BoardEvent {
  enum Kind { write, read } kind;
  int worker;  // 0 = coordinator
  Var var;
  int layer;
  long version;
};

struct Aborted : std::runtime_error {
  Aborted() : std::runtime_error("pipeline aborted") {}
};

// Versioned write-once slots. At most two versions of a name are resident:
// writing version k waits until every scheduled read of version k-2 is done.
class Board {
 public:
  using Key = std::tuple<Var, int, long>;

  void expect_reads(const Key& key, int n) { expected_[key] += n; }

  void write(int worker, Var v, int layer, long ver, Payload p) {
    std::unique_lock lk(mu_);
    const Key key{v, layer, ver};
    if (written_.count(key)) throw std::logic_error("slot written twice: " + name(key));
    cv_.wait(lk, [&] { return aborted_ || !blocked_by_old(v, layer, ver); });
    if (aborted_) throw Aborted();
    for (auto it = slots_.begin(); it != slots_.end();) {
      const auto& [kv, kl, kver] = it->first;
      if (kv == v && kl == layer && kver <= ver - 2)
        it = slots_.erase(it);
      else
        ++it;
    }
    const auto e = expected_.find(key);
    slots_[key] = Entry{std::move(p), e == expected_.end() ? 0 : e->second};
    written_.insert(key);
    if (log_) events_.push_back({BoardEvent::write, worker, v, layer, ver});
    cv_.notify_all();
  }

  Payload read(int worker, Var v, int layer, long ver) {
    std::unique_lock lk(mu_);
    const Key key{v, layer, ver};
    cv_.wait(lk, [&] { return aborted_ || slots_.count(key) > 0; });
    if (aborted_) throw Aborted();
    auto& e = slots_.at(key);
    if (e.reads_remaining <= 0) throw std::logic_error("unscheduled read of " + name(key));
    --e.reads_remaining;
    if (log_) events_.push_back({BoardEvent::read, worker, v, layer, ver});
    Payload p = e.p;
    if (e.reads_remaining == 0) cv_.notify_all();
    return p;
  }

  // Coordinator access after all workers joined; not counted.
  const Matrix& peek(Var v, int layer, long ver) const { return *slots_.at(Key{v, layer, ver}).p.m; }

  void abort() {
    std::lock_guard lk(mu_);
    aborted_ = true;
    cv_.notify_all();
  }
  void enable_log(bool on) { log_ = on; }
  const std::vector<BoardEvent>& events() const { return events_; }

 private:
  struct Entry {
    Payload p;
    int reads_remaining = 0;
  };
  bool blocked_by_old(Var v, int layer, long ver) const {
    for (const auto& [key, e] : slots_) {
      const auto& [kv, kl, kver] = key;
      if (kv == v && kl == layer && kver <= ver - 2 && e.reads_remaining > 0) return true;
    }
    return false;
  }
  static std::string name(const Key& k) {
    return std::string(pipeline::var_name(std::get<0>(k))) + std::to_string(std::get<1>(k)) + "^" +
           std::to_string(std::get<2>(k));
  }

  std::mutex mu_;
  std::condition_variable cv_;
  std::map<Key, Entry> slots_;
  std::map<Key, int> expected_;
  std::set<Key> written_;
  std::vector<BoardEvent> events_;
  bool aborted_ = false;
  bool log_ = false;
};

struct PipelineRow {
  int worker;
  long epoch;
  std::string op;
  std::int64_t start_slot, end_slot;
  std::size_t resident_entries;  // working set of the worker so far in this epoch
  std::int64_t wall_ns;
};

struct PipelineTrace {
  std::vector<PipelineRow> rows;
  std::vector<std::size_t> high_water;  // per worker 1..N
  std::vector<BoardEvent> events;       // only when logging is on
};

inline std::int64_t makespan(const PipelineTrace& t) {
  std::int64_t m = 0;
  for (const auto& r : t.rows) m = std::max(m, r.end_slot);
  return m;
}

inline std::vector<std::size_t> per_node_memory(const PipelineTrace& t) { return t.high_water; }

inline void write_pipeline_csv(std::ostream& os, const PipelineTrace& t) {
  os << "worker,epoch,op,start_slot,end_slot,resident_entries\n";
  for (const auto& r : t.rows)
    os << r.worker << "," << r.epoch << "," << r.op << "," << r.start_slot << "," << r.end_slot << ","
       << r.resident_entries << "\n";
}

inline void write_pipeline_csv(const std::string& path, const PipelineTrace& t) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot write " + path);
  write_pipeline_csv(f, t);
}

struct SpeedupModel {
  long serial_units;
  std::int64_t parallel_units;
};

inline SpeedupModel speedup_model(long K, int N, Splitting sp) {
  const auto sched = pipeline::simulate_schedule(sp, K, N, [](const OpSpec&) { return 1; });
  return {pipeline::serial_units(sp, K, N), pipeline::makespan_of(sched)};
}

struct RunOptions {
  bool log_events = false;
};

namespace detail {

using Inputs = std::vector<const Matrix*>;
using Compute = std::function<Matrix(const OpSpec&, long epoch, const Inputs&)>;

// Initial (version 0) values keyed by (var, layer).
using Initial = std::map<std::pair<Var, int>, Matrix>;

inline bool is_constant(const Ref& r) { return r.var == Var::V && r.layer == 0; }

// Runs N workers over K epochs; leaves every final value on `board`.
inline PipelineTrace run_pipeline(Splitting sp, int N, long K, const Matrix& X, const Initial& init,
                                  const Compute& compute, Board& board, const RunOptions& opt) {
  PipelineTrace trace;
  trace.high_water.assign(static_cast<std::size_t>(N), 0);
  board.enable_log(opt.log_events);

  std::vector<std::vector<pipeline::ProgramStep>> progs;
  for (int w = 1; w <= N; ++w) progs.push_back(pipeline::worker_program(sp, w, N, K));
  for (const auto& prog : progs)
    for (const auto& [k, op] : prog)
      for (const auto& r : op.in)
        if (!is_constant(r)) board.expect_reads({r.var, r.layer, k + r.offset}, 1);
  for (const auto& [key, m] : init)
    board.write(0, key.first, key.second, 0, Payload{std::make_shared<const Matrix>(m), 0});

  std::vector<std::vector<PipelineRow>> rows(static_cast<std::size_t>(N));
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(N));
  std::atomic<bool> failed{false};

  auto worker = [&](int w) {
    const auto u = static_cast<std::size_t>(w - 1);
    try {
      const auto& prog = progs[u];
      const auto buffers = pipeline::in_place_vars(pipeline::worker_ops(sp, w, N));
      std::int64_t clock = 0;
      long cur_epoch = -1;
      std::map<pipeline::StoreKey, std::size_t> touched;
      std::size_t resident = 0;
      for (const auto& [k, op] : prog) {
        if (k != cur_epoch) {
          cur_epoch = k;
          touched.clear();
          resident = 0;
        }
        std::vector<Payload> held;  // keeps payloads alive while computing
        held.reserve(op.in.size());
        Inputs ordered;
        std::int64_t start = clock;
        for (const auto& r : op.in) {
          if (is_constant(r)) {
            ordered.push_back(&X);
            continue;
          }
          held.push_back(board.read(w, r.var, r.layer, k + r.offset));
          ordered.push_back(held.back().m.get());
          start = std::max(start, held.back().end_slot);
        }
        const auto t0 = std::chrono::steady_clock::now();
        Matrix out = compute(op, k, ordered);
        const auto t1 = std::chrono::steady_clock::now();
        if (!all_finite(out))
          throw NumericalError("worker " + std::to_string(w) + ": non-finite " + op.name() + " at epoch " +
                               std::to_string(k) + "; last good epoch " + std::to_string(k - 1));
        const std::size_t out_entries = out.size();
        const std::int64_t end = start + 1;
        clock = end;
        // working-set accounting over the union of matrices touched this epoch
        const auto keys = pipeline::op_store_keys(op, buffers, k);
        for (std::size_t q = 0; q < keys.size(); ++q) {
          const std::size_t entries = q + 1 < keys.size() ? ordered[q]->size() : out_entries;
          if (touched.emplace(keys[q], entries).second) resident += entries;
        }
        trace.high_water[u] = std::max(trace.high_water[u], resident);
        rows[u].push_back({w, k, op.name(), start, end, resident,
                           std::chrono::duration_cast<std::chrono::nanoseconds>(t1 - t0).count()});
        board.write(w, op.out, op.layer, k, Payload{std::make_shared<const Matrix>(std::move(out)), end});
      }
    } catch (const Aborted&) {
      // another worker failed first
    } catch (...) {
      errors[u] = std::current_exception();
      failed = true;
      board.abort();
    }
  };

  std::vector<std::thread> threads;
  for (int w = 1; w <= N; ++w) threads.emplace_back(worker, w);
  for (auto& t : threads) t.join();
  if (failed)
    for (auto& e : errors)
      if (e) std::rethrow_exception(e);

  for (auto& r : rows) trace.rows.insert(trace.rows.end(), r.begin(), r.end());
  std::stable_sort(trace.rows.begin(), trace.rows.end(), [](const PipelineRow& a, const PipelineRow& b) {
    return std::tie(a.start_slot, a.worker) < std::tie(b.start_slot, b.worker);
  });
  trace.events = board.events();
  return trace;
}

}  // namespace detail

struct Result2 {
  admm2::State state;
  PipelineTrace trace;
};

struct Result3 {
  admm3::State state;
  PipelineTrace trace;
};

// Pipelined 2-splitting run: worker i owns W_i, V_i (and Lambda on worker N).
// Epoch k reads the schedules at index init.k + k - 1, exactly like the serial cycle.
inline Result2 run_parallel_2s(const admm2::State& init, const NetworkShape& shape, const Dataset& data,
                               const admm2::Hyper& h, long K, const RunOptions& opt = {}) {
  if (K <= 0) return {init, {}};
  const int N = shape.N;
  const bool pp = h.variant == Variant::prox_point;
  detail::Initial ini;
  for (int i = 1; i <= N; ++i) {
    ini[{Var::W, i}] = admm2::w_at(init, i);
    ini[{Var::V, i}] = init.V[static_cast<std::size_t>(i - 1)];
  }
  ini[{Var::L, N}] = init.Lambda;

  const detail::Compute compute = [&](const OpSpec& op, long k, const detail::Inputs& in) -> Matrix {
    const long sk = init.k + k - 1;
    const int i = op.layer;
    switch (op.out) {
      case Var::W:
        if (i == N) return admm2::kernel::w_last(*in[0], *in[1], *in[2], h.lambda, h.beta);
        if (pp)
          return admm2::kernel::w_hidden_prox_point(*in[0], *in[1], *in[2], shape.act(i), h.lambda, h.mu,
                                                    h.omega.at(sk), h.inner)
              .x;
        return admm2::kernel::w_hidden_prox_grad(*in[0], *in[1], *in[2], shape.act(i), h.lambda, h.mu, h.tau.at(sk));
      case Var::V:
        if (i == N) return admm2::kernel::v_last(data.Y, *in[0], *in[1], *in[2], h.beta);
        if (i == N - 1)
          return admm2::kernel::v_penultimate(*in[0], *in[1], *in[2], *in[3], *in[4], shape.act(i), h.mu, h.beta);
        if (pp)
          return admm2::kernel::v_hidden_prox_point(*in[0], *in[1], *in[2], *in[3], *in[4], shape.act(i),
                                                    shape.act(i + 1), h.mu, h.nu.at(sk), h.inner)
              .x;
        return admm2::kernel::v_hidden_prox_grad(*in[0], *in[1], *in[2], *in[3], *in[4], shape.act(i),
                                                 shape.act(i + 1), h.mu, h.iota.at(sk));
      case Var::L:
        return admm2::kernel::dual(*in[0], *in[1], *in[2], *in[3], h.beta);
      case Var::U:
        break;
    }
    throw std::logic_error("2s pipeline: unexpected op " + op.name());
  };

  Board board;
  Result2 res;
  res.trace = detail::run_pipeline(Splitting::two, N, K, data.X, ini, compute, board, opt);
  res.state = init;
  for (int i = 1; i <= N; ++i) {
    res.state.W[static_cast<std::size_t>(i - 1)] = board.peek(Var::W, i, K);
    res.state.V[static_cast<std::size_t>(i - 1)] = board.peek(Var::V, i, K);
  }
  res.state.Lambda = board.peek(Var::L, N, K);
  res.state.k = init.k + K;
  return res;
}

// Pipelined 3-splitting run: worker i owns W_i, U_i, V_i, Lambda_i.
inline Result3 run_parallel_3s(const admm3::State& init, const NetworkShape& shape, const Dataset& data,
                               const admm3::Hyper& h, long K, const RunOptions& opt = {}) {
  if (K <= 0) return {init, {}};
  const int N = shape.N;
  const bool pp = h.variant == Variant::prox_point;
  detail::Initial ini;
  for (int i = 1; i <= N; ++i) {
    ini[{Var::W, i}] = admm3::w_at(init, i);
    ini[{Var::V, i}] = init.V[static_cast<std::size_t>(i - 1)];
    ini[{Var::L, i}] = admm3::l_at(init, i);
    if (i < N) ini[{Var::U, i}] = admm3::u_at(init, i);
  }

  const detail::Compute compute = [&](const OpSpec& op, long k, const detail::Inputs& in) -> Matrix {
    const long sk = init.k + k - 1;
    const int i = op.layer;
    switch (op.out) {
      case Var::W:
        // inputs: T (U_i or V_N), V_{i-1}, Lambda_i in listing order
        if (i == N) return admm3::kernel::w_update(*in[0], *in[1], *in[2], h.lambda, h.b(N));
        return admm3::kernel::w_update(*in[1], *in[0], *in[2], h.lambda, h.b(i));
      case Var::U: {
        const Matrix& Vin = *in[0];
        const Matrix Z = matmul(*in[1], Vin);
        if (pp)
          return admm3::kernel::u_prox_point(Vin, *in[2], *in[3], Z, *in[4], shape.act(i), h.mu, h.b(i),
                                             h.omega.at(sk), h.u_tol);
        return admm3::kernel::u_prox_grad(Vin, *in[2], *in[3], Z, *in[4], shape.act(i), h.mu, h.b(i), h.tau.at(sk));
      }
      case Var::V:
        if (i == N) return admm3::kernel::v_last(data.Y, *in[0], *in[1], *in[2], h.b(N));
        if (i == N - 1)
          return admm3::kernel::v_penultimate(*in[0], *in[1], *in[2], *in[3], *in[4], shape.act(i), h.mu, h.b(N));
        return admm3::kernel::v_hidden(*in[0], *in[1], *in[2], *in[3], *in[4], *in[5], shape.act(i),
                                       shape.act(i + 1), h.mu, h.b(i + 1));
      case Var::L:
        if (i == N) return admm3::kernel::dual_last(*in[0], *in[1], *in[2], *in[3], h.b(N));
        return admm3::kernel::dual_hidden(*in[0], *in[1], *in[2], *in[3], h.b(i));
    }
    throw std::logic_error("3s pipeline: unexpected op " + op.name());
  };

  Board board;
  Result3 res;
  res.trace = detail::run_pipeline(Splitting::three, N, K, data.X, ini, compute, board, opt);
  auto& s = res.state;
  s = init;
  for (int i = 1; i <= N; ++i) {
    const auto u = static_cast<std::size_t>(i - 1);
    s.W[u] = board.peek(Var::W, i, K);
    s.V[u] = board.peek(Var::V, i, K);
    s.Lambda[u] = board.peek(Var::L, i, K);
    if (i < N) {
      s.U[u] = board.peek(Var::U, i, K);
      s.U_lag[u] = board.peek(Var::U, i, K - 1);
      s.V_lag[u] = board.peek(Var::V, i, K - 1);
    }
  }
  s.k = init.k + K;
  return res;
}

}  // namespace resadmm::parallel
