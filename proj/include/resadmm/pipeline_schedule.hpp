#pragma once

#include <algorithm>
#include <cstdint>
#include <functional>
#include <map>
#include <set>
#include <stdexcept>
#include <string>
#include <tuple>
#include <vector>

namespace resadmm::pipeline {

enum class Splitting { two, three };
enum class Var { W, U, V, L };

inline const char* var_name(Var v) {
  switch (v) {
    case Var::W: return "W";
    case Var::U: return "U";
    case Var::V: return "V";
    case Var::L: return "L";
  }
  return "?";
}

struct Ref {
  Var var;
  int layer;
  int offset;  // 0 -> version k, -1 -> version k-1
};

struct OpSpec {
  Var out;
  int layer;
  std::vector<Ref> in;
  bool in_place = false;  // output overwrites the worker's own k-1 buffer of the same variable
  std::string name() const { return std::string(var_name(out)) + std::to_string(layer); }
};

// Program of worker i (1..N) for one epoch, in execution order.
inline std::vector<OpSpec> worker_ops(Splitting sp, int i, int N) {
  using enum Var;
  std::vector<OpSpec> ops;
  if (sp == Splitting::two) {
    if (i < N) {
      ops.push_back({W, i, {{W, i, -1}, {V, i - 1, -1}, {V, i, -1}}});
      if (i <= N - 2)
        ops.push_back({V, i, {{V, i - 1, 0}, {W, i, 0}, {W, i + 1, 0}, {V, i, -1}, {V, i + 1, -1}}});
      else
        ops.push_back({V, i, {{V, i - 1, 0}, {W, i, 0}, {W, N, 0}, {V, N, -1}, {L, N, -1}}});
    } else {
      ops.push_back({W, N, {{V, N - 1, -1}, {V, N, -1}, {L, N, -1}}});
      ops.push_back({V, N, {{W, N, 0}, {V, N - 1, 0}, {L, N, -1}}});
      ops.push_back({L, N, {{L, N, -1}, {W, N, 0}, {V, N - 1, 0}, {V, N, 0}}, true});
    }
  } else {
    if (i < N) {
      ops.push_back({W, i, {{U, i, -1}, {V, i - 1, -1}, {L, i, -1}}});
      ops.push_back({U, i, {{V, i - 1, 0}, {W, i, 0}, {U, i, -1}, {V, i, -1}, {L, i, -1}}});
      if (i <= N - 2)
        ops.push_back({V, i, {{V, i - 1, 0}, {U, i, 0}, {U, i + 1, -1}, {V, i + 1, -1}, {W, i + 1, 0}, {L, i + 1, -1}}});
      else
        ops.push_back({V, i, {{V, i - 1, 0}, {U, i, 0}, {W, N, 0}, {V, N, -1}, {L, N, -1}}});
      ops.push_back({L, i, {{L, i, -1}, {W, i, 0}, {V, i - 1, 0}, {U, i, 0}}});
    } else {
      ops.push_back({W, N, {{V, N - 1, -1}, {V, N, -1}, {L, N, -1}}});
      ops.push_back({V, N, {{W, N, 0}, {V, N - 1, 0}, {L, N, -1}}});
      ops.push_back({L, N, {{L, N, -1}, {W, N, 0}, {V, N - 1, 0}, {V, N, 0}}});
    }
  }
  return ops;
}

inline std::size_t var_entries(Var v, int layer, int N, std::size_t d, std::size_t q, std::size_t n) {
  const bool last = layer == N;
  switch (v) {
    case Var::W: return (last ? q : d) * d;
    case Var::U: return d * n;
    case Var::V:
    case Var::L: return (last ? q : d) * n;
  }
  return 0;
}

// Identity of a stored matrix for memory accounting: in-place buffers drop the version.
struct StoreKey {
  Var var;
  int layer;
  long version;  // -1 for an in-place buffer
  auto operator<=>(const StoreKey&) const = default;
};

// Variables a worker updates in place: every local reference maps to one buffer.
inline std::set<std::pair<Var, int>> in_place_vars(const std::vector<OpSpec>& prog) {
  std::set<std::pair<Var, int>> s;
  for (const auto& op : prog)
    if (op.in_place) s.insert({op.out, op.layer});
  return s;
}

// Storage keys touched by one op in epoch k (inputs then output).
inline std::vector<StoreKey> op_store_keys(const OpSpec& op, const std::set<std::pair<Var, int>>& buffers, long k) {
  std::vector<StoreKey> keys;
  for (const auto& r : op.in)
    keys.push_back({r.var, r.layer, buffers.count({r.var, r.layer}) ? -1 : k + r.offset});
  keys.push_back({op.out, op.layer, buffers.count({op.out, op.layer}) ? -1 : k});
  return keys;
}

// Entries of the union of matrices worker i touches during one epoch.
inline std::size_t epoch_working_set(Splitting sp, int worker, int N, std::size_t d, std::size_t q, std::size_t n) {
  std::set<StoreKey> keys;
  const auto prog = worker_ops(sp, worker, N);
  const auto buffers = in_place_vars(prog);
  for (const auto& op : prog)
    for (const auto& key : op_store_keys(op, buffers, 5)) keys.insert(key);
  std::size_t t = 0;
  for (const auto& key : keys) t += var_entries(key.var, key.layer, N, d, q, n);
  return t;
}

struct ProgramStep {
  long epoch;
  OpSpec op;
};

// Worker i's full op sequence over K epochs, epoch-major in listing order.
inline std::vector<ProgramStep> worker_program(Splitting sp, int i, int N, long K) {
  const auto ops = worker_ops(sp, i, N);
  std::vector<ProgramStep> prog;
  for (long k = 1; k <= K; ++k)
    for (const auto& op : ops) prog.push_back({k, op});
  return prog;
}

// serial unit count: one slot per block update
inline long serial_units(Splitting sp, long K, int N) {
  return sp == Splitting::two ? K * (2L * N + 1) : K * (4L * N - 1);
}

struct ScheduledOp {
  int worker;
  long epoch;
  std::string op;
  std::int64_t start, end;
};

// As-soon-as-possible schedule: an op starts when its inputs exist and its
// worker is free; `duration` gives the length of an op (1 for the unit model).
inline std::vector<ScheduledOp> simulate_schedule(Splitting sp, long K, int N,
                                                  const std::function<std::int64_t(const OpSpec&)>& duration) {
  std::map<std::tuple<Var, int, long>, std::int64_t> ready;  // produced versions -> end slot
  auto ready_at = [&](Var v, int layer, long ver) -> std::int64_t {
    if (v == Var::V && layer == 0) return 0;
    if (ver <= 0) return 0;
    auto it = ready.find({v, layer, ver});
    return it == ready.end() ? -1 : it->second;
  };
  std::vector<std::vector<ProgramStep>> prog;
  for (int w = 1; w <= N; ++w) prog.push_back(worker_program(sp, w, N, K));
  std::vector<std::size_t> pc(static_cast<std::size_t>(N), 0);
  std::vector<std::int64_t> clock(static_cast<std::size_t>(N), 0);
  std::vector<ScheduledOp> out;
  bool progress = true;
  while (progress) {
    progress = false;
    for (int w = 1; w <= N; ++w) {
      const auto u = static_cast<std::size_t>(w - 1);
      while (pc[u] < prog[u].size()) {
        const auto& [k, op] = prog[u][pc[u]];
        std::int64_t start = clock[u];
        bool ok = true;
        for (const auto& r : op.in) {
          const auto t = ready_at(r.var, r.layer, k + r.offset);
          if (t < 0) {
            ok = false;
            break;
          }
          start = std::max(start, t);
        }
        if (!ok) break;
        const std::int64_t end = start + duration(op);
        ready[{op.out, op.layer, k}] = end;
        out.push_back({w, k, op.name(), start, end});
        clock[u] = end;
        progress = true;
        ++pc[u];
      }
    }
  }
  for (std::size_t u = 0; u < pc.size(); ++u)
    if (pc[u] < prog[u].size()) throw std::logic_error("pipeline schedule: dependency cycle");
  return out;
}

inline std::int64_t makespan_of(const std::vector<ScheduledOp>& ops) {
  std::int64_t m = 0;
  for (const auto& o : ops) m = std::max(m, o.end);
  return m;
}

}  // namespace resadmm::pipeline
