#pragma once

#include <cstdint>
#include <fstream>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

namespace resadmm {

struct TraceRecord {
  long k = 0;
  double objective = 0.0;
  double aug_lag = 0.0;
  double aux_lag = 0.0;
  double delta_x = 0.0;
  double grad_lag = 0.0;
  double kkt = 0.0;
  double b1_margin = 0.0;
  double b2_ratio = 0.0;
  std::uint64_t op_count = 0;
  std::int64_t wall_ns = 0;
};

inline const char* trace_csv_header() {
  return "k,objective,aug_lag,aux_lag,delta_x,grad_lag,kkt,b1_margin,b2_ratio,op_count,wall_ns";
}

inline void write_trace_csv(std::ostream& os, const std::vector<TraceRecord>& rows) {
  os << trace_csv_header() << "\n";
  os.precision(17);
  for (const auto& r : rows)
    os << r.k << "," << r.objective << "," << r.aug_lag << "," << r.aux_lag << "," << r.delta_x << ","
       << r.grad_lag << "," << r.kkt << "," << r.b1_margin << "," << r.b2_ratio << "," << r.op_count << ","
       << r.wall_ns << "\n";
}

inline void write_trace_csv(const std::string& path, const std::vector<TraceRecord>& rows) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot write " + path);
  write_trace_csv(f, rows);
}

}  // namespace resadmm
