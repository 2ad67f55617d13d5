#include "fisher/trace.hpp"

#include "fisher/io.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

namespace fisher {

const char* to_string(SolveStatus s) {
  switch (s) {
    case SolveStatus::Converged: return "Converged";
    case SolveStatus::MaxIters: return "MaxIters";
    case SolveStatus::NumericalFailure: return "NumericalFailure";
  }
  return "NumericalFailure";
}

SolveStatus status_from_string(const std::string& s) {
  if (s == "Converged") return SolveStatus::Converged;
  if (s == "MaxIters") return SolveStatus::MaxIters;
  if (s == "NumericalFailure") return SolveStatus::NumericalFailure;
  throw std::invalid_argument("unknown solve status '" + s + "'");
}

bool SolveTrace::has_dist() const {
  for (const auto& r : rows)
    if (!std::isnan(r.dist)) return true;
  return false;
}

namespace {
const char* kHeader = "k,homotopy,grad_inf,grad_l2,nbhd_resid,decrement,step_norm,pcg_iters,wall_ms";

double parse_field(const std::string& s) {
  if (s.empty()) return TraceRow::nan;
  return std::stod(s);
}

std::string field(double v) { return std::isnan(v) ? std::string() : format_double(v); }
}  // namespace

std::string trace_to_csv(const SolveTrace& trace) {
  const bool dist = trace.has_dist();
  std::ostringstream out;
  out << kHeader << (dist ? ",dist" : "") << "\n";
  for (const TraceRow& r : trace.rows) {
    out << r.k << ',' << field(r.homotopy) << ',' << field(r.grad_inf) << ',' << field(r.grad_l2) << ','
        << field(r.nbhd_resid) << ',' << field(r.decrement) << ',' << field(r.step_norm) << ',' << r.pcg_iters << ','
        << field(r.wall_ms);
    if (dist) out << ',' << field(r.dist);
    out << "\n";
  }
  out << "# status=" << to_string(trace.status) << "\n";
  return out.str();
}

SolveTrace trace_from_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line.rfind(kHeader, 0) != 0) throw std::runtime_error("trace CSV: bad header");
  const bool dist = line.size() > std::string(kHeader).size();
  SolveTrace t;
  bool status_seen = false;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    if (line.rfind("# status=", 0) == 0) {
      t.status = status_from_string(line.substr(9));
      status_seen = true;
      continue;
    }
    std::vector<std::string> f;
    std::string cur;
    std::istringstream ls(line);
    while (std::getline(ls, cur, ',')) f.push_back(cur);
    if (!line.empty() && line.back() == ',') f.emplace_back();
    if (f.size() != (dist ? 10u : 9u)) throw std::runtime_error("trace CSV: wrong field count");
    TraceRow r;
    r.k = std::stoi(f[0]);
    r.homotopy = parse_field(f[1]);
    r.grad_inf = parse_field(f[2]);
    r.grad_l2 = parse_field(f[3]);
    r.nbhd_resid = parse_field(f[4]);
    r.decrement = parse_field(f[5]);
    r.step_norm = parse_field(f[6]);
    r.pcg_iters = std::stoi(f[7]);
    r.wall_ms = parse_field(f[8]);
    if (dist) r.dist = parse_field(f[9]);
    t.rows.push_back(r);
  }
  if (!status_seen) throw std::runtime_error("trace CSV: missing status line");
  return t;
}

}  // namespace fisher
