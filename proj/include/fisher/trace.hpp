#pragma once

#include <limits>
#include <string>
#include <vector>

namespace fisher {

enum class SolveStatus { Converged, MaxIters, NumericalFailure };

const char* to_string(SolveStatus s);
SolveStatus status_from_string(const std::string& s);

struct TraceRow {
  static constexpr double nan = std::numeric_limits<double>::quiet_NaN();

  int k = 0;
  double homotopy = nan;  // mu for LogBar, t for PathFol, step size for baselines
  double grad_inf = nan;
  double grad_l2 = nan;
  double nbhd_resid = nan;
  double decrement = nan;
  double step_norm = nan;
  int pcg_iters = 0;
  double wall_ms = 0.0;
  double dist = nan;  // distance to a reference price, written only when present

  // In-memory diagnostics, not part of the CSV.
  double nbhd_resid_shrunk = nan;  // LogBar: residual of p_k against mu_{k+1}
  double max_kkt = nan;            // largest oracle KKT residual at p_k
  bool safeguard = false;
  bool used_fallback = false;
  bool recentered = false;  // LogBar held mu or shortened the Newton step
};

struct SolveTrace {
  std::vector<TraceRow> rows;
  SolveStatus status = SolveStatus::MaxIters;
  std::string message;
  int safeguard_activations = 0;
  int centering_warnings = 0;
  int fallbacks = 0;
  int recentering_steps = 0;

  bool has_dist() const;
  int iterations() const { return rows.empty() ? 0 : rows.back().k; }
};

std::string trace_to_csv(const SolveTrace& trace);
SolveTrace trace_from_csv(const std::string& text);

}  // namespace fisher
