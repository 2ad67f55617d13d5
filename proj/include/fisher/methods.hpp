#pragma once

#include "fisher/baselines.hpp"

#include <optional>
#include <string>
#include <vector>

namespace fisher {

/// Solvers selectable by name: logbar, logbar-pcg, pathfol, tat, propres.
enum class Method { LogBar, LogBarPCG, PathFol, Tat, PropRes };

const char* to_string(Method m);
Method method_from_string(const std::string& name);
bool is_interior_point(Method m);

struct MethodOptions {
  double eps = 1e-7;
  std::optional<SolverMode> hessian;  // unset: DR1 where it applies, else the direct exact solve
  double Q = 0.25;
  std::optional<double> sigma_override;
  bool theory_strict = false;
  std::optional<double> beta;  // PathFol; set together with gamma
  std::optional<double> gamma;
  std::optional<double> c_phi;  // unset: sampled estimate at p0
  bool c_phi_formula = false;   // use the kappa-based constant instead of sampling
  double step = 0.1;
  std::optional<double> eps_k;
  RunControls run;
};

/// DR1 needs unconstrained power-family players.
SolverMode default_solver_mode(const MarketInstance& inst);

/// Throws std::invalid_argument for settings the method cannot use.
SolveResult solve_market(const MarketInstance& inst, Method method, const MethodOptions& opt);

/// High-precision reference prices: LogBar at eps = 1e-12, with the direct
/// solve up to n = 512 and DR1 plus a Newton polish above. Throws on failure.
Vec reference_prices(const MarketInstance& inst, Exec exec = default_exec());

struct BenchRow {
  int n = 0;
  int m = 0;
  double rho = 0.0;
  std::string method;
  std::string status;  // Reached, TimedOut, MaxIters, Failed, unavailable
  bool inaccurate = false;  // final_dist above target when the run ended
  double time_s = 0.0;
  double final_dist = TraceRow::nan;
  int iters = 0;
};

/// Runs one method until |p - p*|_2 <= target or the controls stop it;
/// every trace row carries dist.
BenchRow bench_method(const MarketInstance& inst, Method method, const MethodOptions& opt, const Vec& p_star,
                      double target, SolveTrace* trace_out = nullptr);

std::string bench_header();
std::string bench_row_csv(const BenchRow& row);

}  // namespace fisher
