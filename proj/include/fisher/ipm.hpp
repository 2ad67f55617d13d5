#pragma once

#include "fisher/hessian.hpp"
#include "fisher/trace.hpp"

#include <functional>
#include <optional>
#include <string>

namespace fisher {

/// How the Newton system is solved.
enum class SolverMode { ExactDirect, DR1, ExactPCG };

const char* to_string(SolverMode m);

/// Called once per iteration with the current iterate and its trace row.
/// May fill row.dist; returning true ends the run as Converged.
using IterationObserver = std::function<bool(const Vec& p, TraceRow& row)>;

struct RunControls {
  int max_iters = 1000;
  double time_limit_s = 0.0;  // 0 disables
  Exec exec = default_exec();
  IterationObserver observer;
};

struct SolveResult {
  Vec p;
  SolveTrace trace;
};

struct LogBarConfig {
  double Q = 0.25;
  double eps = 1e-7;
  std::optional<double> sigma_override;
  bool theory_strict = false;  // replaces Q with the worst-case choice
  SolverMode hessian = SolverMode::DR1;
  double eps_k = 1e-10;
  int pcg_max_iters = 0;  // 0 means n
  double eta = 0.01;
  RunControls run;
};

/// Shrink factor (Q + sqrt n) / (2Q + sqrt n).
double logbar_sigma(double Q, int n);
/// eps / (14 eps + 4 T_phi (sqrt n + 1)).
double theory_strict_Q(double T_phi, int n, double eps);
/// Sum over players of w_i max{6/(1-r_i)^2, 2}; needs no price data.
double potential_T_phi(const MarketInstance& inst);

struct LogBarInit {
  double mu0 = 0.0;
  Vec p0;
  double residual = 0.0;  // |P0 grad phi(p0) - mu0 1| / mu0
  bool widened = false;   // sqrt(sum w / Q) missed the neighborhood; mu0 = sum w / Q
};

/// mu0 = sqrt(sum w / Q), p0 = mu0 1, with membership in C(mu0, Q) checked.
/// The residual at mu 1 equals |sum x(mu 1)|_2 <= sum w / mu, so when the
/// square-root start misses, mu0 = sum w / Q is used instead, which always lands.
LogBarInit logbar_init(const MarketInstance& inst, double Q);

SolveResult logbar_run(const MarketInstance& inst, const LogBarConfig& cfg);

struct PathFolCertificate {
  double beta = 0.0;
  double gamma = 0.0;
  double delta = 0.0;
  double c12c_lhs = 0.0;  // must be <= beta
  double c12d_lhs = 0.0;  // gamma (0.3 - beta) / 2, must exceed c12d_rhs
  double c12d_rhs = 0.0;  // omega_*(beta + gamma)
  bool feasible = false;
};

/// Evaluates the four parameter inequalities for (beta, gamma, delta).
PathFolCertificate pathfol_certificate(double beta, double gamma, double delta);

struct PathFolConfig {
  double beta = 0.01;
  double gamma_step = 0.04;
  double delta_target = 1e-3;
  double c_phi = 1.0;
  double eps = 1e-7;
  SolverMode hessian = SolverMode::DR1;
  double eps_k = 1e-12;
  int pcg_max_iters = 0;
  double eta = 0.01;
  PathFolCertificate certificate;
  RunControls run;
};

/// Starts at (0.01, 0.04) and halves both, keeping gamma = 4 beta, until the
/// certificate holds with delta = min(delta_target, C_phi eps / 2).
PathFolConfig pathfol_select_params(double c_phi, double eps, double delta_target = 1e-3);
PathFolConfig pathfol_select_params(const PotentialConstants& constants, double eps, double delta_target = 1e-3);

/// Practical C_phi: the sampled self-concordance ratio at p0, floored at 1.
double pathfol_practical_c_phi(const MarketInstance& inst, const Vec& p0);

/// Default anchor (sum w / n) 1.
Vec pathfol_default_p0(const MarketInstance& inst);

SolveResult pathfol_run(const MarketInstance& inst, const PathFolConfig& cfg, const Vec& p0);

/// sqrt(g^T H~^-1 g) for g = P grad phi(p), with H~ regularized by 1e-12.
double newton_decrement(const ScaledHessianOp& op, const Vec& scaled_gradient);
double newton_decrement(const MarketInstance& inst, const Vec& p, HessianMode mode);

/// Pure Newton steps with the exact operator until |grad phi|_inf <= eps.
SolveResult newton_polish(const MarketInstance& inst, const Vec& p, double eps, int max_iters = 50);

struct EquilibriumCertificate {
  double grad_inf = 0.0;
  double grad_l2 = 0.0;
  double max_budget_residual = 0.0;  // max_i |<p, x_i> - w_i| / w_i
  std::vector<double> budget_residuals;
  double max_kkt_residual = 0.0;  // barrier or constrained stationarity, when applicable
  std::vector<double> kkt_residuals;
  bool linear_barrier = false;
  double clearing_error = 0.0;  // |sum x_i - 1|_inf
  double clearing_bound = 0.0;  // (eps + sigma n) / (1 + sigma n)
  double eps = 0.0;
};

EquilibriumCertificate equilibrium_certificate(const MarketInstance& inst, const Vec& p, double eps = 0.0);
std::string certificate_to_json(const EquilibriumCertificate& c);

}  // namespace fisher
