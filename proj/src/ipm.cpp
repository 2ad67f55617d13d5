#include "fisher/ipm.hpp"

#include "fisher/io.hpp"

#include <json.hpp>

#include <chrono>
#include <cmath>
#include <sstream>

namespace fisher {

const char* to_string(SolverMode m) {
  switch (m) {
    case SolverMode::ExactDirect: return "exact";
    case SolverMode::DR1: return "dr1";
    case SolverMode::ExactPCG: return "pcg";
  }
  return "exact";
}

namespace {

using Clock = std::chrono::steady_clock;

double elapsed_ms(Clock::time_point start) {
  return std::chrono::duration<double, std::milli>(Clock::now() - start).count();
}

/// Factored (H~ + mu I) for one iterate.
class NewtonSystem {
 public:
  NewtonSystem(const ScaledHessianOp& op, SolverMode mode, double mu, double eps_k, int pcg_max)
      : op_(op), mode_(mode), mu_(mu), eps_k_(eps_k), pcg_max_(pcg_max) {
    if (mode_ == SolverMode::ExactDirect) {
      Mat h = op_.dense_exact();
      h.diagonal().array() += mu_;
      llt_.compute(h);
      if (llt_.info() != Eigen::Success) {
        ldlt_.compute(h);
        use_ldlt_ = true;
        if (ldlt_.info() != Eigen::Success) throw HessianError("Newton matrix factorization failed");
      }
    }
  }

  Vec solve(const Vec& rhs) {
    Vec d;
    switch (mode_) {
      case SolverMode::ExactDirect:
        d = use_ldlt_ ? Vec(ldlt_.solve(rhs)) : Vec(llt_.solve(rhs));
        break;
      case SolverMode::DR1:
        try {
          d = dr1_solve(op_, mu_, rhs);
        } catch (const SingularUpdateError&) {
          fallback_ = true;
          d = pcg(rhs);
        }
        break;
      case SolverMode::ExactPCG:
        d = pcg(rhs);
        break;
    }
    if (!d.allFinite()) throw HessianError("Newton step is not finite");
    return d;
  }

  int pcg_iters() const { return pcg_iters_; }
  bool fell_back() const { return fallback_; }

 private:
  Vec pcg(const Vec& rhs) {
    const ScaledHessianOp exact = op_.mode() == HessianMode::Exact ? op_ : op_.with_mode(HessianMode::Exact);
    PcgOptions opt;
    opt.eps_k = eps_k_;
    opt.max_iters = pcg_max_;
    const PcgResult r = pcg_solve(exact, Vec::Constant(op_.n(), mu_), rhs, opt);
    pcg_iters_ += r.iterations;
    return r.d;
  }

  const ScaledHessianOp& op_;
  SolverMode mode_;
  double mu_;
  double eps_k_;
  int pcg_max_;
  Eigen::LLT<Mat> llt_;
  Eigen::LDLT<Mat> ldlt_;
  bool use_ldlt_ = false;
  bool fallback_ = false;
  int pcg_iters_ = 0;
};

HessianMode assembly_mode(SolverMode m) { return m == SolverMode::DR1 ? HessianMode::DR1 : HessianMode::Exact; }

void check_mode(const MarketInstance& inst, SolverMode mode) {
  if (mode == SolverMode::DR1 && inst.has_constraints())
    throw std::invalid_argument("the DR1 Hessian is unavailable for constrained markets; use exact or pcg");
}

/// Scales d so that min(1 + d) >= eta. Returns true when it had to.
bool apply_safeguard(Vec& d, double eta) {
  const double lo = d.minCoeff();
  if (1.0 + lo >= eta) return false;
  d *= (1.0 - eta) / (-lo);
  return true;
}

double max_kkt(const MarketState& st) {
  double k = TraceRow::nan;
  for (const auto& br : st.responses) {
    double v = TraceRow::nan;
    if (br.barrier) v = br.barrier->kkt_residual;
    else if (br.constrained) v = br.constrained->stationarity;
    if (!std::isnan(v)) k = std::isnan(k) ? v : std::max(k, v);
  }
  return k;
}

void fill_gradient(TraceRow& row, const Vec& g) {
  row.grad_inf = g.lpNorm<Eigen::Infinity>();
  row.grad_l2 = g.norm();
}

bool out_of_time(const RunControls& rc, Clock::time_point start) {
  return rc.time_limit_s > 0.0 && elapsed_ms(start) > 1000.0 * rc.time_limit_s;
}

}  // namespace

double logbar_sigma(double Q, int n) {
  const double rn = std::sqrt(static_cast<double>(n));
  return (Q + rn) / (2.0 * Q + rn);
}

double theory_strict_Q(double T_phi, int n, double eps) {
  return eps / (14.0 * eps + 4.0 * T_phi * (std::sqrt(static_cast<double>(n)) + 1.0));
}

double potential_T_phi(const MarketInstance& inst) {
  double t = 0.0;
  for (int i = 0; i < inst.m(); ++i) {
    const auto& u = inst.utilities[static_cast<std::size_t>(i)];
    if (u.is_linear_barrier()) throw std::invalid_argument("T_phi is defined for power-family utilities only");
    const double r = u.power();
    t += inst.budgets[static_cast<std::size_t>(i)] * std::max(6.0 / ((1.0 - r) * (1.0 - r)), 2.0);
  }
  return t;
}

LogBarInit logbar_init(const MarketInstance& inst, double Q) {
  if (!(Q > 0.0 && Q < 0.5)) throw std::invalid_argument("Q must lie in (0, 1/2)");
  const double total = inst.total_budget();
  auto at = [&](double mu) {
    LogBarInit init;
    init.mu0 = mu;
    init.p0 = Vec::Constant(inst.n, mu);
    const MarketState st = evaluate_market(inst, init.p0);
    const Vec r = init.p0.cwiseProduct(st.gradient()).array() - mu;
    init.residual = r.norm() / mu;
    return init;
  };
  LogBarInit init = at(std::sqrt(total / Q));
  if (!(init.residual <= Q) && total / Q > init.mu0) {
    init = at(total / Q);
    init.widened = true;
  }
  if (!(init.residual <= Q)) {
    std::ostringstream msg;
    msg << "initial point is outside the neighborhood: residual " << init.residual << " > Q " << Q;
    throw OracleError(msg.str());
  }
  return init;
}

SolveResult logbar_run(const MarketInstance& inst, const LogBarConfig& cfg) {
  check_mode(inst, cfg.hessian);
  if (!(cfg.eps > 0.0)) throw std::invalid_argument("eps must be positive");
  if (!(cfg.eta > 0.0 && cfg.eta < 1.0)) throw std::invalid_argument("eta must lie in (0, 1)");
  const int n = inst.n;
  double Q = cfg.Q;
  if (cfg.theory_strict) Q = theory_strict_Q(potential_T_phi(inst), n, cfg.eps);
  if (!(Q > 0.0 && Q < 0.5)) throw std::invalid_argument("Q must lie in (0, 1/2)");
  const double sigma = cfg.sigma_override.value_or(logbar_sigma(Q, n));
  if (!(sigma > 0.0 && sigma < 1.0)) throw std::invalid_argument("sigma must lie in (0, 1)");
  const double rn = std::sqrt(static_cast<double>(n));

  const auto start = Clock::now();
  SolveResult res;
  SolveTrace& tr = res.trace;
  LogBarInit init;
  try {
    init = logbar_init(inst, Q);
  } catch (const OracleError& e) {
    tr.status = SolveStatus::NumericalFailure;
    tr.message = e.what();
    res.p = Vec::Constant(n, inst.total_budget() / Q);
    return res;
  }
  Vec p = init.p0;
  double mu = init.mu0;
  try {
    MarketState st = evaluate_market(inst, p, cfg.run.exec);
    for (int k = 0;; ++k) {
      const Vec g = st.gradient();
      const Vec pg = p.cwiseProduct(g);
      TraceRow row;
      row.k = k;
      row.homotopy = mu;
      fill_gradient(row, g);
      row.nbhd_resid = (pg.array() - mu).matrix().norm() / mu;
      row.max_kkt = max_kkt(st);
      const bool stop_requested = cfg.run.observer && cfg.run.observer(p, row);
      // Inside C(mu, Q) every |p_j g_j| <= (1 + Q) mu, so this threshold certifies |grad|_inf <= eps.
      const bool mu_done = row.nbhd_resid <= Q && mu <= cfg.eps * p.minCoeff() / (1.0 + rn);
      if (row.grad_inf <= cfg.eps || mu_done || stop_requested) {
        row.wall_ms = elapsed_ms(start);
        tr.rows.push_back(row);
        tr.status = SolveStatus::Converged;
        break;
      }
      if (k >= cfg.run.max_iters || out_of_time(cfg.run, start)) {
        row.wall_ms = elapsed_ms(start);
        tr.rows.push_back(row);
        tr.status = SolveStatus::MaxIters;
        if (k < cfg.run.max_iters) tr.message = "time limit reached";
        break;
      }

      // Outside C(mu, 2Q) the shrink is skipped and the step only recenters.
      const bool hold = row.nbhd_resid > 2.0 * Q;
      const double mu_next = hold ? mu : sigma * mu;
      row.nbhd_resid_shrunk = (pg.array() - mu_next).matrix().norm() / mu_next;
      const ScaledHessianOp op = ScaledHessianOp::assemble(inst, st, assembly_mode(cfg.hessian), cfg.run.exec);
      NewtonSystem sys(op, cfg.hessian, mu_next, cfg.eps_k, cfg.pcg_max_iters);
      const Vec rhs = -(pg.array() - mu_next).matrix();
      Vec d = sys.solve(rhs);
      row.pcg_iters = sys.pcg_iters();
      row.used_fallback = sys.fell_back();
      tr.fallbacks += row.used_fallback ? 1 : 0;
      row.safeguard = apply_safeguard(d, cfg.eta);
      tr.safeguard_activations += row.safeguard ? 1 : 0;

      // The full step is kept when it lands in C(mu_next, 2Q). Otherwise
      // backtrack on the barrier merit phi - mu_next sum log p.
      Vec p_next = p.cwiseProduct((1.0 + d.array()).matrix());
      MarketState st_next = evaluate_market(inst, p_next, cfg.run.exec);
      auto resid = [&](const Vec& pp, const MarketState& s) {
        return (pp.cwiseProduct(s.gradient()).array() - mu_next).matrix().norm() / mu_next;
      };
      bool shortened = false;
      if (!(resid(p_next, st_next) <= 2.0 * Q)) {
        auto merit = [&](const Vec& pp, const MarketState& s) {
          return potential_value(inst, s) - mu_next * pp.array().log().sum();
        };
        const double f0 = merit(p, st);
        const double slope = -rhs.dot(d);  // directional derivative in scaled coordinates
        double alpha = 1.0;
        for (int ls = 0; ls < 40 && !(merit(p_next, st_next) <= f0 + 1e-4 * alpha * slope); ++ls) {
          alpha *= 0.5;
          p_next = p.cwiseProduct((1.0 + alpha * d.array()).matrix());
          st_next = evaluate_market(inst, p_next, cfg.run.exec);
          shortened = true;
        }
        d *= alpha;
      }
      row.recentered = hold || shortened;
      tr.recentering_steps += row.recentered ? 1 : 0;
      row.step_norm = d.norm();
      p = std::move(p_next);
      st = std::move(st_next);
      mu = mu_next;
      row.wall_ms = elapsed_ms(start);
      tr.rows.push_back(row);
    }
  } catch (const std::invalid_argument&) {
    throw;
  } catch (const std::exception& e) {
    tr.status = SolveStatus::NumericalFailure;
    tr.message = e.what();
  }
  res.p = p;
  return res;
}

namespace {

/// omega_*(t) = -t - log(1 - t).
double omega_star(double t) { return -t - std::log1p(-t); }

}  // namespace

PathFolCertificate pathfol_certificate(double beta, double gamma, double delta) {
  PathFolCertificate c;
  c.beta = beta;
  c.gamma = gamma;
  c.delta = delta;
  const double s = beta + gamma;
  const double rd = std::sqrt(1.0 + delta);
  const double denom = 1.0 - s * rd;
  const bool basic = s < 1.0 && beta < 0.3 && gamma < 1.0 && gamma > 2.0 * beta && delta >= 0.0 && denom > 0.0;
  if (denom > 0.0) c.c12c_lhs = (1.0 + delta) * s * s / (denom * denom) + delta * s * rd / denom;
  else c.c12c_lhs = std::numeric_limits<double>::infinity();
  c.c12d_lhs = gamma * (0.3 - beta) / 2.0;
  c.c12d_rhs = s < 1.0 ? omega_star(s) : std::numeric_limits<double>::infinity();
  c.feasible = basic && c.c12c_lhs <= beta && c.c12d_lhs > c.c12d_rhs;
  return c;
}

PathFolConfig pathfol_select_params(double c_phi, double eps, double delta_target) {
  if (!std::isfinite(c_phi) || !(c_phi > 0.0)) throw std::invalid_argument("C_phi must be finite and positive");
  PathFolConfig cfg;
  cfg.c_phi = c_phi;
  cfg.eps = eps;
  cfg.delta_target = delta_target;
  const double delta = std::min(delta_target, c_phi * eps / 2.0);
  for (double beta = 0.01; beta >= 1e-8; beta *= 0.5) {
    const PathFolCertificate c = pathfol_certificate(beta, 4.0 * beta, delta);
    if (c.feasible) {
      cfg.beta = beta;
      cfg.gamma_step = 4.0 * beta;
      cfg.certificate = c;
      return cfg;
    }
  }
  throw std::invalid_argument("no feasible (beta, gamma) pair above beta = 1e-8");
}

PathFolConfig pathfol_select_params(const PotentialConstants& constants, double eps, double delta_target) {
  return pathfol_select_params(constants.C_phi, eps, delta_target);
}

double pathfol_practical_c_phi(const MarketInstance& inst, const Vec& p0) {
  return std::max(1.0, sampled_self_concordance(inst, p0));
}

Vec pathfol_default_p0(const MarketInstance& inst) {
  return Vec::Constant(inst.n, inst.total_budget() / static_cast<double>(inst.n));
}

SolveResult pathfol_run(const MarketInstance& inst, const PathFolConfig& cfg, const Vec& p0) {
  check_mode(inst, cfg.hessian);
  if (p0.size() != inst.n || !(p0.minCoeff() > 0.0)) throw std::invalid_argument("p0 must be a positive n-vector");
  if (!(cfg.c_phi > 0.0)) throw std::invalid_argument("C_phi must be positive");
  const double mu_floor = 1e-12;
  const double delta_cert = cfg.certificate.delta > 0.0 ? cfg.certificate.delta
                                                        : std::min(cfg.delta_target, cfg.c_phi * cfg.eps / 2.0);
  const auto start = Clock::now();
  SolveResult res;
  SolveTrace& tr = res.trace;
  Vec p = p0;
  double t = 1.0;
  try {
    MarketState st = evaluate_market(inst, p, cfg.run.exec);
    const Vec g0 = st.gradient();
    for (int k = 0;; ++k) {
      const Vec g = st.gradient();
      const Vec pg = p.cwiseProduct(g);
      const Vec s0 = p.cwiseProduct(g0);
      TraceRow row;
      row.k = k;
      row.homotopy = t;
      fill_gradient(row, g);
      row.max_kkt = max_kkt(st);

      SolverMode mode = cfg.hessian;
      ScaledHessianOp op = ScaledHessianOp::assemble(inst, st, assembly_mode(mode), cfg.run.exec);
      if (mode == SolverMode::DR1) {
        // delta = eps_H max_i(kappa_i / d_i); fall back to exact PCG above the certificate.
        double ratio = 0.0;
        for (int i = 0; i < inst.m(); ++i) {
          const auto& br = st.responses[static_cast<std::size_t>(i)];
          const auto& u = inst.utilities[static_cast<std::size_t>(i)];
          const double kappa = std::min(1e4, 1.0 / br.gamma.minCoeff());
          ratio = std::max(ratio, kappa / (u.is_linear_barrier() ? 1.0 : u.degree()));
        }
        const double delta = dr1_error_norm(op, 10) * ratio;
        if (delta > delta_cert) {
          mode = SolverMode::ExactPCG;
          row.used_fallback = true;
          ++tr.fallbacks;
        }
      }
      NewtonSystem sys(op, mode, mu_floor, cfg.eps_k, cfg.pcg_max_iters);
      const Vec y_g = sys.solve(pg);
      const Vec y_0 = sys.solve(s0);
      row.decrement = std::sqrt(std::max(0.0, pg.dot(y_g)));
      const Vec centered = pg - t * s0;
      row.nbhd_resid = std::sqrt(std::max(0.0, centered.dot(y_g - t * y_0)));
      if (t > 0.0 && row.nbhd_resid > cfg.beta / cfg.c_phi) ++tr.centering_warnings;

      const bool stop_requested = cfg.run.observer && cfg.run.observer(p, row);
      if (row.grad_inf <= cfg.eps || (t == 0.0 && row.decrement <= cfg.eps / 2.0) || stop_requested) {
        row.pcg_iters = sys.pcg_iters();
        row.wall_ms = elapsed_ms(start);
        tr.rows.push_back(row);
        tr.status = SolveStatus::Converged;
        break;
      }
      if (k >= cfg.run.max_iters || out_of_time(cfg.run, start)) {
        row.pcg_iters = sys.pcg_iters();
        row.wall_ms = elapsed_ms(start);
        tr.rows.push_back(row);
        tr.status = SolveStatus::MaxIters;
        if (k < cfg.run.max_iters) tr.message = "time limit reached";
        break;
      }

      const double anchor = std::sqrt(std::max(0.0, s0.dot(y_0)));
      const double t_next = anchor > 0.0 ? std::max(t - cfg.gamma_step / (cfg.c_phi * anchor), 0.0) : 0.0;
      Vec d = -(y_g - t_next * y_0);
      row.pcg_iters = sys.pcg_iters();
      row.safeguard = apply_safeguard(d, cfg.eta);
      tr.safeguard_activations += row.safeguard ? 1 : 0;
      row.step_norm = d.norm();
      p = p.cwiseProduct((1.0 + d.array()).matrix());
      t = t_next;
      st = evaluate_market(inst, p, cfg.run.exec);
      row.wall_ms = elapsed_ms(start);
      tr.rows.push_back(row);
    }
  } catch (const std::invalid_argument&) {
    throw;
  } catch (const std::exception& e) {
    tr.status = SolveStatus::NumericalFailure;
    tr.message = e.what();
  }
  res.p = p;
  return res;
}

double newton_decrement(const ScaledHessianOp& op, const Vec& g) {
  const SolverMode mode = op.mode() == HessianMode::DR1 ? SolverMode::DR1 : SolverMode::ExactPCG;
  NewtonSystem sys(op, mode, 1e-12, 1e-10, 10 * op.n());
  return std::sqrt(std::max(0.0, g.dot(sys.solve(g))));
}

double newton_decrement(const MarketInstance& inst, const Vec& p, HessianMode mode) {
  const MarketState st = evaluate_market(inst, p);
  const ScaledHessianOp op = ScaledHessianOp::assemble(inst, st, mode);
  return newton_decrement(op, p.cwiseProduct(st.gradient()));
}

SolveResult newton_polish(const MarketInstance& inst, const Vec& p_start, double eps, int max_iters) {
  const auto start = Clock::now();
  SolveResult res;
  SolveTrace& tr = res.trace;
  Vec p = p_start;
  const SolverMode mode = inst.n <= 512 ? SolverMode::ExactDirect : SolverMode::ExactPCG;
  try {
    for (int k = 0;; ++k) {
      const MarketState st = evaluate_market(inst, p);
      const Vec g = st.gradient();
      TraceRow row;
      row.k = k;
      fill_gradient(row, g);
      if (row.grad_inf <= eps || k >= max_iters) {
        row.wall_ms = elapsed_ms(start);
        tr.rows.push_back(row);
        tr.status = row.grad_inf <= eps ? SolveStatus::Converged : SolveStatus::MaxIters;
        break;
      }
      const ScaledHessianOp op = ScaledHessianOp::assemble(inst, st, HessianMode::Exact);
      NewtonSystem sys(op, mode, 1e-14, 1e-14, 10 * inst.n);
      Vec d = sys.solve(-p.cwiseProduct(g));
      row.pcg_iters = sys.pcg_iters();
      row.safeguard = apply_safeguard(d, 0.01);
      row.step_norm = d.norm();
      p = p.cwiseProduct((1.0 + d.array()).matrix());
      row.wall_ms = elapsed_ms(start);
      tr.rows.push_back(row);
    }
  } catch (const std::exception& e) {
    tr.status = SolveStatus::NumericalFailure;
    tr.message = e.what();
  }
  res.p = p;
  return res;
}

EquilibriumCertificate equilibrium_certificate(const MarketInstance& inst, const Vec& p, double eps) {
  EquilibriumCertificate c;
  c.eps = eps;
  const MarketState st = evaluate_market(inst, p);
  const Vec g = st.gradient();
  c.grad_inf = g.lpNorm<Eigen::Infinity>();
  c.grad_l2 = g.norm();
  Vec plain_demand = Vec::Zero(inst.n);
  double sigma_max = 0.0;
  for (int i = 0; i < inst.m(); ++i) {
    const auto ui = static_cast<std::size_t>(i);
    const BestResponse& br = st.responses[ui];
    const double w = inst.budgets[ui];
    const double b = std::abs(br.spend - w) / w;
    c.budget_residuals.push_back(b);
    c.max_budget_residual = std::max(c.max_budget_residual, b);
    double kkt = 0.0;
    if (br.barrier) kkt = br.barrier->kkt_residual;
    if (br.constrained) kkt = br.constrained->stationarity;
    c.kkt_residuals.push_back(kkt);
    c.max_kkt_residual = std::max(c.max_kkt_residual, kkt);
    if (const auto* lb = std::get_if<LinearBarrier>(&inst.utilities[ui].kind)) {
      c.linear_barrier = true;
      sigma_max = std::max(sigma_max, lb->sigma);
    }
    for (std::size_t k = 0; k < br.support.size(); ++k) plain_demand[br.support[k]] += br.x[static_cast<Eigen::Index>(k)];
  }
  c.clearing_error = (plain_demand.array() - 1.0).abs().maxCoeff();
  if (c.linear_barrier) {
    const double sn = sigma_max * inst.n;
    c.clearing_bound = (eps + sn) / (1.0 + sn);
  }
  return c;
}

std::string certificate_to_json(const EquilibriumCertificate& c) {
  nlohmann::json j;
  j["grad_inf"] = c.grad_inf;
  j["grad_l2"] = c.grad_l2;
  j["eps"] = c.eps;
  j["max_budget_residual"] = c.max_budget_residual;
  j["budget_residuals"] = c.budget_residuals;
  j["max_kkt_residual"] = c.max_kkt_residual;
  j["kkt_residuals"] = c.kkt_residuals;
  j["clearing_error"] = c.clearing_error;
  if (c.linear_barrier) j["clearing_bound"] = c.clearing_bound;
  return j.dump(1) + "\n";
}

}  // namespace fisher
