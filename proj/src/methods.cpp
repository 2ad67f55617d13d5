#include "fisher/methods.hpp"

#include "fisher/io.hpp"

#include <chrono>
#include <cmath>
#include <sstream>
#include <stdexcept>

namespace fisher {

const char* to_string(Method m) {
  switch (m) {
    case Method::LogBar: return "logbar";
    case Method::LogBarPCG: return "logbar-pcg";
    case Method::PathFol: return "pathfol";
    case Method::Tat: return "tat";
    case Method::PropRes: return "propres";
  }
  return "?";
}

Method method_from_string(const std::string& name) {
  for (Method m : {Method::LogBar, Method::LogBarPCG, Method::PathFol, Method::Tat, Method::PropRes})
    if (name == to_string(m)) return m;
  throw std::invalid_argument("unknown method '" + name + "'");
}

bool is_interior_point(Method m) { return m == Method::LogBar || m == Method::LogBarPCG || m == Method::PathFol; }

SolverMode default_solver_mode(const MarketInstance& inst) {
  if (inst.has_constraints()) return SolverMode::ExactDirect;
  for (const auto& u : inst.utilities)
    if (u.is_linear_barrier()) return SolverMode::ExactDirect;
  return SolverMode::DR1;
}

namespace {

PathFolConfig pathfol_config(const MarketInstance& inst, const MethodOptions& opt, const Vec& p0) {
  if (opt.beta.has_value() != opt.gamma.has_value())
    throw std::invalid_argument("beta and gamma must be given together");
  double c_phi = 0.0;
  if (opt.c_phi) {
    c_phi = *opt.c_phi;
  } else if (opt.c_phi_formula) {
    const MarketState st = evaluate_market(inst, p0, opt.run.exec);
    c_phi = potential_constants(inst, {&st}).C_phi;
  } else {
    c_phi = pathfol_practical_c_phi(inst, p0);
  }
  PathFolConfig cfg = pathfol_select_params(c_phi, opt.eps);
  if (opt.beta) {
    const PathFolCertificate cert = pathfol_certificate(*opt.beta, *opt.gamma, cfg.certificate.delta);
    if (!cert.feasible) {
      std::ostringstream msg;
      msg << "(beta, gamma) = (" << *opt.beta << ", " << *opt.gamma << ") fails the parameter certificate at delta "
          << cfg.certificate.delta;
      throw std::invalid_argument(msg.str());
    }
    cfg.beta = *opt.beta;
    cfg.gamma_step = *opt.gamma;
    cfg.certificate = cert;
  }
  cfg.hessian = opt.hessian.value_or(default_solver_mode(inst));
  if (opt.eps_k) cfg.eps_k = *opt.eps_k;
  cfg.run = opt.run;
  return cfg;
}

}  // namespace

SolveResult solve_market(const MarketInstance& inst, Method method, const MethodOptions& opt) {
  switch (method) {
    case Method::LogBar:
    case Method::LogBarPCG: {
      LogBarConfig cfg;
      cfg.Q = opt.Q;
      cfg.eps = opt.eps;
      cfg.sigma_override = opt.sigma_override;
      cfg.theory_strict = opt.theory_strict;
      cfg.hessian = opt.hessian.value_or(method == Method::LogBarPCG ? SolverMode::ExactPCG : default_solver_mode(inst));
      if (opt.eps_k) cfg.eps_k = *opt.eps_k;
      cfg.run = opt.run;
      return logbar_run(inst, cfg);
    }
    case Method::PathFol: {
      const Vec p0 = pathfol_default_p0(inst);
      return pathfol_run(inst, pathfol_config(inst, opt, p0), p0);
    }
    case Method::Tat: {
      BaselineConfig cfg;
      cfg.step = opt.step;
      cfg.eps = opt.eps;
      cfg.run = opt.run;
      return tat_run(inst, cfg, pathfol_default_p0(inst));
    }
    case Method::PropRes: {
      BaselineConfig cfg;
      cfg.method = BaselineMethod::PropRes;
      cfg.eps = opt.eps;
      cfg.run = opt.run;
      return propres_run(inst, cfg, default_bids(inst));
    }
  }
  throw std::invalid_argument("unknown method");
}

Vec reference_prices(const MarketInstance& inst, Exec exec) {
  LogBarConfig cfg;
  cfg.eps = 1e-12;
  cfg.run.exec = exec;
  cfg.run.max_iters = 100000;
  const bool direct = inst.n <= 512;
  cfg.hessian = direct ? SolverMode::ExactDirect : default_solver_mode(inst);
  if (!direct) cfg.eps = 1e-9;
  SolveResult res = logbar_run(inst, cfg);
  if (res.trace.status != SolveStatus::Converged)
    throw std::runtime_error("reference run did not converge: " + res.trace.message);
  if (!direct) {
    res = newton_polish(inst, res.p, 1e-12);
    if (res.trace.status != SolveStatus::Converged)
      throw std::runtime_error("reference polish did not converge: " + res.trace.message);
  }
  return res.p;
}

BenchRow bench_method(const MarketInstance& inst, Method method, const MethodOptions& opt, const Vec& p_star,
                      double target, SolveTrace* trace_out) {
  BenchRow row;
  row.n = inst.n;
  row.m = inst.m();
  row.method = to_string(method);
  MethodOptions run_opt = opt;
  // The distance target decides when to stop, not the gradient.
  run_opt.eps = std::min(opt.eps, 1e-12);
  run_opt.run.observer = [&](const Vec& p, TraceRow& r) {
    r.dist = (p - p_star).norm();
    return r.dist <= target;
  };
  const auto start = std::chrono::steady_clock::now();
  SolveResult res;
  try {
    res = solve_market(inst, method, run_opt);
  } catch (const std::exception& e) {
    res.trace.status = SolveStatus::NumericalFailure;
    res.trace.message = e.what();
  }
  row.time_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  row.iters = res.trace.iterations();
  if (res.p.size() == inst.n) row.final_dist = (res.p - p_star).norm();
  row.inaccurate = !(row.final_dist <= target);
  switch (res.trace.status) {
    case SolveStatus::Converged: row.status = row.inaccurate ? "Stopped" : "Reached"; break;
    case SolveStatus::MaxIters: row.status = res.trace.message == "time limit reached" ? "TimedOut" : "MaxIters"; break;
    case SolveStatus::NumericalFailure: row.status = "Failed"; break;
  }
  if (trace_out) *trace_out = std::move(res.trace);
  return row;
}

std::string bench_header() { return "n,m,rho,method,status,time_s,final_dist,iters,mark\n"; }

std::string bench_row_csv(const BenchRow& r) {
  std::ostringstream out;
  out << r.n << ',' << r.m << ',' << format_double(r.rho) << ',' << r.method << ',' << r.status << ','
      << format_double(r.time_s) << ',' << (std::isnan(r.final_dist) ? "" : format_double(r.final_dist)) << ','
      << r.iters << ',' << (r.inaccurate && r.status != "unavailable" ? "†" : "") << '\n';
  return out.str();
}

}  // namespace fisher
