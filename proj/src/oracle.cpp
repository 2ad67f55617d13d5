#include "fisher/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

namespace fisher {

namespace {

double outer_power(const UtilitySpec& u) {
  if (const auto* c = std::get_if<Ces>(&u.kind)) return 1.0 / c->rho;
  if (const auto* a = std::get_if<AdditiveHomogeneous>(&u.kind)) return a->k;
  throw OracleError("power-family oracle called on a linear-barrier utility");
}

double log_sum_exp(const Vec& a) {
  const double mx = a.maxCoeff();
  return mx + std::log((a.array() - mx).exp().sum());
}

void check_prices(const Vec& p) {
  for (Eigen::Index j = 0; j < p.size(); ++j)
    if (!(p[j] > 0.0) || !std::isfinite(p[j])) throw OracleError("prices must be finite and positive");
}

}  // namespace

Vec BestResponse::dense_x(int n) const {
  Vec out = Vec::Zero(n);
  for (std::size_t k = 0; k < support.size(); ++k) out[support[k]] = x[static_cast<Eigen::Index>(k)];
  return out;
}

Vec BestResponse::dense_gamma(int n) const {
  Vec out = Vec::Zero(n);
  for (std::size_t k = 0; k < support.size(); ++k) out[support[k]] = gamma[static_cast<Eigen::Index>(k)];
  return out;
}

BestResponse ces_best_response(const Vec& p, const UtilitySpec& u, double w) {
  check_prices(p);
  const double r = u.power();
  const double k = outer_power(u);
  BestResponse br;
  for (const SparseEntry& e : u.coefficients)
    if (e.value > 0.0) br.support.push_back(e.index);
  const auto s = static_cast<Eigen::Index>(br.support.size());
  if (s == 0) throw OracleError("utility has no positive coefficient");

  Vec log_c(s), log_p(s);
  Eigen::Index t = 0;
  for (const SparseEntry& e : u.coefficients) {
    if (e.value <= 0.0) continue;
    log_c[t] = std::log(e.value);
    log_p[t] = std::log(p[e.index]);
    ++t;
  }
  // theta-share: c^(1/(1-r)) p^(-r/(1-r)), normalized in the log domain.
  const Vec log_theta = (log_c - r * log_p) / (1.0 - r);
  const double mx = log_theta.maxCoeff();
  Vec g = (log_theta.array() - mx).exp();
  g /= g.sum();
  br.gamma = g;
  br.x.resize(s);
  for (Eigen::Index j = 0; j < s; ++j) br.x[j] = w * g[j] / p[br.support[static_cast<std::size_t>(j)]];
  br.spend = 0.0;
  for (Eigen::Index j = 0; j < s; ++j) br.spend += p[br.support[static_cast<std::size_t>(j)]] * br.x[j];

  const Vec log_terms = log_c + r * br.x.array().log().matrix();
  br.log_utility = k * log_sum_exp(log_terms);
  br.utility = std::exp(br.log_utility);
  if (!std::isfinite(br.log_utility) || !br.x.allFinite() || !std::isfinite(br.spend))
    throw OracleError("non-finite value in power-family best response");
  return br;
}

BestResponse additive_best_response(const Vec& p, const UtilitySpec& u, double w) {
  if (!std::holds_alternative<AdditiveHomogeneous>(u.kind))
    throw OracleError("additive_best_response needs an additive utility");
  return ces_best_response(p, u, w);
}

BestResponse linear_barrier_best_response(const Vec& p, const UtilitySpec& u, double w) {
  check_prices(p);
  const auto* lb = std::get_if<LinearBarrier>(&u.kind);
  if (!lb) throw OracleError("linear_barrier_best_response needs a linear-barrier utility");
  const double sigma = lb->sigma;
  const auto n = p.size();
  const double lambda = (1.0 + sigma * static_cast<double>(n)) / w;

  Vec c = Vec::Zero(n);
  for (const SparseEntry& e : u.coefficients) c[e.index] = e.value;
  Eigen::Index top = -1;
  double u_lo = 0.0;
  for (Eigen::Index j = 0; j < n; ++j)
    if (c[j] > 0.0 && c[j] / (lambda * p[j]) > u_lo) {
      u_lo = c[j] / (lambda * p[j]);
      top = j;
    }
  if (top < 0) throw OracleError("utility has no positive coefficient");

  // With u = u_lo (1 + s), the denominators lambda p_j - c_j / u become
  // gap_j + q_j s / (1 + s), q_j = c_j / u_lo. Working in s avoids the
  // cancellation at the best bang-per-buck goods, where gap_j vanishes.
  Vec q = c / u_lo;
  Vec gap(n);
  for (Eigen::Index j = 0; j < n; ++j) gap[j] = std::max(0.0, lambda * p[j] - q[j]);
  gap[top] = 0.0;
  auto denom = [&](double ss, Eigen::Index j) { return gap[j] + q[j] * (ss / (1.0 + ss)); };
  auto psi = [&](double ss) {
    double acc = 0.0;
    for (Eigen::Index j = 0; j < n; ++j)
      if (c[j] > 0.0) acc += sigma * c[j] / denom(ss, j);
    return acc - u_lo * (1.0 + ss);
  };

  // psi decreases strictly in s on (0, inf), from +inf to -inf.
  const int cap = 200;
  int iters = 0;
  double lo = 1e-8;
  double psi_lo = psi(lo);
  double hi = lo;
  double psi_hi = psi_lo;
  while (!(psi_lo > 0.0) && iters < cap && lo > 1e-300) {
    hi = lo;
    psi_hi = psi_lo;
    lo *= 0.1;
    psi_lo = psi(lo);
    ++iters;
  }
  if (hi == lo) {
    hi = 2.0 * lo;
    psi_hi = psi(hi);
    while (!(psi_hi < 0.0) && iters < cap) {
      lo = hi;
      psi_lo = psi_hi;
      hi *= 2.0;
      psi_hi = psi(hi);
      ++iters;
    }
  }
  if (!(psi_lo > 0.0) || !(psi_hi < 0.0)) {
    std::ostringstream msg;
    msg << "psi root bracket not found: psi(" << u_lo * (1.0 + lo) << ")=" << psi_lo << ", psi("
        << u_lo * (1.0 + hi) << ")=" << psi_hi;
    throw OracleError(msg.str());
  }
  double root = 0.5 * (lo + hi);
  double psi_root = psi(root);
  for (; iters < cap; ++iters) {
    if (std::abs(psi_root) <= 1e-13 * u_lo * (1.0 + root)) break;
    if (psi_root > 0.0) lo = root;
    else hi = root;
    const double mid = 0.5 * (lo + hi);
    if (mid <= lo || mid >= hi) break;
    root = mid;
    psi_root = psi(root);
  }

  BestResponse br;
  br.support.resize(static_cast<std::size_t>(n));
  for (Eigen::Index j = 0; j < n; ++j) br.support[static_cast<std::size_t>(j)] = static_cast<int>(j);
  br.x.resize(n);
  Vec t(n);
  for (Eigen::Index j = 0; j < n; ++j) t[j] = denom(root, j);
  br.x = (sigma / t.array()).matrix();
  const double cx = c.dot(br.x);
  br.gamma = br.x.cwiseProduct(c) / cx;
  br.spend = p.dot(br.x);
  br.log_utility = std::log(cx) + sigma * br.x.array().log().sum();
  br.utility = std::exp(br.log_utility);
  br.demand_scale = 1.0 + sigma * static_cast<double>(n);

  BarrierDual dual;
  dual.lambda = lambda;
  dual.u = u_lo * (1.0 + root);
  dual.psi = psi_root;
  dual.iterations = iters;
  for (Eigen::Index j = 0; j < n; ++j) {
    // sigma / x_j - lambda p_j = t_j - lambda p_j = -c_j / u.
    const double res = std::abs(c[j] / cx + (t[j] - lambda * p[j])) / (lambda * p[j]);
    dual.kkt_residual = std::max(dual.kkt_residual, res);
  }
  br.barrier = dual;
  if (!br.x.allFinite() || !(br.x.minCoeff() > 0.0)) throw OracleError("linear-barrier demand is not positive");
  return br;
}

BestResponse best_response(const MarketInstance& inst, int i, const Vec& p) {
  const auto ui = static_cast<std::size_t>(i);
  const UtilitySpec& u = inst.utilities[ui];
  const double w = inst.budgets[ui];
  if (const Mat* a = inst.constraint(i)) return constrained_best_response(p, u, w, *a);
  if (u.is_linear_barrier()) return linear_barrier_best_response(p, u, w);
  return ces_best_response(p, u, w);
}

MarketState evaluate_market(const MarketInstance& inst, const Vec& p, Exec exec) {
  if (p.size() != inst.n) throw OracleError("price vector length differs from n");
  check_prices(p);
  MarketState st;
  st.p = p;
  st.responses.resize(static_cast<std::size_t>(inst.m()));
  // Exceptions must not escape an OpenMP region; keep the first one.
  std::vector<std::string> errors(static_cast<std::size_t>(inst.m()));
  for_each_index(inst.m(), exec, [&](int i) {
    try {
      st.responses[static_cast<std::size_t>(i)] = best_response(inst, i, p);
    } catch (const std::exception& e) {
      errors[static_cast<std::size_t>(i)] = e.what();
    }
  });
  for (std::size_t i = 0; i < errors.size(); ++i)
    if (!errors[i].empty()) throw OracleError("player " + std::to_string(i) + ": " + errors[i]);
  st.demand = reduce_players(inst.m(), inst.n, exec, [&](int i, Vec& acc) {
    const BestResponse& br = st.responses[static_cast<std::size_t>(i)];
    for (std::size_t k = 0; k < br.support.size(); ++k)
      acc[br.support[k]] += br.demand_scale * br.x[static_cast<Eigen::Index>(k)];
  });
  return st;
}

double potential_weight(const MarketInstance& inst, int i) {
  const auto ui = static_cast<std::size_t>(i);
  const UtilitySpec& u = inst.utilities[ui];
  if (u.is_linear_barrier()) return inst.budgets[ui];
  return inst.budgets[ui] / u.degree();
}

double potential_value(const MarketInstance& inst, const MarketState& st) {
  double v = st.p.sum();
  for (int i = 0; i < inst.m(); ++i)
    v += potential_weight(inst, i) * st.responses[static_cast<std::size_t>(i)].log_utility;
  return v;
}

double potential_value(const MarketInstance& inst, const Vec& p) {
  return potential_value(inst, evaluate_market(inst, p));
}

Vec potential_gradient(const MarketInstance& inst, const Vec& p) { return evaluate_market(inst, p).gradient(); }

namespace {

/// theta-shares c_j x_j^r / sum, on the support.
Vec theta_share(const UtilitySpec& u, const std::vector<int>& support, const Vec& x) {
  const double r = u.power();
  Vec log_t(static_cast<Eigen::Index>(support.size()));
  std::size_t pos = 0;
  for (std::size_t k = 0; k < support.size(); ++k) {
    while (pos < u.coefficients.size() && u.coefficients[pos].index < support[k]) ++pos;
    if (pos >= u.coefficients.size() || u.coefficients[pos].index != support[k] || u.coefficients[pos].value <= 0.0)
      throw OracleError("support index without a positive coefficient");
    log_t[static_cast<Eigen::Index>(k)] = std::log(u.coefficients[pos].value) + r * std::log(x[static_cast<Eigen::Index>(k)]);
  }
  const double mx = log_t.maxCoeff();
  Vec g = (log_t.array() - mx).exp();
  return g / g.sum();
}

}  // namespace

Vec primal_gradient(const UtilitySpec& u, const std::vector<int>& support, const Vec& x) {
  const double d = u.degree();
  const Vec g = theta_share(u, support, x);
  return -d * g.cwiseQuotient(x);
}

Mat primal_hessian(const UtilitySpec& u, const std::vector<int>& support, const Vec& x) {
  const double d = u.degree();
  const double r = u.power();
  const Vec g = theta_share(u, support, x);
  const Vec gx = g.cwiseQuotient(x);
  Mat h = d * r * gx * gx.transpose();
  h.diagonal() += d * (1.0 - r) * gx.cwiseQuotient(x);
  return h;
}

PlayerHessianBlock PlayerHessianBlock::power_family(double w, double r, std::vector<int> support, const Vec& gamma) {
  PlayerHessianBlock b;
  b.support = std::move(support);
  b.r = r;
  b.weight_diag = w / (1.0 - r);
  b.weight_rank1 = w * r / (1.0 - r);
  b.diag = b.weight_diag * gamma;
  b.rank1_weight = b.weight_rank1;
  b.vec = gamma;
  return b;
}

Mat PlayerHessianBlock::to_dense(int n) const {
  Mat out = Mat::Zero(n, n);
  const auto s = static_cast<Eigen::Index>(support.size());
  for (Eigen::Index a = 0; a < s; ++a)
    for (Eigen::Index b = 0; b < s; ++b) {
      double v = is_dense() ? dense(a, b) : -rank1_weight * vec[a] * vec[b];
      if (!is_dense() && a == b) v += diag[a];
      out(support[static_cast<std::size_t>(a)], support[static_cast<std::size_t>(b)]) += v;
    }
  return out;
}

namespace {

PlayerHessianBlock linear_barrier_block(const MarketState& st, const UtilitySpec& u, double w,
                                        const BestResponse& br) {
  const double sigma = std::get<LinearBarrier>(u.kind).sigma;
  const double scale = br.demand_scale;
  const double coef = scale * scale / (w * sigma);
  PlayerHessianBlock b;
  b.support = br.support;
  const auto s = static_cast<Eigen::Index>(br.support.size());
  Vec money(s);
  for (Eigen::Index k = 0; k < s; ++k) money[k] = st.p[br.support[static_cast<std::size_t>(k)]] * br.x[k];
  b.diag = coef * money.cwiseProduct(money);
  b.rank1_weight = coef / (sigma + br.gamma.squaredNorm());
  b.vec = money.cwiseProduct(br.gamma);
  b.r = 1.0;
  return b;
}

/// Projected inverse W^-1 - W^-1 A^T (A W^-1 A^T)^-1 A W^-1 on the support.
Mat projected_inverse(const Mat& wmat, const Mat& as) {
  Eigen::LLT<Mat> llt(wmat);
  if (llt.info() != Eigen::Success) throw OracleError("primal Hessian is not positive definite");
  const Mat winv = llt.solve(Mat::Identity(wmat.rows(), wmat.cols()));
  const Mat wat = winv * as.transpose();
  const Mat schur = as * wat;
  Eigen::LDLT<Mat> ldlt(schur);
  if (ldlt.info() != Eigen::Success || ldlt.rcond() < 1e-14) {
    std::ostringstream msg;
    msg << "A W^-1 A^T is numerically singular (rcond " << ldlt.rcond() << ")";
    throw OracleError(msg.str());
  }
  Mat out = winv - wat * ldlt.solve(wat.transpose());
  return 0.5 * (out + out.transpose());
}

Mat support_columns(const Mat& a, const std::vector<int>& support) {
  Mat as(a.rows(), static_cast<Eigen::Index>(support.size()));
  for (std::size_t k = 0; k < support.size(); ++k) as.col(static_cast<Eigen::Index>(k)) = a.col(support[k]);
  return as;
}

/// M restricted to the support.
Mat constrained_m_support(const MarketInstance& inst, const MarketState& st, int i) {
  const auto ui = static_cast<std::size_t>(i);
  const UtilitySpec& u = inst.utilities[ui];
  const BestResponse& br = st.responses[ui];
  const double d = u.degree();
  const double w = inst.budgets[ui];
  const Mat wmat = primal_hessian(u, br.support, br.x);
  const Mat* a = inst.constraint(i);
  Mat inv;
  if (a) {
    inv = projected_inverse(wmat, support_columns(*a, br.support));
  } else {
    Eigen::LLT<Mat> llt(wmat);
    inv = llt.solve(Mat::Identity(wmat.rows(), wmat.cols()));
  }
  return (d * d) / (w * w) * inv;
}

}  // namespace

std::vector<PlayerHessianBlock> player_hessian_blocks(const MarketInstance& inst, const MarketState& st, Exec exec) {
  std::vector<PlayerHessianBlock> blocks(static_cast<std::size_t>(inst.m()));
  std::vector<std::string> errors(blocks.size());
  for_each_index(inst.m(), exec, [&](int i) {
    const auto ui = static_cast<std::size_t>(i);
    const UtilitySpec& u = inst.utilities[ui];
    const BestResponse& br = st.responses[ui];
    const double w = inst.budgets[ui];
    try {
      if (u.is_linear_barrier()) {
        blocks[ui] = linear_barrier_block(st, u, w, br);
      } else if (inst.constraint(i)) {
        PlayerHessianBlock b;
        b.support = br.support;
        const Mat m = constrained_m_support(inst, st, i);
        Vec ps(static_cast<Eigen::Index>(br.support.size()));
        for (std::size_t k = 0; k < br.support.size(); ++k) ps[static_cast<Eigen::Index>(k)] = st.p[br.support[k]];
        b.dense = (w / u.degree()) * ps.asDiagonal() * m * ps.asDiagonal();
        b.r = u.power();
        blocks[ui] = std::move(b);
      } else {
        blocks[ui] = PlayerHessianBlock::power_family(w, u.power(), br.support, br.gamma);
      }
    } catch (const std::exception& e) {
      errors[ui] = e.what();
    }
  });
  for (std::size_t i = 0; i < errors.size(); ++i)
    if (!errors[i].empty()) throw OracleError("player " + std::to_string(i) + ": " + errors[i]);
  return blocks;
}

Mat demand_jacobian(const MarketInstance& inst, const MarketState& st, int i) {
  const auto ui = static_cast<std::size_t>(i);
  const UtilitySpec& u = inst.utilities[ui];
  const double w = inst.budgets[ui];
  if (inst.constraint(i)) return -(w / u.degree()) * constrained_dual_hessian(inst, st, i);
  // Unscale the block: dx/dp = -P^-1 H_i P^-1 / demand_scale.
  const BestResponse& br = st.responses[ui];
  PlayerHessianBlock b = u.is_linear_barrier() ? linear_barrier_block(st, u, w, br)
                                              : PlayerHessianBlock::power_family(w, u.power(), br.support, br.gamma);
  const Mat h = b.to_dense(inst.n);
  const Vec pinv = st.p.cwiseInverse();
  return -(pinv.asDiagonal() * h * pinv.asDiagonal()) / br.demand_scale;
}

Mat constrained_dual_hessian(const MarketInstance& inst, const MarketState& st, int i) {
  const BestResponse& br = st.responses[static_cast<std::size_t>(i)];
  if (inst.utilities[static_cast<std::size_t>(i)].is_linear_barrier())
    throw OracleError("constrained_dual_hessian needs a power-family utility");
  const Mat ms = constrained_m_support(inst, st, i);
  Mat out = Mat::Zero(inst.n, inst.n);
  for (std::size_t a = 0; a < br.support.size(); ++a)
    for (std::size_t b = 0; b < br.support.size(); ++b)
      out(br.support[a], br.support[b]) = ms(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b));
  return out;
}

PotentialConstants potential_constants(const MarketInstance& inst, const std::vector<const MarketState*>& samples,
                                       double kappa_cap) {
  if (samples.empty()) throw OracleError("potential_constants needs at least one sampled state");
  PotentialConstants pc;
  pc.kappa_estimates.assign(static_cast<std::size_t>(inst.m()), 1.0);
  for (int i = 0; i < inst.m(); ++i) {
    const auto ui = static_cast<std::size_t>(i);
    const UtilitySpec& u = inst.utilities[ui];
    if (u.is_linear_barrier()) throw OracleError("potential constants are defined for power-family utilities only");
    const double w = inst.budgets[ui];
    const double d = u.degree();
    const double r = u.power();
    pc.T_phi += (w / d) * std::max(6.0 * d / ((1.0 - r) * (1.0 - r)), 2.0 * d);
    double kappa = 1.0;
    for (const MarketState* st : samples) {
      const Vec& g = st->responses[ui].gamma;
      for (Eigen::Index k = 0; k < g.size(); ++k)
        if (g[k] > 0.0) kappa = std::max(kappa, 1.0 / g[k]);
    }
    kappa = std::min(kappa, kappa_cap);
    pc.kappa_estimates[ui] = kappa;
    const double c_f = kappa * kappa * kappa / std::sqrt(d) * std::max(2.0, 6.0 * r * r - 6.0 * r + 2.0);
    pc.C_phi = std::max(pc.C_phi, c_f / std::sqrt(w));
  }
  return pc;
}

}  // namespace fisher
