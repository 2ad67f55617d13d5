#include "fisher/baselines.hpp"

#include <chrono>
#include <cmath>

namespace fisher {

namespace {

using Clock = std::chrono::steady_clock;

double elapsed_ms(Clock::time_point start) {
  return std::chrono::duration<double, std::milli>(Clock::now() - start).count();
}

bool out_of_time(const RunControls& rc, Clock::time_point start) {
  return rc.time_limit_s > 0.0 && elapsed_ms(start) > 1000.0 * rc.time_limit_s;
}

}  // namespace

SolveResult tat_run(const MarketInstance& inst, const BaselineConfig& cfg, const Vec& p0) {
  if (!(cfg.step >= 0.0 && cfg.step < 1.0)) throw std::invalid_argument("tatonnement step must lie in [0, 1)");
  if (p0.size() != inst.n || !(p0.minCoeff() > 0.0)) throw std::invalid_argument("p0 must be a positive n-vector");
  const auto start = Clock::now();
  SolveResult res;
  SolveTrace& tr = res.trace;
  Vec p = p0;
  try {
    for (int k = 0;; ++k) {
      const MarketState st = evaluate_market(inst, p, cfg.run.exec);
      const Vec z = -st.gradient();
      TraceRow row;
      row.k = k;
      row.homotopy = cfg.step;
      row.grad_inf = z.lpNorm<Eigen::Infinity>();
      row.grad_l2 = z.norm();
      const bool stop_requested = cfg.run.observer && cfg.run.observer(p, row);
      if (row.grad_inf <= cfg.eps || stop_requested) {
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
      const Vec factor = (1.0 + cfg.step * z.array().min(1.0)).matrix();
      row.step_norm = (factor.array() - 1.0).matrix().norm();
      p = p.cwiseProduct(factor);
      row.wall_ms = elapsed_ms(start);
      tr.rows.push_back(row);
      if (!p.allFinite() || p.lpNorm<Eigen::Infinity>() > 1e12) {
        tr.status = SolveStatus::NumericalFailure;
        tr.message = "tatonnement diverged";
        break;
      }
    }
  } catch (const std::exception& e) {
    tr.status = SolveStatus::NumericalFailure;
    tr.message = e.what();
  }
  res.p = p;
  return res;
}

namespace {

void require_power_family(const MarketInstance& inst) {
  if (inst.has_constraints()) throw std::invalid_argument("proportional response needs an unconstrained market");
  for (const auto& u : inst.utilities)
    if (u.is_linear_barrier()) throw std::invalid_argument("proportional response needs power-family utilities");
}

}  // namespace

BidMatrix default_bids(const MarketInstance& inst) {
  require_power_family(inst);
  BidMatrix b;
  b.goods.resize(static_cast<std::size_t>(inst.m()));
  b.bids.resize(static_cast<std::size_t>(inst.m()));
  for (int i = 0; i < inst.m(); ++i) {
    const auto ui = static_cast<std::size_t>(i);
    std::vector<double> vals;
    double total = 0.0;
    for (const auto& e : inst.utilities[ui].coefficients) {
      if (e.value <= 0.0) continue;
      b.goods[ui].push_back(e.index);
      vals.push_back(e.value);
      total += e.value;
    }
    b.bids[ui] = Eigen::Map<Vec>(vals.data(), static_cast<Eigen::Index>(vals.size())) * (inst.budgets[ui] / total);
  }
  return b;
}

BidMatrix bids_at(const MarketInstance& inst, const Vec& p) {
  require_power_family(inst);
  const MarketState st = evaluate_market(inst, p);
  BidMatrix b;
  for (int i = 0; i < inst.m(); ++i) {
    const auto& br = st.responses[static_cast<std::size_t>(i)];
    b.goods.push_back(br.support);
    b.bids.push_back(br.gamma * inst.budgets[static_cast<std::size_t>(i)]);
  }
  return b;
}

Vec bid_prices(const MarketInstance& inst, const BidMatrix& b) {
  Vec p = Vec::Zero(inst.n);
  for (std::size_t i = 0; i < b.goods.size(); ++i)
    for (std::size_t k = 0; k < b.goods[i].size(); ++k) p[b.goods[i][k]] += b.bids[i][static_cast<Eigen::Index>(k)];
  return p;
}

SolveResult propres_run(const MarketInstance& inst, const BaselineConfig& cfg, const BidMatrix& b0,
                        BidMatrix* final_bids) {
  require_power_family(inst);
  if (b0.goods.size() != static_cast<std::size_t>(inst.m())) throw std::invalid_argument("bid matrix has the wrong player count");
  const auto start = Clock::now();
  SolveResult res;
  SolveTrace& tr = res.trace;
  BidMatrix b = b0;
  Vec p = bid_prices(inst, b);
  try {
    for (int k = 0;; ++k) {
      if (!(p.minCoeff() > 0.0)) throw OracleError("a demanded good has zero price under the current bids");
      const MarketState st = evaluate_market(inst, p, cfg.run.exec);
      TraceRow row;
      row.k = k;
      const Vec g = st.gradient();
      row.grad_inf = g.lpNorm<Eigen::Infinity>();
      row.grad_l2 = g.norm();
      const bool stop_requested = cfg.run.observer && cfg.run.observer(p, row);
      if (stop_requested) {
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
      for_each_index(inst.m(), cfg.run.exec, [&](int i) {
        const auto ui = static_cast<std::size_t>(i);
        const UtilitySpec& u = inst.utilities[ui];
        const double rho = u.power();
        const auto& goods = b.goods[ui];
        Vec& bid = b.bids[ui];
        const auto s = bid.size();
        // log of c_ij x_ij^rho, with x_ij = b_ij / p_j.
        Vec score(s);
        std::size_t pos = 0;
        for (Eigen::Index k2 = 0; k2 < s; ++k2) {
          const int j = goods[static_cast<std::size_t>(k2)];
          while (u.coefficients[pos].index < j) ++pos;
          const double x = bid[k2] / p[j];
          score[k2] = (x > 0.0) ? std::log(u.coefficients[pos].value) + rho * std::log(x)
                                : -std::numeric_limits<double>::infinity();
        }
        if (rho < 0.0) {
          const double eta = 1.0 / (1.0 - rho);
          for (Eigen::Index k2 = 0; k2 < s; ++k2)
            score[k2] = bid[k2] > 0.0 ? (1.0 - eta) * std::log(bid[k2]) + eta * score[k2]
                                      : -std::numeric_limits<double>::infinity();
        }
        const double mx = score.maxCoeff();
        Vec next = (score.array() - mx).exp();
        bid = next * (inst.budgets[ui] / next.sum());
      });
      const Vec p_next = bid_prices(inst, b);
      const double change = (p_next - p).lpNorm<Eigen::Infinity>();
      row.step_norm = (p_next.cwiseQuotient(p).array() - 1.0).matrix().norm();
      row.wall_ms = elapsed_ms(start);
      tr.rows.push_back(row);
      const bool settled = change <= cfg.eps * p.lpNorm<Eigen::Infinity>();
      p = p_next;
      if (settled) {
        TraceRow last;
        last.k = k + 1;
        const Vec g_last = evaluate_market(inst, p, cfg.run.exec).gradient();
        last.grad_inf = g_last.lpNorm<Eigen::Infinity>();
        last.grad_l2 = g_last.norm();
        if (cfg.run.observer) cfg.run.observer(p, last);
        last.wall_ms = elapsed_ms(start);
        tr.rows.push_back(last);
        tr.status = SolveStatus::Converged;
        break;
      }
    }
  } catch (const std::exception& e) {
    tr.status = SolveStatus::NumericalFailure;
    tr.message = e.what();
  }
  res.p = p;
  if (final_bids) *final_bids = std::move(b);
  return res;
}

}  // namespace fisher
