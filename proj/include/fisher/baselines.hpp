#pragma once

#include "fisher/ipm.hpp"

namespace fisher {

enum class BaselineMethod { Tat, PropRes };

inline RunControls baseline_controls() {
  RunControls rc;
  rc.max_iters = 100000;
  return rc;
}

struct BaselineConfig {
  BaselineMethod method = BaselineMethod::Tat;
  double step = 0.1;  // tatonnement only
  double eps = 1e-7;
  RunControls run = baseline_controls();
};

/// Multiplicative tatonnement p_j <- p_j (1 + step min(z_j, 1)).
SolveResult tat_run(const MarketInstance& inst, const BaselineConfig& cfg, const Vec& p0);

/// Sparse bid matrix: bids[i] aligns with the positive coefficients of player i.
struct BidMatrix {
  std::vector<std::vector<int>> goods;
  std::vector<Vec> bids;
};

/// b_ij = w_i c_ij / sum_k c_ik.
BidMatrix default_bids(const MarketInstance& inst);

/// Equilibrium-consistent bids p_j x_ij for the demands at p.
BidMatrix bids_at(const MarketInstance& inst, const Vec& p);

Vec bid_prices(const MarketInstance& inst, const BidMatrix& b);

/// Proportional response; rho < 0 uses a geometric damping of 1/(1 - rho).
SolveResult propres_run(const MarketInstance& inst, const BaselineConfig& cfg, const BidMatrix& b0,
                        BidMatrix* final_bids = nullptr);

}  // namespace fisher
