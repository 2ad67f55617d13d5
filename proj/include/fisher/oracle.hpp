#pragma once

#include "fisher/kernels.hpp"
#include "fisher/market.hpp"

#include <optional>
#include <stdexcept>
#include <vector>

namespace fisher {

class OracleError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct BarrierDual {
  double lambda = 0.0;      // (1 + sigma n) / w
  double u = 0.0;           // root of psi, equals <c, x>
  double psi = 0.0;         // psi at the returned root
  double kkt_residual = 0.0;  // max_j |c_j/<c,x> + sigma/x_j - lambda p_j| / (lambda p_j)
  int iterations = 0;
};

struct ConstrainedDual {
  double lambda = 0.0;  // budget multiplier, d / w at the optimum
  Vec y;                // multipliers of A x = 0
  double stationarity = 0.0;  // relative norm of grad v + lambda p + A^T y
  double feasibility = 0.0;   // |A x|_inf
  int newton_iterations = 0;
};

/// Demand of one player. x and gamma are stored on `support` only.
struct BestResponse {
  std::vector<int> support;
  Vec x;
  Vec gamma;  // money shares p x / w; the shifted shares X c / <c,x> for linear barrier
  double log_utility = 0.0;
  double utility = 0.0;
  double spend = 0.0;
  double demand_scale = 1.0;  // 1 + sigma n for linear barrier, else 1
  std::optional<BarrierDual> barrier;
  std::optional<ConstrainedDual> constrained;

  Vec dense_x(int n) const;
  Vec dense_gamma(int n) const;
};

/// Power-family demand (CES, or additive with rho := r).
BestResponse ces_best_response(const Vec& p, const UtilitySpec& u, double w);
BestResponse additive_best_response(const Vec& p, const UtilitySpec& u, double w);
BestResponse linear_barrier_best_response(const Vec& p, const UtilitySpec& u, double w);

struct ConstrainedOptions {
  int max_newton = 100;
  int max_projection_rounds = 500;
  double tol = 1e-13;
};

BestResponse constrained_best_response(const Vec& p, const UtilitySpec& u, double w, const Mat& a,
                                       const ConstrainedOptions& opt = {});

/// Dispatches on utility kind and constraints of player i.
BestResponse best_response(const MarketInstance& inst, int i, const Vec& p);

/// All best responses at one price vector.
struct MarketState {
  Vec p;
  std::vector<BestResponse> responses;
  Vec demand;  // sum_i demand_scale_i x_i

  Vec gradient() const { return Vec::Ones(p.size()) - demand; }
};

MarketState evaluate_market(const MarketInstance& inst, const Vec& p, Exec exec = default_exec());

/// Weight of f_i in the potential: w/d, or w for linear barrier players.
double potential_weight(const MarketInstance& inst, int i);

double potential_value(const MarketInstance& inst, const MarketState& state);
double potential_value(const MarketInstance& inst, const Vec& p);
Vec potential_gradient(const MarketInstance& inst, const Vec& p);

/// Gradient and Hessian of v = -log u at x for the power family, on the
/// index set `support` (x > 0 there).
Vec primal_gradient(const UtilitySpec& u, const std::vector<int>& support, const Vec& x);
Mat primal_hessian(const UtilitySpec& u, const std::vector<int>& support, const Vec& x);

/// Per-player term of the scaled Hessian H = P (grad^2 phi) P, restricted to
/// `support`: diag(diag) - rank1_weight * vec vec^T, or `dense` when set.
struct PlayerHessianBlock {
  std::vector<int> support;
  Vec diag;
  double rank1_weight = 0.0;
  Vec vec;
  Mat dense;  // nonempty for constrained players
  // Power-family parameters (weight_diag = w/(1-r), weight_rank1 = w r/(1-r)).
  double r = 0.0;
  double weight_diag = 0.0;
  double weight_rank1 = 0.0;

  bool is_dense() const { return dense.size() > 0; }
  /// Power-family block weight_diag Gamma - weight_rank1 gamma gamma^T.
  static PlayerHessianBlock power_family(double w, double r, std::vector<int> support, const Vec& gamma);
  Mat to_dense(int n) const;
};

std::vector<PlayerHessianBlock> player_hessian_blocks(const MarketInstance& inst, const MarketState& state,
                                                      Exec exec = default_exec());

/// Demand Jacobian dx_i/dp as a dense n x n matrix (test and diagnostics path).
Mat demand_jacobian(const MarketInstance& inst, const MarketState& state, int i);

/// (d/w)^2 (W^-1 - W^-1 A^T (A W^-1 A^T)^-1 A W^-1) embedded in n x n.
Mat constrained_dual_hessian(const MarketInstance& inst, const MarketState& state, int i);

struct PotentialConstants {
  double T_phi = 0.0;
  double C_phi = 0.0;
  std::vector<double> kappa_estimates;
};

/// kappa_i is the largest 1/gamma_ij over sampled states and active goods,
/// clipped at kappa_cap.
PotentialConstants potential_constants(const MarketInstance& inst, const std::vector<const MarketState*>& samples,
                                       double kappa_cap = 1e4);

}  // namespace fisher
