#pragma once

#include "fisher/oracle.hpp"

#include <cstdint>
#include <stdexcept>

namespace fisher {

enum class HessianMode { Exact, DR1 };

/// Aggregate approximation diag(diag) - omega xi xi^T.
struct DR1Data {
  Vec diag;
  double omega = 0.0;
  Vec xi;
  bool rank_one_dropped = false;
};

class HessianError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Thrown when the Sherman-Morrison denominator vanishes.
class SingularUpdateError : public HessianError {
 public:
  using HessianError::HessianError;
};

/// Matrix-free H(p) = P grad^2 phi(p) P as a sum of per-player blocks.
class ScaledHessianOp {
 public:
  ScaledHessianOp(int n, std::vector<PlayerHessianBlock> blocks, HessianMode mode, Exec exec = default_exec());

  static ScaledHessianOp assemble(const MarketInstance& inst, const MarketState& state, HessianMode mode,
                                  Exec exec = default_exec());

  int n() const { return n_; }
  HessianMode mode() const { return mode_; }
  Exec exec() const { return exec_; }
  const std::vector<PlayerHessianBlock>& blocks() const { return blocks_; }
  bool has_dr1() const { return dr1_.has_value(); }
  const DR1Data& dr1() const;

  /// Product with the operator of the current mode.
  Vec apply(const Vec& v) const { return mode_ == HessianMode::Exact ? apply_exact(v) : apply_dr1(v); }
  Vec apply_exact(const Vec& v) const;
  Vec apply_dr1(const Vec& v) const;
  /// (H~ - H) v.
  Vec apply_difference(const Vec& v) const { return apply_dr1(v) - apply_exact(v); }

  Mat dense() const { return mode_ == HessianMode::Exact ? dense_exact() : dense_dr1(); }
  Mat dense_exact() const;
  Mat dense_dr1() const;
  /// Diagonal of the exact operator.
  Vec exact_diagonal() const;

  ScaledHessianOp with_mode(HessianMode mode) const;

 private:
  int n_;
  std::vector<PlayerHessianBlock> blocks_;
  HessianMode mode_;
  Exec exec_;
  Vec diag_sum_;
  bool any_dense_ = false;
  std::optional<DR1Data> dr1_;
};

struct DiagonalPreconditioner {
  Vec k_c;
};

/// Row sums of the exact operator; nonpositive entries fall back to the
/// operator diagonal, and everything is clamped below at 1e-300.
DiagonalPreconditioner preconditioner(const ScaledHessianOp& op);

/// Solves (H~ + mu I) d = rhs with the explicit Sherman-Morrison inverse.
Vec dr1_solve(const ScaledHessianOp& op, double mu, const Vec& rhs);

struct PcgOptions {
  double eps_k = 1e-10;
  bool precondition = true;
  int max_iters = 0;  // 0 means n
};

struct PcgResult {
  Vec d;
  int iterations = 0;
  double residual = 0.0;
  bool converged = false;
};

/// Conjugate gradient on (op + diag(g_diag)) d = rhs using the op's current
/// mode; stops when |residual| <= eps_k * max(|d|, 1e-30).
PcgResult pcg_solve(const ScaledHessianOp& op, const Vec& g_diag, const Vec& rhs, const PcgOptions& opt = {});

/// Spectral norm of H~ - H by power iteration from a seeded random start.
double dr1_error_norm(const ScaledHessianOp& op, int iterations, std::uint64_t seed = 17);

struct SelfConcordanceSampling {
  int max_coordinates = 64;  // all coordinates when n is at most this
  int random_directions = 16;
  double step = 1e-4;  // central-difference step in the local norm
  std::uint64_t seed = 29;
};

/// Largest observed |D3 phi[h,h,h]| / (2 (D2 phi[h,h])^{3/2}) at p over
/// coordinate and random directions. A sampled lower bound on the
/// self-concordance constant, usable as a practical C_phi.
double sampled_self_concordance(const MarketInstance& inst, const Vec& p, const SelfConcordanceSampling& opt = {});

}  // namespace fisher
