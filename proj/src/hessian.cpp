#include "fisher/hessian.hpp"

#include "fisher/random.hpp"

#include <cmath>

namespace fisher {

ScaledHessianOp::ScaledHessianOp(int n, std::vector<PlayerHessianBlock> blocks, HessianMode mode, Exec exec)
    : n_(n), blocks_(std::move(blocks)), mode_(mode), exec_(exec) {
  const int m = static_cast<int>(blocks_.size());
  for (const auto& b : blocks_) any_dense_ = any_dense_ || b.is_dense();
  diag_sum_ = reduce_players(m, n_, exec_, [&](int i, Vec& acc) {
    const PlayerHessianBlock& b = blocks_[static_cast<std::size_t>(i)];
    if (b.is_dense()) return;
    for (std::size_t k = 0; k < b.support.size(); ++k) acc[b.support[k]] += b.diag[static_cast<Eigen::Index>(k)];
  });
  if (!any_dense_) {
    DR1Data d;
    d.diag = diag_sum_;
    double abs_sum = 0.0;
    for (const auto& b : blocks_) {
      d.omega += b.rank1_weight;
      abs_sum += std::abs(b.rank1_weight);
    }
    if (abs_sum == 0.0 || std::abs(d.omega) < 1e-14 * abs_sum) {
      d.rank_one_dropped = true;
      d.omega = 0.0;
      d.xi = Vec::Zero(n_);
    } else {
      const double omega = d.omega;
      d.xi = reduce_players(m, n_, exec_, [&](int i, Vec& acc) {
        const PlayerHessianBlock& b = blocks_[static_cast<std::size_t>(i)];
        const double wgt = b.rank1_weight / omega;
        for (std::size_t k = 0; k < b.support.size(); ++k) acc[b.support[k]] += wgt * b.vec[static_cast<Eigen::Index>(k)];
      });
    }
    dr1_ = std::move(d);
  } else if (mode_ == HessianMode::DR1) {
    throw HessianError("the DR1 approximation is unavailable for constrained players");
  }
}

ScaledHessianOp ScaledHessianOp::assemble(const MarketInstance& inst, const MarketState& state, HessianMode mode,
                                          Exec exec) {
  return ScaledHessianOp(inst.n, player_hessian_blocks(inst, state, exec), mode, exec);
}

const DR1Data& ScaledHessianOp::dr1() const {
  if (!dr1_) throw HessianError("operator has no DR1 data");
  return *dr1_;
}

ScaledHessianOp ScaledHessianOp::with_mode(HessianMode mode) const {
  if (mode == HessianMode::DR1 && !dr1_) throw HessianError("the DR1 approximation is unavailable for constrained players");
  ScaledHessianOp out = *this;
  out.mode_ = mode;
  return out;
}

Vec ScaledHessianOp::apply_exact(const Vec& v) const {
  const int m = static_cast<int>(blocks_.size());
  Vec y = reduce_players(m, n_, exec_, [&](int i, Vec& acc) {
    const PlayerHessianBlock& b = blocks_[static_cast<std::size_t>(i)];
    const auto s = static_cast<Eigen::Index>(b.support.size());
    if (b.is_dense()) {
      Vec vs(s);
      for (Eigen::Index k = 0; k < s; ++k) vs[k] = v[b.support[static_cast<std::size_t>(k)]];
      const Vec ys = b.dense * vs;
      for (Eigen::Index k = 0; k < s; ++k) acc[b.support[static_cast<std::size_t>(k)]] += ys[k];
      return;
    }
    if (b.rank1_weight == 0.0) return;
    double dot = 0.0;
    for (Eigen::Index k = 0; k < s; ++k) dot += b.vec[k] * v[b.support[static_cast<std::size_t>(k)]];
    const double coef = b.rank1_weight * dot;
    for (Eigen::Index k = 0; k < s; ++k) acc[b.support[static_cast<std::size_t>(k)]] -= coef * b.vec[k];
  });
  y += diag_sum_.cwiseProduct(v);
  return y;
}

Vec ScaledHessianOp::apply_dr1(const Vec& v) const {
  const DR1Data& d = dr1();
  Vec y = d.diag.cwiseProduct(v);
  if (!d.rank_one_dropped) y -= d.omega * d.xi.dot(v) * d.xi;
  return y;
}

Mat ScaledHessianOp::dense_exact() const {
  Mat h = Mat::Zero(n_, n_);
  h.diagonal() = diag_sum_;
  for (const PlayerHessianBlock& b : blocks_) {
    const auto s = static_cast<Eigen::Index>(b.support.size());
    for (Eigen::Index a = 0; a < s; ++a)
      for (Eigen::Index c = 0; c < s; ++c) {
        const double v = b.is_dense() ? b.dense(a, c) : -b.rank1_weight * b.vec[a] * b.vec[c];
        h(b.support[static_cast<std::size_t>(a)], b.support[static_cast<std::size_t>(c)]) += v;
      }
  }
  return h;
}

Mat ScaledHessianOp::dense_dr1() const {
  const DR1Data& d = dr1();
  Mat h = -d.omega * d.xi * d.xi.transpose();
  h.diagonal() += d.diag;
  return h;
}

Vec ScaledHessianOp::exact_diagonal() const {
  Vec out = diag_sum_;
  for (const PlayerHessianBlock& b : blocks_) {
    for (std::size_t k = 0; k < b.support.size(); ++k) {
      const auto kk = static_cast<Eigen::Index>(k);
      out[b.support[k]] += b.is_dense() ? b.dense(kk, kk) : -b.rank1_weight * b.vec[kk] * b.vec[kk];
    }
  }
  return out;
}

DiagonalPreconditioner preconditioner(const ScaledHessianOp& op) {
  DiagonalPreconditioner pc;
  pc.k_c = op.apply_exact(Vec::Ones(op.n()));
  bool fallback = false;
  for (Eigen::Index j = 0; j < pc.k_c.size(); ++j) fallback = fallback || !(pc.k_c[j] > 1e-300);
  if (fallback) {
    const Vec diag = op.exact_diagonal();
    for (Eigen::Index j = 0; j < pc.k_c.size(); ++j)
      if (!(pc.k_c[j] > 1e-300)) pc.k_c[j] = std::max(diag[j], 1e-300);
  }
  return pc;
}

Vec dr1_solve(const ScaledHessianOp& op, double mu, const Vec& rhs) {
  const DR1Data& d = op.dr1();
  const Vec mdiag = d.diag.array() + mu;
  if (!(mdiag.minCoeff() > 0.0)) throw SingularUpdateError("diag(D) + mu I is not positive");
  const Vec minv_rhs = rhs.cwiseQuotient(mdiag);
  if (d.rank_one_dropped) return minv_rhs;
  const Vec minv_xi = d.xi.cwiseQuotient(mdiag);
  const double inv_omega = 1.0 / d.omega;
  const double denom = inv_omega - d.xi.dot(minv_xi);
  if (!(std::abs(denom) > 1e-12 * std::abs(inv_omega))) throw SingularUpdateError("Sherman-Morrison denominator vanishes");
  return minv_rhs + minv_xi * (d.xi.dot(minv_rhs) / denom);
}

PcgResult pcg_solve(const ScaledHessianOp& op, const Vec& g_diag, const Vec& rhs, const PcgOptions& opt) {
  const int n = op.n();
  const int cap = opt.max_iters > 0 ? opt.max_iters : n;
  Vec minv = Vec::Ones(n);
  if (opt.precondition) minv = (preconditioner(op).k_c + g_diag).cwiseInverse();
  auto apply = [&](const Vec& v) -> Vec { return op.apply(v) + g_diag.cwiseProduct(v); };

  PcgResult res;
  res.d = Vec::Zero(n);
  Vec r = rhs;
  res.residual = r.norm();
  if (res.residual <= opt.eps_k * 1e-30) {
    res.converged = true;
    return res;
  }
  Vec z = minv.cwiseProduct(r);
  Vec dir = z;
  double rz = r.dot(z);
  for (int it = 0; it < cap; ++it) {
    const Vec q = apply(dir);
    const double curv = dir.dot(q);
    if (!std::isfinite(curv) || !(curv > 0.0)) throw HessianError("conjugate gradient met a non-positive curvature");
    const double alpha = rz / curv;
    res.d += alpha * dir;
    r -= alpha * q;
    res.iterations = it + 1;
    res.residual = r.norm();
    if (!std::isfinite(res.residual)) throw HessianError("non-finite residual in conjugate gradient");
    if (res.residual <= opt.eps_k * std::max(res.d.norm(), 1e-30)) {
      res.converged = true;
      break;
    }
    z = minv.cwiseProduct(r);
    const double rz_next = r.dot(z);
    dir = z + (rz_next / rz) * dir;
    rz = rz_next;
  }
  return res;
}

double dr1_error_norm(const ScaledHessianOp& op, int iterations, std::uint64_t seed) {
  Rng rng(seed);
  Vec v(op.n());
  for (Eigen::Index j = 0; j < v.size(); ++j) v[j] = rng.normal();
  v.normalize();
  double est = 0.0;
  for (int k = 0; k < iterations; ++k) {
    Vec y = op.apply_difference(v);
    est = y.norm();
    if (est == 0.0) return 0.0;
    v = y / est;
  }
  return est;
}

namespace {

// D2 phi(p)[h, h] through the scaled operator.
double hessian_form(const MarketInstance& inst, const Vec& p, const Vec& h) {
  const MarketState st = evaluate_market(inst, p);
  const ScaledHessianOp op = ScaledHessianOp::assemble(inst, st, HessianMode::Exact);
  const Vec q = h.cwiseQuotient(p);
  return q.dot(op.apply_exact(q));
}

}  // namespace

double sampled_self_concordance(const MarketInstance& inst, const Vec& p, const SelfConcordanceSampling& opt) {
  if (p.size() != inst.n || !(p.minCoeff() > 0.0)) throw std::invalid_argument("p must be a positive n-vector");
  Rng rng(opt.seed);
  std::vector<Vec> dirs;
  if (inst.n <= opt.max_coordinates) {
    for (int j = 0; j < inst.n; ++j) dirs.push_back(p[j] * Vec::Unit(inst.n, j));
  } else {
    for (int k = 0; k < opt.max_coordinates; ++k) {
      const int j = static_cast<int>(rng.index(static_cast<std::size_t>(inst.n)));
      dirs.push_back(p[j] * Vec::Unit(inst.n, j));
    }
  }
  for (int k = 0; k < opt.random_directions; ++k) {
    Vec h(inst.n);
    for (int j = 0; j < inst.n; ++j) h[j] = rng.normal() * p[j];
    dirs.push_back(h);
  }
  double best = 0.0;
  for (Vec h : dirs) {
    const double s0 = hessian_form(inst, p, h);
    if (!(s0 > 0.0)) continue;
    h /= std::sqrt(s0);
    // Keep both probe points inside the Dikin ellipsoid and the orthant.
    const double tau = std::min(opt.step, 0.5 / std::max(1.0, h.cwiseQuotient(p).lpNorm<Eigen::Infinity>()));
    const double d3 = (hessian_form(inst, p + tau * h, h) - hessian_form(inst, p - tau * h, h)) / (2.0 * tau);
    best = std::max(best, std::abs(d3) / 2.0);
  }
  return best;
}

}  // namespace fisher
