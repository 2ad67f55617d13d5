#include "fisher/oracle.hpp"

#include <cmath>
#include <limits>
#include <sstream>

namespace fisher {

namespace {

double primal_value(const UtilitySpec& u, const std::vector<int>& support, const Vec& x) {
  const double r = u.power();
  const double k = std::holds_alternative<Ces>(u.kind) ? 1.0 / r : std::get<AdditiveHomogeneous>(u.kind).k;
  double s = 0.0;
  std::size_t pos = 0;
  for (std::size_t j = 0; j < support.size(); ++j) {
    while (u.coefficients[pos].index < support[j]) ++pos;
    s += u.coefficients[pos].value * std::pow(x[static_cast<Eigen::Index>(j)], r);
  }
  return -k * std::log(s);
}

}  // namespace

BestResponse constrained_best_response(const Vec& p, const UtilitySpec& u, double w, const Mat& a,
                                       const ConstrainedOptions& opt) {
  if (u.is_linear_barrier()) throw OracleError("constrained oracle supports power-family utilities only");
  BestResponse free = ces_best_response(p, u, w);
  if (a.rows() == 0) return free;
  if (a.cols() != p.size()) throw OracleError("constraint matrix has the wrong number of columns");

  const std::vector<int>& support = free.support;
  const auto s = static_cast<Eigen::Index>(support.size());
  Mat as(a.rows(), s);
  Vec ps(s);
  for (Eigen::Index k = 0; k < s; ++k) {
    as.col(k) = a.col(support[static_cast<std::size_t>(k)]);
    ps[k] = p[support[static_cast<std::size_t>(k)]];
  }
  const Eigen::Index rows = a.rows();

  // Strictly feasible start: alternate between null(A) and a positive floor.
  Eigen::ColPivHouseholderQR<Mat> qr(as.transpose());
  const Mat q = qr.householderQ() * Mat::Identity(s, std::min(s, rows));
  auto project = [&](const Vec& v) -> Vec { return v - q * (q.transpose() * v); };
  Vec x = project(free.x);
  const double floor = 1e-2 * free.x.mean();
  int round = 0;
  while (!(x.minCoeff() > 0.0) && round < opt.max_projection_rounds) {
    x = project(x.cwiseMax(floor));
    ++round;
  }
  if (!(x.minCoeff() > 0.0) || (as * x).lpNorm<Eigen::Infinity>() > 1e-9 * x.lpNorm<Eigen::Infinity>())
    throw OracleError("no strictly feasible start found for the constrained best response");
  x *= w / ps.dot(x);

  // Damped Newton on min v(x) s.t. A x = 0, <p, x> = w.
  Mat c(rows + 1, s);
  c << as, ps.transpose();
  Vec target = Vec::Zero(rows + 1);
  target[rows] = w;
  const Eigen::Index dim = s + rows + 1;
  int it = 0;
  double decrement_sq = std::numeric_limits<double>::infinity();
  for (; it < opt.max_newton; ++it) {
    const Vec g = primal_gradient(u, support, x);
    const Mat h = primal_hessian(u, support, x);
    Mat kkt = Mat::Zero(dim, dim);
    kkt.topLeftCorner(s, s) = h;
    kkt.topRightCorner(s, rows + 1) = c.transpose();
    kkt.bottomLeftCorner(rows + 1, s) = c;
    Vec rhs(dim);
    rhs << -g, target - c * x;
    const Vec sol = kkt.fullPivLu().solve(rhs);
    const Vec dx = sol.head(s);
    if (!dx.allFinite()) throw OracleError("constrained Newton system is singular");
    decrement_sq = dx.dot(h * dx);
    if (decrement_sq <= opt.tol * opt.tol) break;
    double alpha = 1.0;
    for (Eigen::Index k = 0; k < s; ++k)
      if (dx[k] < 0.0) alpha = std::min(alpha, 0.99 * (-x[k] / dx[k]));
    const double v0 = primal_value(u, support, x);
    const double slope = g.dot(dx);
    // Near the optimum the predicted decrease drops below the rounding of v,
    // so the sufficient-decrease test is skipped there.
    for (int bt = 0; bt < 60 && decrement_sq > 1e-12; ++bt) {
      if (primal_value(u, support, x + alpha * dx) <= v0 + 1e-4 * alpha * slope) break;
      alpha *= 0.5;
    }
    x += alpha * dx;
  }
  if (!(decrement_sq <= 1e-16)) {
    std::ostringstream msg;
    msg << "constrained Newton stagnated, squared decrement " << decrement_sq;
    throw OracleError(msg.str());
  }
  x = project(x);
  x *= w / ps.dot(x);

  BestResponse br;
  br.support = support;
  br.x = x;
  br.gamma = ps.cwiseProduct(x) / w;
  br.spend = ps.dot(x);
  br.log_utility = -primal_value(u, support, x);
  br.utility = std::exp(br.log_utility);

  ConstrainedDual dual;
  const Vec g = primal_gradient(u, support, x);
  const Vec mult = c.transpose().colPivHouseholderQr().solve(-g);
  dual.y = mult.head(rows);
  dual.lambda = mult[rows];
  dual.stationarity = (g + c.transpose() * mult).norm() / g.norm();
  dual.feasibility = (as * x).lpNorm<Eigen::Infinity>();
  dual.newton_iterations = it;
  br.constrained = dual;
  return br;
}

}  // namespace fisher
