#include "doctest.h"
#include "oracles.hpp"

#include "fisher/baselines.hpp"

using namespace fisher;

namespace {

MarketInstance seeded(int n, int m, double rho, std::uint64_t seed) {
  GeneratorParams gp;
  gp.n = n;
  gp.m = m;
  gp.tau = 0.3;
  gp.rho = rho;
  gp.seed = seed;
  return generate_random(gp);
}

Vec logbar_reference(const MarketInstance& inst) {
  LogBarConfig cfg;
  cfg.eps = 1e-11;
  const auto res = logbar_run(inst, cfg);
  REQUIRE(res.trace.status == SolveStatus::Converged);
  return res.p;
}

}  // namespace

TEST_CASE("tatonnement leaves the equilibrium in place") {
  const auto inst = testing::symmetric_market(5, 4, 0.5);
  BaselineConfig cfg;
  cfg.eps = 0.0;
  cfg.run.max_iters = 3;
  const Vec star = Vec::Constant(5, 0.2);
  const auto res = tat_run(inst, cfg, star);
  // Excess demand vanishes at the first iterate, so even eps = 0 stops there.
  CHECK(res.trace.status == SolveStatus::Converged);
  CHECK(res.trace.rows.size() == 1);
  CHECK((res.p - star).lpNorm<Eigen::Infinity>() <= 1e-15);
}

TEST_CASE("tatonnement with a zero step never moves") {
  const auto inst = seeded(8, 12, 0.5, 1);
  Rng rng(1);
  const Vec p0 = testing::random_prices(rng, 8);
  BaselineConfig cfg;
  cfg.step = 0.0;
  cfg.run.max_iters = 5;
  const auto res = tat_run(inst, cfg, p0);
  CHECK(res.trace.status == SolveStatus::MaxIters);
  CHECK(res.p == p0);
  for (const auto& row : res.trace.rows) CHECK(row.homotopy == 0.0);
}

TEST_CASE("tatonnement moves off any non-equilibrium point") {
  const auto inst = seeded(8, 12, -0.5, 2);
  Rng rng(2);
  for (int trial = 0; trial < 20; ++trial) {
    const Vec p0 = testing::random_prices(rng, 8);
    const Vec z = -evaluate_market(inst, p0).gradient();
    BaselineConfig cfg;
    cfg.eps = 0.0;
    cfg.run.max_iters = 1;
    const auto res = tat_run(inst, cfg, p0);
    // Each coordinate moves exactly when its excess demand is nonzero.
    for (int j = 0; j < 8; ++j) CHECK((res.p[j] != p0[j]) == (z[j] != 0.0));
    CHECK(res.p[0] == doctest::Approx(p0[0] * (1.0 + 0.1 * std::min(z[0], 1.0))).epsilon(1e-15));
  }
}

TEST_CASE("tatonnement agrees with the barrier method") {
  for (double rho : {0.9, 0.5}) {
    const auto inst = seeded(50, 150, rho, 3);
    const Vec ref = logbar_reference(inst);
    BaselineConfig cfg;
    cfg.eps = 1e-9;
    const auto res = tat_run(inst, cfg, pathfol_default_p0(inst));
    CAPTURE(rho);
    REQUIRE(res.trace.status == SolveStatus::Converged);
    CHECK(testing::rel_err(res.p, ref) <= 1e-4);
  }
}

TEST_CASE("tatonnement rejects bad settings") {
  const auto inst = seeded(4, 4, 0.5, 4);
  BaselineConfig cfg;
  cfg.step = 1.0;
  CHECK_THROWS_AS(tat_run(inst, cfg, Vec::Ones(4)), std::invalid_argument);
  cfg.step = 0.1;
  CHECK_THROWS_AS(tat_run(inst, cfg, Vec::Ones(3)), std::invalid_argument);
  CHECK_THROWS_AS(tat_run(inst, cfg, Vec::Zero(4)), std::invalid_argument);
}

TEST_CASE("default bids split budgets in proportion to coefficients") {
  const auto inst = seeded(10, 15, 0.5, 5);
  const auto b = default_bids(inst);
  for (int i = 0; i < inst.m(); ++i) {
    const auto ui = static_cast<std::size_t>(i);
    const Vec c = testing::dense_coefficients(inst.utilities[ui], 10);
    for (std::size_t k = 0; k < b.goods[ui].size(); ++k)
      CHECK(b.bids[ui][static_cast<Eigen::Index>(k)] ==
            doctest::Approx(inst.budgets[ui] * c[b.goods[ui][k]] / c.sum()).epsilon(1e-14));
  }
}

TEST_CASE("equilibrium bids are a proportional response fixed point") {
  for (double rho : {0.5, -0.5}) {
    const auto inst = seeded(20, 40, rho, 6);
    const Vec star = logbar_reference(inst);
    const auto b0 = bids_at(inst, star);
    BaselineConfig cfg;
    cfg.method = BaselineMethod::PropRes;
    cfg.eps = 0.0;
    cfg.run.max_iters = 1;
    BidMatrix b1;
    propres_run(inst, cfg, b0, &b1);
    CAPTURE(rho);
    for (std::size_t i = 0; i < b0.bids.size(); ++i)
      CHECK((b1.bids[i] - b0.bids[i]).lpNorm<Eigen::Infinity>() <= 1e-12);
  }
}

TEST_CASE("proportional response conserves budgets and clears goods") {
  for (double rho : {0.5, -0.9}) {
    const auto inst = seeded(15, 30, rho, 7);
    for (int iters : {0, 1, 5, 50}) {
      BaselineConfig cfg;
      cfg.method = BaselineMethod::PropRes;
      cfg.eps = 0.0;
      cfg.run.max_iters = iters;
      BidMatrix b;
      const auto res = propres_run(inst, cfg, default_bids(inst), &b);
      CHECK(res.trace.status == SolveStatus::MaxIters);
      Vec sold = Vec::Zero(15);
      for (int i = 0; i < inst.m(); ++i) {
        const auto ui = static_cast<std::size_t>(i);
        CHECK(b.bids[ui].sum() == doctest::Approx(inst.budgets[ui]).epsilon(1e-13));
        CHECK(b.bids[ui].minCoeff() >= 0.0);
        for (std::size_t k = 0; k < b.goods[ui].size(); ++k)
          sold[b.goods[ui][k]] += b.bids[ui][static_cast<Eigen::Index>(k)] / res.p[b.goods[ui][k]];
      }
      CHECK((sold.array() - 1.0).abs().maxCoeff() <= 1e-13);
      CHECK(res.p.sum() == doctest::Approx(inst.total_budget()).epsilon(1e-13));
    }
  }
}

TEST_CASE("proportional response agrees with the barrier method") {
  for (double rho : {0.5, -0.5}) {
    const auto inst = seeded(30, 90, rho, 8);
    const Vec ref = logbar_reference(inst);
    BaselineConfig cfg;
    cfg.method = BaselineMethod::PropRes;
    cfg.eps = 1e-12;
    const auto res = propres_run(inst, cfg, default_bids(inst));
    CAPTURE(rho);
    REQUIRE(res.trace.status == SolveStatus::Converged);
    CHECK(testing::rel_err(res.p, ref) <= 1e-6);
  }
}

TEST_CASE("proportional response needs unconstrained power-family markets") {
  GeneratorParams gp;
  gp.n = 4;
  gp.m = 4;
  gp.linear_barrier = true;
  gp.sigma = 1e-6;
  const auto linear = generate_random(gp);
  CHECK_THROWS_AS(default_bids(linear), std::invalid_argument);
  const auto flow = build_flow_instance(parse_flow_graph("s t\nterminals\ns t\n"), 0.5);
  CHECK_THROWS_AS(default_bids(flow), std::invalid_argument);
  CHECK_THROWS_AS(bids_at(flow, Vec::Ones(2)), std::invalid_argument);
  const auto inst = seeded(4, 4, 0.5, 9);
  BidMatrix empty;
  BaselineConfig cfg;
  CHECK_THROWS_AS(propres_run(inst, cfg, empty), std::invalid_argument);
}
