// Serial reference vs OpenMP kernels on generated markets.
// Run with e.g. OMP_NUM_THREADS=8 ./fisher_bench --benchmark_filter=Evaluate

#include "fisher/hessian.hpp"
#include "fisher/oracle.hpp"
#include "fisher/random.hpp"

#include <benchmark/benchmark.h>

#include <map>
#include <tuple>

using namespace fisher;

namespace {

struct Fixture {
  MarketInstance inst;
  Vec p;
  MarketState state;
};

// Instances are cached so generation stays out of the timed loop.
const Fixture& fixture(int n, int m) {
  static std::map<std::pair<int, int>, Fixture> cache;
  auto it = cache.find({n, m});
  if (it == cache.end()) {
    GeneratorParams gp;
    gp.n = n;
    gp.m = m;
    gp.tau = 0.2;
    gp.rho = -0.9;
    gp.seed = 1;
    Fixture f;
    f.inst = generate_random(gp);
    Rng rng(2);
    f.p.resize(n);
    for (int j = 0; j < n; ++j) f.p[j] = 0.5 + rng.uniform();
    f.state = evaluate_market(f.inst, f.p, Exec::Serial);
    it = cache.emplace(std::make_pair(n, m), std::move(f)).first;
  }
  return it->second;
}

Exec exec_of(const benchmark::State& st) { return st.range(2) == 0 ? Exec::Serial : Exec::Parallel; }

void label(benchmark::State& st) {
  st.SetLabel(exec_of(st) == Exec::Serial ? "serial" : "parallel x" + std::to_string(exec_threads(Exec::Parallel)));
  st.counters["players"] = static_cast<double>(st.range(1));
}

void BM_EvaluateMarket(benchmark::State& st) {
  const Fixture& f = fixture(static_cast<int>(st.range(0)), static_cast<int>(st.range(1)));
  for (auto _ : st) benchmark::DoNotOptimize(evaluate_market(f.inst, f.p, exec_of(st)).demand.data());
  label(st);
}

void BM_AssembleHessian(benchmark::State& st) {
  const Fixture& f = fixture(static_cast<int>(st.range(0)), static_cast<int>(st.range(1)));
  for (auto _ : st) {
    const auto op = ScaledHessianOp::assemble(f.inst, f.state, HessianMode::DR1, exec_of(st));
    benchmark::DoNotOptimize(op.dr1().xi.data());
  }
  label(st);
}

void BM_ApplyExact(benchmark::State& st) {
  const Fixture& f = fixture(static_cast<int>(st.range(0)), static_cast<int>(st.range(1)));
  const auto op = ScaledHessianOp::assemble(f.inst, f.state, HessianMode::Exact, exec_of(st));
  const Vec v = Vec::Ones(f.inst.n);
  for (auto _ : st) benchmark::DoNotOptimize(op.apply_exact(v).data());
  label(st);
}

void BM_ReducePlayers(benchmark::State& st) {
  const Fixture& f = fixture(static_cast<int>(st.range(0)), static_cast<int>(st.range(1)));
  const Exec exec = exec_of(st);
  for (auto _ : st) {
    const Vec total = reduce_players(f.inst.m(), f.inst.n, exec, [&](int i, Vec& acc) {
      const auto& br = f.state.responses[static_cast<std::size_t>(i)];
      for (std::size_t k = 0; k < br.support.size(); ++k)
        acc[br.support[k]] += br.x[static_cast<Eigen::Index>(k)] * f.p[br.support[k]];
    });
    benchmark::DoNotOptimize(total.data());
  }
  label(st);
}

void sizes(benchmark::internal::Benchmark* b) {
  for (auto [n, m] : {std::pair{200, 1000}, std::pair{1000, 3000}, std::pair{2000, 10000}})
    for (int par : {0, 1}) b->Args({n, m, par});
  b->ArgNames({"n", "m", "par"})->Unit(benchmark::kMillisecond);
}

}  // namespace

BENCHMARK(BM_EvaluateMarket)->Apply(sizes);
BENCHMARK(BM_AssembleHessian)->Apply(sizes);
BENCHMARK(BM_ApplyExact)->Apply(sizes);
BENCHMARK(BM_ReducePlayers)->Apply(sizes);

BENCHMARK_MAIN();
