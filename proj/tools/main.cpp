#include "commands.hpp"

#include "fisher/hessian.hpp"
#include "fisher/oracle.hpp"

#include <CLI11.hpp>

#include <functional>
#include <iostream>

using namespace fisher;
using namespace fisher::cli;

namespace {

void add_run_controls(CLI::App* sub, RunControls& run) {
  sub->add_option("--max-iters", run.max_iters, "Iteration cap")->check(CLI::NonNegativeNumber);
  sub->add_option("--time-limit-s", run.time_limit_s, "Wall-clock limit in seconds, 0 for none")
      ->check(CLI::NonNegativeNumber);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Fisher market equilibrium solver"};
  app.require_subcommand(1);
  std::function<int()> action;

  GenArgs gen;
  auto* g = app.add_subcommand("gen", "Generate a random sparse market");
  g->add_option("--n", gen.params.n, "Goods")->required();
  g->add_option("--m", gen.params.m, "Players")->required();
  g->add_option("--tau", gen.params.tau, "Fraction of nonzero coefficients");
  g->add_option("--delta", gen.params.delta, "Coefficient scale");
  g->add_option("--rho", gen.params.rho, "CES exponent");
  g->add_option("--seed", gen.params.seed, "Generator seed");
  g->add_flag("--linear", gen.params.linear_barrier, "Linear utilities with a log barrier");
  g->add_option("--sigma-barrier", gen.params.sigma, "Barrier weight for --linear");
  g->add_option("--out", gen.out, "Output directory");
  g->callback([&] { action = [&] { return cmd_gen(gen); }; });

  IngestArgs ingest;
  auto* in = app.add_subcommand("ingest", "Build a market from a ratings CSV");
  in->add_option("ratings", ingest.ratings, "user_id,item_id,rating CSV with a header row")->required();
  in->add_option("--max-users", ingest.options.max_users, "Keep at most this many users");
  in->add_option("--max-items", ingest.options.max_items, "Keep at most this many items");
  in->add_option("--rho", ingest.options.rho, "CES exponent");
  in->add_option("--scale", ingest.scale, "raw or max")->check(CLI::IsMember({"raw", "max"}));
  in->add_option("--out", ingest.out, "Output directory");
  in->callback([&] { action = [&] { return cmd_ingest(ingest); }; });

  FlowGenArgs flow;
  auto* fg = app.add_subcommand("flow-gen", "Build a flow-allocation market from a graph file");
  fg->add_option("graph", flow.graph, "Edge list, then 'terminals', then source-sink pairs")->required();
  fg->add_option("--rho", flow.rho, "CES exponent");
  fg->add_option("--out", flow.out, "Output directory");
  fg->callback([&] { action = [&] { return cmd_flow_gen(flow); }; });

  SolveArgs solve;
  auto* s = app.add_subcommand("solve", "Compute equilibrium prices");
  s->add_option("instance", solve.instance, "Instance JSON")->required();
  s->add_option("--method", solve.method, "logbar, logbar-pcg, pathfol, tat or propres")
      ->check(CLI::IsMember({"logbar", "logbar-pcg", "pathfol", "tat", "propres"}));
  s->add_option("--eps", solve.opt.eps, "Target |grad|_inf")->check(CLI::PositiveNumber);
  s->add_option("--hessian", solve.hessian, "exact, dr1 or pcg")->check(CLI::IsMember({"exact", "dr1", "pcg"}));
  s->add_option("--Q", solve.opt.Q, "LogBar neighborhood width");
  s->add_option("--sigma-override", solve.opt.sigma_override, "LogBar shrink factor");
  s->add_flag("--theory-strict", solve.opt.theory_strict, "LogBar with the worst-case neighborhood width");
  s->add_option("--beta", solve.opt.beta, "PathFol centering radius");
  s->add_option("--gamma", solve.opt.gamma, "PathFol t step");
  s->add_option("--c-phi", solve.c_phi, "PathFol constant: auto (sampled), formula, or a number");
  s->add_option("--step", solve.opt.step, "Tatonnement step");
  s->add_option("--eps-k", solve.opt.eps_k, "PCG relative tolerance");
  s->add_option("--sigma-barrier", solve.sigma_barrier, "Barrier weight for linear players, or auto = eps/n");
  s->add_flag("--serial", solve.serial, "Run the serial reference kernels");
  s->add_option("--out", solve.out, "Output directory");
  add_run_controls(s, solve.opt.run);
  s->callback([&] { action = [&] { return cmd_solve(solve); }; });

  BenchArgs bench;
  auto* b = app.add_subcommand("bench", "Time methods against a high-precision reference");
  b->add_option("--cell", bench.cells, "n,m,rho (repeatable)")->required();
  b->add_option("--methods", bench.methods, "Comma-separated methods")->delimiter(',');
  b->add_option("--tau", bench.tau, "Generator density");
  b->add_option("--seed", bench.seed, "Generator seed");
  b->add_option("--target", bench.target, "Stop at |p - p*|_2 <= target");
  b->add_option("--time-limit-s", bench.time_limit_s, "Per-method wall-clock limit");
  b->add_option("--max-iters", bench.max_iters, "Per-method iteration cap");
  b->add_flag("--parallel-cells", bench.parallel_cells, "Run cells concurrently");
  b->add_flag("!--no-traces", bench.traces, "Skip the per-method trace files");
  b->add_option("--out", bench.out, "Output directory");
  b->callback([&] { action = [&] { return cmd_bench(bench); }; });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kConfigError;
  }

  try {
    return action();
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kConfigError;
  } catch (const MarketError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kConfigError;
  } catch (const OracleError& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return kNumericalFailure;
  } catch (const HessianError& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return kNumericalFailure;
  } catch (const std::exception& e) {
    // Unreadable inputs and unwritable outputs.
    std::cerr << "error: " << e.what() << "\n";
    return kConfigError;
  }
}
