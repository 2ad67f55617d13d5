#pragma once

#include "fisher/market.hpp"
#include "fisher/methods.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace fisher::cli {

// Exit codes shared by every subcommand.
constexpr int kConverged = 0;
constexpr int kMaxIters = 1;
constexpr int kNumericalFailure = 2;
constexpr int kConfigError = 3;

struct GenArgs {
  GeneratorParams params;
  std::string out = ".";
};

struct IngestArgs {
  std::string ratings;
  IngestOptions options;
  std::string scale = "raw";
  std::string out = ".";
};

struct FlowGenArgs {
  std::string graph;
  double rho = 0.5;
  std::string out = ".";
};

struct SolveArgs {
  std::string instance;
  std::string method = "logbar";
  std::string hessian;  // empty: method default
  std::string c_phi = "auto";
  std::string sigma_barrier;  // empty: keep the instance values; "auto" = eps / n
  bool serial = false;
  MethodOptions opt;
  std::string out = ".";
};

struct BenchArgs {
  std::vector<std::string> cells;  // "n,m,rho"
  std::vector<std::string> methods{"logbar", "logbar-pcg", "propres", "tat"};
  double tau = 0.2;
  std::uint64_t seed = 1;
  double target = 1e-5;
  double time_limit_s = 60.0;
  int max_iters = 1000000;
  bool parallel_cells = false;
  bool traces = true;
  std::string out = ".";
};

int cmd_gen(const GenArgs& args);
int cmd_ingest(const IngestArgs& args);
int cmd_flow_gen(const FlowGenArgs& args);
int cmd_solve(const SolveArgs& args);
int cmd_bench(const BenchArgs& args);

SolverMode parse_hessian(const std::string& name);

}  // namespace fisher::cli
