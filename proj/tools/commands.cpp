#include "commands.hpp"

#include "fisher/io.hpp"

#include <json.hpp>

#include <cmath>
#include <filesystem>
#include <iostream>
#include <sstream>
#include <stdexcept>

namespace fisher::cli {

namespace {

namespace fs = std::filesystem;
using nlohmann::ordered_json;

std::string join(const std::string& dir, const std::string& name) { return (fs::path(dir) / name).string(); }

void write_json(const std::string& path, const ordered_json& j) { write_file_atomic(path, j.dump(2) + "\n"); }

int exit_code(SolveStatus s) {
  switch (s) {
    case SolveStatus::Converged: return kConverged;
    case SolveStatus::MaxIters: return kMaxIters;
    case SolveStatus::NumericalFailure: return kNumericalFailure;
  }
  return kNumericalFailure;
}

ordered_json generator_json(const GeneratorParams& p) {
  ordered_json j;
  j["n"] = p.n;
  j["m"] = p.m;
  j["tau"] = p.tau;
  j["delta"] = p.delta;
  j["rho"] = p.rho;
  j["seed"] = p.seed;
  j["linear_barrier"] = p.linear_barrier;
  if (p.linear_barrier) j["sigma"] = p.sigma;
  return j;
}

void set_barrier_sigma(MarketInstance& inst, const std::string& spec, double eps) {
  bool any = false;
  for (const auto& u : inst.utilities) any = any || u.is_linear_barrier();
  if (!any) throw std::invalid_argument("--sigma-barrier given but the instance has no linear-barrier players");
  const double sigma = spec == "auto" ? eps / inst.n : std::stod(spec);
  if (!(sigma > 0.0 && std::isfinite(sigma))) throw std::invalid_argument("--sigma-barrier must be positive");
  for (auto& u : inst.utilities)
    if (u.is_linear_barrier()) u.kind = LinearBarrier{sigma};
}

std::string cell_tag(const BenchRow& r) {
  std::ostringstream s;
  s << "n" << r.n << "_m" << r.m << "_rho" << format_double(r.rho);
  return s.str();
}

struct Cell {
  int n = 0;
  int m = 0;
  double rho = 0.0;
};

Cell parse_cell(const std::string& text) {
  Cell c;
  char sep1 = 0, sep2 = 0;
  std::istringstream in(text);
  if (!(in >> c.n >> sep1 >> c.m >> sep2 >> c.rho) || sep1 != ',' || sep2 != ',' || !(in >> std::ws).eof())
    throw std::invalid_argument("cell '" + text + "' is not of the form n,m,rho");
  return c;
}

}  // namespace

SolverMode parse_hessian(const std::string& name) {
  if (name == "exact") return SolverMode::ExactDirect;
  if (name == "dr1") return SolverMode::DR1;
  if (name == "pcg") return SolverMode::ExactPCG;
  throw std::invalid_argument("--hessian must be exact, dr1 or pcg");
}

int cmd_gen(const GenArgs& args) {
  const MarketInstance inst = generate_random(args.params);
  fs::create_directories(args.out);
  write_instance(join(args.out, "instance.json"), inst);
  ordered_json prov;
  prov["command"] = "gen";
  prov["params"] = generator_json(args.params);
  write_json(join(args.out, "provenance.json"), prov);
  std::cout << "wrote " << join(args.out, "instance.json") << " (n=" << inst.n << ", m=" << inst.m() << ")\n";
  return kConverged;
}

int cmd_ingest(const IngestArgs& args) {
  IngestOptions opt = args.options;
  if (args.scale == "raw") opt.scale = RatingScale::Raw;
  else if (args.scale == "max") opt.scale = RatingScale::MaxNormalized;
  else throw std::invalid_argument("--scale must be raw or max");
  const IngestResult res = ingest_ratings(args.ratings, opt);
  fs::create_directories(args.out);
  write_instance(join(args.out, "instance.json"), res.instance);
  std::string users, items;
  for (const auto& u : res.user_ids) users += u + "\n";
  for (const auto& i : res.item_ids) items += i + "\n";
  write_file_atomic(join(args.out, "users.txt"), users);
  write_file_atomic(join(args.out, "items.txt"), items);
  ordered_json prov;
  prov["command"] = "ingest";
  prov["ratings"] = args.ratings;
  prov["max_users"] = opt.max_users;
  prov["max_items"] = opt.max_items;
  prov["rho"] = opt.rho;
  prov["scale"] = args.scale;
  write_json(join(args.out, "provenance.json"), prov);
  std::cout << "wrote " << join(args.out, "instance.json") << " (n=" << res.instance.n << ", m=" << res.instance.m()
            << ")\n";
  return kConverged;
}

int cmd_flow_gen(const FlowGenArgs& args) {
  const FlowGraph g = read_flow_graph(args.graph);
  const MarketInstance inst = build_flow_instance(g, args.rho);
  fs::create_directories(args.out);
  write_instance(join(args.out, "instance.json"), inst);
  ordered_json prov;
  prov["command"] = "flow-gen";
  prov["graph"] = args.graph;
  prov["rho"] = args.rho;
  prov["nodes"] = g.node_names.size();
  prov["edges"] = g.edges.size();
  write_json(join(args.out, "provenance.json"), prov);
  std::cout << "wrote " << join(args.out, "instance.json") << " (n=" << inst.n << ", m=" << inst.m() << ")\n";
  return kConverged;
}

int cmd_solve(const SolveArgs& args) {
  MarketInstance inst = read_instance(args.instance);
  const Method method = method_from_string(args.method);
  MethodOptions opt = args.opt;
  if (!args.hessian.empty()) opt.hessian = parse_hessian(args.hessian);
  if (args.c_phi == "formula") opt.c_phi_formula = true;
  else if (args.c_phi != "auto") opt.c_phi = std::stod(args.c_phi);
  if (!args.sigma_barrier.empty()) set_barrier_sigma(inst, args.sigma_barrier, opt.eps);
  if (args.serial) opt.run.exec = Exec::Serial;

  const SolveResult res = solve_market(inst, method, opt);
  fs::create_directories(args.out);
  write_file_atomic(join(args.out, "trace.csv"), trace_to_csv(res.trace));
  if (res.p.size() == inst.n) {
    write_prices(join(args.out, "prices.txt"), res.p);
    write_file_atomic(join(args.out, "certificate.json"),
                      certificate_to_json(equilibrium_certificate(inst, res.p, opt.eps)) + "\n");
  }
  const auto& last = res.trace.rows;
  std::cout << "status=" << to_string(res.trace.status) << " iters=" << res.trace.iterations();
  if (!last.empty()) std::cout << " grad_inf=" << format_double(last.back().grad_inf);
  std::cout << "\n";
  if (!res.trace.message.empty()) std::cerr << res.trace.message << "\n";
  return exit_code(res.trace.status);
}

int cmd_bench(const BenchArgs& args) {
  if (args.cells.empty()) throw std::invalid_argument("bench needs at least one --cell n,m,rho");
  std::vector<Cell> cells;
  for (const auto& c : args.cells) cells.push_back(parse_cell(c));
  std::vector<Method> methods;
  for (const auto& m : args.methods) methods.push_back(method_from_string(m));
  if (!(args.target > 0.0)) throw std::invalid_argument("--target must be positive");

  fs::create_directories(args.out);
  if (args.traces) fs::create_directories(join(args.out, "traces"));
  std::vector<std::vector<BenchRow>> rows(cells.size());
  std::vector<std::vector<SolveTrace>> traces(cells.size());
  // With parallel cells each solve runs serially on its own thread.
  const Exec exec = args.parallel_cells ? Exec::Serial : default_exec();
  for_each_index(static_cast<int>(cells.size()), args.parallel_cells ? Exec::Parallel : Exec::Serial, [&](int ci) {
    const Cell& cell = cells[static_cast<std::size_t>(ci)];
    auto& out = rows[static_cast<std::size_t>(ci)];
    auto& tr = traces[static_cast<std::size_t>(ci)];
    GeneratorParams gp;
    gp.n = cell.n;
    gp.m = cell.m;
    gp.rho = cell.rho;
    gp.tau = args.tau;
    gp.seed = args.seed;
    Vec p_star;
    std::string failure;
    MarketInstance inst;
    try {
      inst = generate_random(gp);
      p_star = reference_prices(inst, exec);
    } catch (const std::exception& e) {
      failure = e.what();
    }
    for (Method m : methods) {
      BenchRow row;
      SolveTrace trace;
      if (failure.empty()) {
        MethodOptions opt;
        opt.run.exec = exec;
        opt.run.max_iters = args.max_iters;
        opt.run.time_limit_s = args.time_limit_s;
        row = bench_method(inst, m, opt, p_star, args.target, &trace);
      } else {
        row.n = cell.n;
        row.m = cell.m;
        row.method = to_string(m);
        row.status = "unavailable";
      }
      row.rho = cell.rho;
      out.push_back(row);
      tr.push_back(std::move(trace));
    }
    if (!failure.empty()) std::cerr << "cell " << cell.n << "," << cell.m << "," << cell.rho << ": " << failure << "\n";
  });

  std::string table = bench_header();
  for (std::size_t ci = 0; ci < cells.size(); ++ci) {
    for (std::size_t k = 0; k < rows[ci].size(); ++k) {
      const BenchRow& r = rows[ci][k];
      table += bench_row_csv(r);
      std::cout << bench_row_csv(r);
      if (args.traces && r.status != "unavailable")
        write_file_atomic(join(join(args.out, "traces"), cell_tag(r) + "_" + r.method + ".csv"),
                          trace_to_csv(traces[ci][k]));
    }
  }
  write_file_atomic(join(args.out, "bench.csv"), table);
  ordered_json meta;
  meta["tau"] = args.tau;
  meta["seed"] = args.seed;
  meta["target"] = args.target;
  meta["time_limit_s"] = args.time_limit_s;
  meta["threads"] = exec_threads(default_exec());
  meta["parallel_cells"] = args.parallel_cells;
  if (args.parallel_cells) meta["caveat"] = "cells ran concurrently and shared cores; times are not comparable to sequential runs";
  write_json(join(args.out, "bench_meta.json"), meta);
  return kConverged;
}

}  // namespace fisher::cli
