#include "fisher/market.hpp"

#include "fisher/random.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>
#include <unordered_map>

namespace fisher {

double UtilitySpec::power() const {
  if (const auto* c = std::get_if<Ces>(&kind)) return c->rho;
  if (const auto* a = std::get_if<AdditiveHomogeneous>(&kind)) return a->r;
  return 1.0;
}

double UtilitySpec::degree() const {
  if (std::holds_alternative<Ces>(kind)) return 1.0;
  if (const auto* a = std::get_if<AdditiveHomogeneous>(&kind)) return a->k * a->r;
  throw MarketError("degree is undefined for linear-barrier utilities");
}

double MarketInstance::total_budget() const {
  double s = 0.0;
  for (double w : budgets) s += w;
  return s;
}

bool MarketInstance::has_constraints() const {
  return std::any_of(constraints.begin(), constraints.end(),
                     [](const auto& a) { return a.has_value() && a->rows() > 0; });
}

const Mat* MarketInstance::constraint(int i) const {
  if (constraints.empty()) return nullptr;
  const auto& a = constraints[static_cast<std::size_t>(i)];
  if (!a || a->rows() == 0) return nullptr;
  return &*a;
}

int numeric_rank(const Mat& a, double rel_tol) {
  if (a.rows() == 0 || a.cols() == 0) return 0;
  Eigen::ColPivHouseholderQR<Mat> qr(a);
  qr.setThreshold(rel_tol);
  return static_cast<int>(qr.rank());
}

std::vector<std::string> validate(const MarketInstance& inst) {
  std::vector<std::string> out;
  auto player = [](int i) { return "player " + std::to_string(i) + ": "; };
  if (inst.n < 1) out.push_back("n must be positive");
  if (inst.m() < 1) out.push_back("m must be positive");
  if (inst.utilities.size() != inst.budgets.size())
    out.push_back("budgets and utilities differ in length");
  if (!inst.constraints.empty() && inst.constraints.size() != inst.budgets.size())
    out.push_back("constraints must be empty or one entry per player");
  if (!out.empty()) return out;

  std::vector<char> valued(static_cast<std::size_t>(inst.n), 0);
  for (int i = 0; i < inst.m(); ++i) {
    const double w = inst.budgets[static_cast<std::size_t>(i)];
    if (!(w > 0.0) || !std::isfinite(w)) out.push_back(player(i) + "budget must be positive");
    const UtilitySpec& u = inst.utilities[static_cast<std::size_t>(i)];
    if (const auto* c = std::get_if<Ces>(&u.kind)) {
      if (!std::isfinite(c->rho)) out.push_back(player(i) + "rho must be finite");
      else if (c->rho == 0.0) out.push_back(player(i) + "rho must be nonzero");
      else if (c->rho >= 1.0) out.push_back(player(i) + "rho must be < 1");
    } else if (const auto* a = std::get_if<AdditiveHomogeneous>(&u.kind)) {
      const bool ok = (a->r > 0.0 && a->r < 1.0 && a->k > 0.0 && a->k <= 1.0 / a->r) ||
                      (a->r < 0.0 && a->k >= 1.0 / a->r && a->k < 0.0);
      if (!ok)
        out.push_back(player(i) +
                      "additive parameters must satisfy 0<r<1, 0<k<=1/r or r<0, 1/r<=k<0");
    } else if (const auto* l = std::get_if<LinearBarrier>(&u.kind)) {
      if (!(l->sigma > 0.0) || !std::isfinite(l->sigma))
        out.push_back(player(i) + "sigma must be positive");
    }
    bool any_positive = false;
    int prev = -1;
    for (const SparseEntry& e : u.coefficients) {
      if (e.index < 0 || e.index >= inst.n) {
        out.push_back(player(i) + "coefficient index out of range");
        continue;
      }
      if (e.index <= prev) out.push_back(player(i) + "coefficient indices must be strictly increasing");
      prev = e.index;
      if (!(e.value >= 0.0) || !std::isfinite(e.value))
        out.push_back(player(i) + "coefficients must be finite and nonnegative");
      if (e.value > 0.0) {
        any_positive = true;
        valued[static_cast<std::size_t>(e.index)] = 1;
      }
    }
    if (!any_positive) out.push_back(player(i) + "at least one coefficient must be positive");

    if (!inst.constraints.empty() && inst.constraints[static_cast<std::size_t>(i)]) {
      const Mat& a = *inst.constraints[static_cast<std::size_t>(i)];
      if (a.rows() == 0) continue;
      if (a.cols() != inst.n) {
        out.push_back(player(i) + "constraint matrix must have n columns");
        continue;
      }
      if (u.is_linear_barrier())
        out.push_back(player(i) + "constraints are not supported for linear-barrier utilities");
      if (numeric_rank(a) != a.rows()) out.push_back(player(i) + "constraint matrix must have full row rank");
      std::vector<char> positive(static_cast<std::size_t>(inst.n), 0);
      for (const SparseEntry& e : u.coefficients)
        if (e.index >= 0 && e.index < inst.n && e.value > 0.0) positive[static_cast<std::size_t>(e.index)] = 1;
      for (int j = 0; j < inst.n; ++j)
        if (!positive[static_cast<std::size_t>(j)] && a.col(j).lpNorm<Eigen::Infinity>() > 0.0) {
          out.push_back(player(i) + "constrained goods must have positive coefficients");
          break;
        }
    }
  }
  for (int j = 0; j < inst.n; ++j)
    if (!valued[static_cast<std::size_t>(j)])
      out.push_back("good " + std::to_string(j) + ": not valued by any player");
  return out;
}

void require_valid(const MarketInstance& inst) {
  const auto report = validate(inst);
  if (report.empty()) return;
  std::string msg = "invalid market instance: " + report.front();
  if (report.size() > 1) msg += " (+" + std::to_string(report.size() - 1) + " more)";
  throw MarketError(msg);
}

MarketInstance generate_random(const GeneratorParams& gp) {
  if (gp.n < 1 || gp.m < 1) throw MarketError("generator needs n >= 1 and m >= 1");
  if (!(gp.tau > 0.0 && gp.tau <= 1.0)) throw MarketError("tau must lie in (0, 1]");
  if (!(gp.delta > 0.0)) throw MarketError("delta must be positive");
  if (gp.linear_barrier ? !(gp.sigma > 0.0) : !(gp.rho < 1.0 && gp.rho != 0.0 && std::isfinite(gp.rho)))
    throw MarketError(gp.linear_barrier ? "sigma must be positive" : "rho must lie in (-inf, 0) or (0, 1)");

  Rng rng(gp.seed);
  const auto n = static_cast<std::size_t>(gp.n);
  const auto m = static_cast<std::size_t>(gp.m);
  std::vector<std::vector<SparseEntry>> rows(m);
  std::vector<char> col_hit(n, 0);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      if (rng.uniform() < gp.tau) {
        rows[i].push_back({static_cast<int>(j), gp.delta * rng.uniform_open_closed()});
        col_hit[j] = 1;
      }
    }
  }
  for (std::size_t i = 0; i < m; ++i) {
    if (rows[i].empty()) {
      const auto j = static_cast<int>(rng.index(n));
      rows[i].push_back({j, gp.delta * rng.uniform_open_closed()});
      col_hit[static_cast<std::size_t>(j)] = 1;
    }
  }
  for (std::size_t j = 0; j < n; ++j) {
    if (col_hit[j]) continue;
    auto& row = rows[rng.index(m)];
    SparseEntry e{static_cast<int>(j), gp.delta * rng.uniform_open_closed()};
    row.insert(std::lower_bound(row.begin(), row.end(), e,
                                [](const SparseEntry& a, const SparseEntry& b) { return a.index < b.index; }),
               e);
    col_hit[j] = 1;
  }

  MarketInstance inst;
  inst.n = gp.n;
  inst.budgets.resize(m);
  double total = 0.0;
  for (auto& w : inst.budgets) {
    w = rng.uniform_open_closed();
    total += w;
  }
  for (auto& w : inst.budgets) w /= total;
  inst.utilities.resize(m);
  for (std::size_t i = 0; i < m; ++i) {
    if (gp.linear_barrier) inst.utilities[i].kind = LinearBarrier{gp.sigma};
    else inst.utilities[i].kind = Ces{gp.rho};
    inst.utilities[i].coefficients = std::move(rows[i]);
  }
  return inst;
}

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : line) {
    if (ch == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (ch != '\r') {
      cur.push_back(ch);
    }
  }
  out.push_back(cur);
  for (auto& s : out) {
    const auto b = s.find_first_not_of(" \t");
    const auto e = s.find_last_not_of(" \t");
    s = (b == std::string::npos) ? std::string() : s.substr(b, e - b + 1);
  }
  return out;
}

}  // namespace

IngestResult ingest_ratings(const std::string& path, const IngestOptions& opt) {
  std::ifstream in(path);
  if (!in) throw MarketError("cannot open ratings file: " + path);
  if (opt.max_users < 1 || opt.max_items < 1) throw MarketError("max_users and max_items must be positive");

  // Users and items are admitted in order of first appearance.
  std::unordered_map<std::string, int> user_index, item_index;
  std::vector<std::string> users, items;
  std::map<std::pair<int, int>, double> ratings;  // last occurrence wins
  std::string line;
  long line_no = 0;
  bool header_seen = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    if (!header_seen) {
      header_seen = true;
      continue;
    }
    const auto fields = split_csv_line(line);
    if (fields.size() < 3 || fields[0].empty() || fields[1].empty())
      throw MarketError("ratings line " + std::to_string(line_no) + ": expected user_id,item_id,rating");
    double value = 0.0;
    try {
      std::size_t used = 0;
      value = std::stod(fields[2], &used);
      if (used != fields[2].size()) throw std::invalid_argument("trailing");
    } catch (const std::exception&) {
      throw MarketError("ratings line " + std::to_string(line_no) + ": malformed rating '" + fields[2] + "'");
    }
    if (!std::isfinite(value) || value < 0.0)
      throw MarketError("ratings line " + std::to_string(line_no) + ": rating must be finite and nonnegative");

    auto u = user_index.find(fields[0]);
    if (u == user_index.end()) {
      if (static_cast<int>(users.size()) >= opt.max_users) continue;
      u = user_index.emplace(fields[0], static_cast<int>(users.size())).first;
      users.push_back(fields[0]);
    }
    auto it = item_index.find(fields[1]);
    if (it == item_index.end()) {
      if (static_cast<int>(items.size()) >= opt.max_items) continue;
      it = item_index.emplace(fields[1], static_cast<int>(items.size())).first;
      items.push_back(fields[1]);
    }
    ratings[{u->second, it->second}] = value;
  }

  double max_rating = 0.0;
  std::vector<char> user_rated(users.size(), 0), item_rated(items.size(), 0);
  for (const auto& [key, v] : ratings) {
    if (v <= 0.0) continue;
    user_rated[static_cast<std::size_t>(key.first)] = 1;
    item_rated[static_cast<std::size_t>(key.second)] = 1;
    max_rating = std::max(max_rating, v);
  }
  std::vector<int> user_map(users.size(), -1), item_map(items.size(), -1);
  IngestResult res;
  for (std::size_t i = 0; i < users.size(); ++i)
    if (user_rated[i]) {
      user_map[i] = static_cast<int>(res.user_ids.size());
      res.user_ids.push_back(users[i]);
    }
  for (std::size_t j = 0; j < items.size(); ++j)
    if (item_rated[j]) {
      item_map[j] = static_cast<int>(res.item_ids.size());
      res.item_ids.push_back(items[j]);
    }
  if (res.user_ids.empty() || res.item_ids.empty()) throw MarketError("ratings file yields an empty market");

  MarketInstance& inst = res.instance;
  inst.n = static_cast<int>(res.item_ids.size());
  const auto m = res.user_ids.size();
  inst.budgets.assign(m, 1.0 / static_cast<double>(m));
  inst.utilities.resize(m);
  for (auto& u : inst.utilities) u.kind = Ces{opt.rho};
  const double scale = (opt.scale == RatingScale::MaxNormalized) ? 1.0 / max_rating : 1.0;
  for (const auto& [key, v] : ratings) {  // map order: by user, then item
    if (v <= 0.0) continue;
    const int i = user_map[static_cast<std::size_t>(key.first)];
    const int j = item_map[static_cast<std::size_t>(key.second)];
    inst.utilities[static_cast<std::size_t>(i)].coefficients.push_back({j, v * scale});
  }
  for (auto& u : inst.utilities)
    std::sort(u.coefficients.begin(), u.coefficients.end(),
              [](const SparseEntry& a, const SparseEntry& b) { return a.index < b.index; });
  return res;
}

FlowGraph parse_flow_graph(const std::string& text) {
  FlowGraph g;
  std::unordered_map<std::string, int> ids;
  auto node = [&](const std::string& name) {
    auto it = ids.find(name);
    if (it != ids.end()) return it->second;
    const int id = static_cast<int>(g.node_names.size());
    ids.emplace(name, id);
    g.node_names.push_back(name);
    return id;
  };
  std::istringstream in(text);
  std::string line;
  long line_no = 0;
  bool in_terminals = false;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    std::istringstream ls(line);
    std::string a, b, extra;
    if (!(ls >> a)) continue;
    if (a == "terminals") {
      in_terminals = true;
      continue;
    }
    if (!(ls >> b) || (ls >> extra))
      throw MarketError("graph line " + std::to_string(line_no) + ": expected two node names");
    if (in_terminals) {
      auto sa = ids.find(a), sb = ids.find(b);
      if (sa == ids.end() || sb == ids.end())
        throw MarketError("graph line " + std::to_string(line_no) + ": terminal is not a graph node");
      if (sa->second == sb->second)
        throw MarketError("graph line " + std::to_string(line_no) + ": source equals sink");
      g.terminals.emplace_back(sa->second, sb->second);
    } else {
      const int u = node(a);
      const int v = node(b);
      if (u == v) throw MarketError("graph line " + std::to_string(line_no) + ": self loop");
      g.edges.emplace_back(u, v);
    }
  }
  if (g.edges.empty()) throw MarketError("graph has no edges");
  if (g.terminals.empty()) throw MarketError("graph has no terminal pairs");
  return g;
}

FlowGraph read_flow_graph(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw MarketError("cannot open graph file: " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_flow_graph(ss.str());
}

Mat flow_conservation_rows(const FlowGraph& g, int s, int t) {
  const int nodes = static_cast<int>(g.node_names.size());
  const int vars = 1 + static_cast<int>(g.edges.size());
  Mat a = Mat::Zero(nodes, vars);
  // Row v: inflow - outflow, with the flow value x_0 entering at s and leaving at t.
  for (int e = 0; e < static_cast<int>(g.edges.size()); ++e) {
    a(g.edges[static_cast<std::size_t>(e)].first, 1 + e) -= 1.0;
    a(g.edges[static_cast<std::size_t>(e)].second, 1 + e) += 1.0;
  }
  a(s, 0) += 1.0;
  a(t, 0) -= 1.0;
  return a;
}

namespace {

bool reaches(const FlowGraph& g, int s, int t) {
  std::vector<char> seen(g.node_names.size(), 0);
  std::vector<int> stack{s};
  seen[static_cast<std::size_t>(s)] = 1;
  while (!stack.empty()) {
    const int v = stack.back();
    stack.pop_back();
    if (v == t) return true;
    for (const auto& [a, b] : g.edges)
      if (a == v && !seen[static_cast<std::size_t>(b)]) {
        seen[static_cast<std::size_t>(b)] = 1;
        stack.push_back(b);
      }
  }
  return false;
}

}  // namespace

MarketInstance build_flow_instance(const FlowGraph& g, double rho) {
  for (const auto& [s, t] : g.terminals)
    if (!reaches(g, s, t))
      throw MarketError("no directed path from " + g.node_names[static_cast<std::size_t>(s)] + " to " +
                        g.node_names[static_cast<std::size_t>(t)]);
  MarketInstance inst;
  inst.n = 1 + static_cast<int>(g.edges.size());
  const auto m = g.terminals.size();
  inst.budgets.assign(m, 1.0 / static_cast<double>(m));
  inst.utilities.resize(m);
  inst.constraints.resize(m);
  for (std::size_t i = 0; i < m; ++i) {
    auto& u = inst.utilities[i];
    u.kind = Ces{rho};
    for (int j = 0; j < inst.n; ++j) u.coefficients.push_back({j, 1.0});
    Mat rows = flow_conservation_rows(g, g.terminals[i].first, g.terminals[i].second);
    // Keep an independent subset of rows, scanning nodes in order.
    Mat kept(0, inst.n);
    for (Eigen::Index r = 0; r < rows.rows(); ++r) {
      if (rows.row(r).lpNorm<Eigen::Infinity>() == 0.0) continue;
      Mat trial(kept.rows() + 1, inst.n);
      trial << kept, rows.row(r);
      if (numeric_rank(trial) == trial.rows()) kept = std::move(trial);
    }
    inst.constraints[i] = std::move(kept);
  }
  return inst;
}

}  // namespace fisher
