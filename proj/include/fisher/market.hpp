#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

namespace fisher {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

/// Utility is (sum_j c_j x_j^rho)^(1/rho).
struct Ces {
  double rho = 0.5;
};

/// Utility is (sum_j c_j x_j^r)^k, homogeneous of degree k*r.
struct AdditiveHomogeneous {
  double k = 2.0;
  double r = 0.5;
};

/// Linear utility regularized by sigma * sum_j log x_j over every good.
struct LinearBarrier {
  double sigma = 1e-3;
};

using UtilityKind = std::variant<Ces, AdditiveHomogeneous, LinearBarrier>;

struct SparseEntry {
  int index = 0;
  double value = 0.0;
};

struct UtilitySpec {
  UtilityKind kind = Ces{};
  std::vector<SparseEntry> coefficients;  // sorted by index, no duplicates

  bool is_linear_barrier() const { return std::holds_alternative<LinearBarrier>(kind); }
  /// Exponent of the power family; the CES rho or the additive r.
  double power() const;
  /// Homogeneity degree d of u. Throws for LinearBarrier.
  double degree() const;
};

struct MarketInstance {
  int n = 0;
  std::vector<double> budgets;
  std::vector<UtilitySpec> utilities;
  /// Empty, or one entry per player; a missing matrix means unconstrained.
  std::vector<std::optional<Mat>> constraints;

  int m() const { return static_cast<int>(budgets.size()); }
  double total_budget() const;
  bool has_constraints() const;
  const Mat* constraint(int i) const;
};

class MarketError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Empty iff the instance satisfies every structural invariant.
std::vector<std::string> validate(const MarketInstance& inst);

/// Throws MarketError with the first violations if validate() is not empty.
void require_valid(const MarketInstance& inst);

struct GeneratorParams {
  int n = 10;
  int m = 30;
  double tau = 0.2;
  double delta = 1.0;
  double rho = 0.5;
  std::uint64_t seed = 1;
  bool linear_barrier = false;
  double sigma = 1e-3;
};

/// Sparse random CES (or linear-barrier) market with budgets normalized to 1.
MarketInstance generate_random(const GeneratorParams& params);

enum class RatingScale { Raw, MaxNormalized };

struct IngestOptions {
  int max_users = 10000;
  int max_items = 1000;
  double rho = 0.5;
  RatingScale scale = RatingScale::Raw;
};

struct IngestResult {
  MarketInstance instance;
  std::vector<std::string> user_ids;  // player index -> user id
  std::vector<std::string> item_ids;  // good index -> item id
};

IngestResult ingest_ratings(const std::string& path, const IngestOptions& options);

struct FlowGraph {
  std::vector<std::string> node_names;
  std::vector<std::pair<int, int>> edges;      // directed (tail, head)
  std::vector<std::pair<int, int>> terminals;  // per player (source, sink)
};

/// Parses "u v" edge lines, then a line "terminals", then "s t" pairs.
FlowGraph read_flow_graph(const std::string& path);
FlowGraph parse_flow_graph(const std::string& text);

/// Node-arc conservation rows over variables [x_0, x_e...], one row per node.
Mat flow_conservation_rows(const FlowGraph& graph, int source, int sink);

/// Market over goods [flow value, edges...]. One redundant conservation row
/// is removed per player so every A_i has full row rank.
MarketInstance build_flow_instance(const FlowGraph& graph, double rho);

int numeric_rank(const Mat& a, double rel_tol = 1e-10);

}  // namespace fisher
