#pragma once

#include <Eigen/Dense>
#include <limits>
#include <nlohmann/json_fwd.hpp>
#include <string>
#include <utility>
#include <vector>

#include "invopt/dataset.hpp"
#include "invopt/losses.hpp"
#include "invopt/train_bcd.hpp"

namespace invopt {

// ---------------------------------------------------------------------------
// Generic mixed-integer layer
// ---------------------------------------------------------------------------

/// A conic program plus per-variable binary flags. Every bilinear product of
/// the source formulation must already be linearized (McCormick) before the
/// program enters this type; the solver below only branches on the binaries.
struct MixedIntegerProgram {
  ConicProgram program;
  std::vector<bool> binary;  // length num_vars; true => variable in {0, 1}
  double big_M = 10.0;       // box used when the products were linearized

  void validate() const;  // throws std::invalid_argument on malformed input
};

struct BnbOptions {
  double gap_tol = 1e-6;   // absolute incumbent-vs-bound gap at termination
  int max_nodes = 200000;  // budget; exceeding it reports the best found
  double int_tol = 1e-6;   // integrality tolerance on relaxation solutions
  SolveOptions solver;
  // Optional warm-start incumbent from a primal heuristic; the primal must be
  // a feasible integral point of the full program (length num_vars).
  double incumbent_objective = std::numeric_limits<double>::infinity();
  Eigen::VectorXd incumbent_primal;
};

struct BnbResult {
  SolveStatus status = SolveStatus::NumericalFailure;
  Eigen::VectorXd primal;  // incumbent (empty when none found)
  double objective = 0.0;
  double mip_gap = 0.0;  // |incumbent - best bound| at termination
  int nodes_explored = 0;
};

/// Deterministic best-first branch and bound on conic relaxations: nodes are
/// ordered by (bound, creation index), branching picks the most fractional
/// binary (lowest index on ties).
BnbResult branch_and_bound(const MixedIntegerProgram& mip,
                           const BnbOptions& opts = {});

/// McCormick rows forcing w = y * a for binary y and continuous a in
/// [lo, hi]; exact (the feasible interval for w collapses to a point) at
/// every binary y.
void add_mccormick_product(ProgramBuilder& pb, int w, int y, int a, double lo,
                           double hi);

// ---------------------------------------------------------------------------
// Scalar-alpha convex reformulation
// ---------------------------------------------------------------------------

struct ConvexAlphaResult {
  SolveStatus status = SolveStatus::NumericalFailure;
  HypothesisParams theta;  // structure = ScalarAlpha
  double alpha = 0.0;
  double train_loss = 0.0;
};

/// Restricts A(s) to a nonnegative scalar (scaling plus translation of Z) and
/// solves the training problem globally with a single convex program, using
/// the substitution zeta_i = alpha * z_i. Requires Z.dim_external() == n.
ConvexAlphaResult train_convex_alpha(const IODataset& data,
                                     const PrimitiveSet& Z,
                                     const ObjectiveSpec& obj,
                                     const NormSpec& norm, LossKind loss,
                                     const SolveOptions& opts = {});

// ---------------------------------------------------------------------------
// Binary-simplex MILP
// ---------------------------------------------------------------------------

struct MilpSimplexResult {
  SolveStatus status = SolveStatus::NumericalFailure;
  HypothesisParams theta;  // constant A (A_1..A_K zero), affine b
  double train_loss = 0.0;
  double mip_gap = 0.0;
  int nodes_explored = 0;
};

/// Trains a constant matrix A (entries in [-M, M]) and an affine b over the
/// binary simplex Z = {z in {0,1}^p : e'z = 1}. Each point selects one column
/// of A; the products A z are linearized with McCormick rows and the
/// optimal-value condition is written per column, c(s)'(x + gamma - b(s)) <=
/// c(s)'A e_j for all j, which eliminates the dual multiplier. The global
/// optimum is relative to the [-M, M] box on A.
MilpSimplexResult train_milp_simplex(const IODataset& data,
                                     const ObjectiveSpec& obj, int p,
                                     LossKind loss, const NormSpec& norm,
                                     double bounds_M = 10.0,
                                     const BnbOptions& opts = {});

// ---------------------------------------------------------------------------
// Network-structure recovery
// ---------------------------------------------------------------------------

/// Candidate-line model: every unordered node pair is a potential line with a
/// fixed signed incidence column (-1 at `from`, +1 at `to`); the trainer
/// chooses the existence vector y. Generators sit at known nodes via the
/// placement matrix G (injection = G x for observed generations x); demands
/// and generation costs live inside the signal vector at fixed offsets.
struct NetworkModel {
  int num_nodes = 0;
  std::vector<std::pair<int, int>> lines;  // candidate (from, to), from < to
  Eigen::MatrixXd incidence;               // num_nodes x lines.size()
  double f_bar = 0.0;                      // per-line capacity, flows in [-f_bar, f_bar]
  Eigen::MatrixXd G;                       // num_nodes x n_gen placement
  Eigen::VectorXd capacity;                // generator upper bounds (lower 0)
  int cost_offset = 0;                     // c(s) = s.segment(cost_offset, n_gen)
  int demand_offset = 0;                   // d(s) = s.segment(demand_offset, num_nodes)

  int n_gen() const { return static_cast<int>(G.cols()); }
  int num_lines() const { return static_cast<int>(lines.size()); }
  Eigen::VectorXd cost(const Eigen::VectorXd& s) const;
  Eigen::VectorXd demand(const Eigen::VectorXd& s) const;
  void validate() const;  // throws std::invalid_argument
};

/// All-pairs candidate lines in lexicographic order; signals are laid out as
/// [costs (one per generator), demands (one per node)].
NetworkModel make_network(int num_nodes, const std::vector<int>& generator_nodes,
                          double capacity, double f_bar);

enum class NetworkBackend { Enumeration, BranchAndBound };

struct NetworkResult {
  SolveStatus status = SolveStatus::NumericalFailure;
  std::vector<int> y;      // line existence, one flag per candidate
  Eigen::MatrixXd A;       // gated incidence matrix, num_nodes x num_lines
  HypothesisParams theta;  // SignedIncidence hypothesis over the injections
  double train_loss = 0.0;
  long configs_evaluated = 0;  // exact per-configuration loss evaluations
  int nodes_explored = 0;      // branch-and-bound only
};

/// Recovers the line-existence vector minimizing the training loss. The
/// enumeration backend scores every configuration (refused above 2^20) with
/// independent convex solves, reduced in a fixed order; branch and bound
/// relaxes y to [0,1] (line capacity scaled by y), bounds nodes by the
/// optimality-row-free relaxation and evaluates leaves exactly, matching the
/// enumeration optimum.
NetworkResult train_network_milp(const IODataset& data, const NetworkModel& net,
                                 LossKind loss, const NormSpec& norm,
                                 NetworkBackend backend,
                                 const SolveOptions& opts = {});

/// Training/evaluation loss of one fixed configuration (mean over the
/// dataset); +inf when some sample's demand cannot be met.
double network_config_loss(const IODataset& data, const NetworkModel& net,
                           const std::vector<int>& y, LossKind loss,
                           const NormSpec& norm, const SolveOptions& opts = {});

/// Edge-list export [{"from": r, "to": q, "exists": bool}, ...].
nlohmann::json network_edge_list(const NetworkModel& net,
                                 const std::vector<int>& y);
std::string network_dot(const NetworkModel& net, const std::vector<int>& y);

// ---------------------------------------------------------------------------
// Linear-regression baseline
// ---------------------------------------------------------------------------

struct RegressionBaseline {
  Eigen::MatrixXd A_lin;  // n x K
  Eigen::VectorXd b_lin;  // n
  double mse = 0.0;       // mean squared residual per sample
  bool rank_deficient = false;  // minimum-norm solution was taken

  Eigen::VectorXd predict(const Eigen::VectorXd& s) const;
};

/// Least-squares fit of x on affine features of s (the policy induced by
/// learning a quadratic cost with unknown constraints).
RegressionBaseline fit_regression_baseline(const IODataset& data);

/// Scores the point predictor through the shared report type: the estimated
/// columns hold the mean residual norm and the true columns come from the
/// oracle at the predicted decisions.
EvalReport evaluate_regression(const RegressionBaseline& model,
                               const NormSpec& norm, const IODataset& test_data,
                               const TrueProblemOracle* oracle = nullptr,
                               const SolveOptions& opts = {});

}  // namespace invopt
