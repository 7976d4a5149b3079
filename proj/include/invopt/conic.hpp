#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "invopt/geometry.hpp"

namespace invopt {

/// One conic constraint block: A v - b in cone.
struct ConstraintBlock {
  Eigen::SparseMatrix<double> A;
  Eigen::VectorXd b;
  Cone cone;
};

/// Normal form for every continuous subproblem in the repo:
///   minimize 1/2 v'Qv + c'v  s.t.  A_j v - b_j in K_j  for each block j,
/// with optional per-variable bounds. Q, when present, must be PSD.
struct ConicProgram {
  int num_vars = 0;
  Eigen::VectorXd c;
  std::optional<Eigen::SparseMatrix<double>> Q;
  std::vector<ConstraintBlock> blocks;
  std::optional<std::vector<std::pair<double, double>>> var_bounds;  // -inf/inf allowed

  void validate() const;  // throws on malformed input (incl. Q not PSD)
};

enum class SolveStatus { Optimal, Infeasible, Unbounded, NumericalFailure, IterationLimit };

std::string to_string(SolveStatus s);

/// Dual sign convention: the multiplier of block j lies in K_j* and the
/// Lagrangian is L = 1/2 v'Qv + c'v - sum_j lambda_j'(A_j v - b_j).
struct ConicSolution {
  SolveStatus status = SolveStatus::NumericalFailure;
  Eigen::VectorXd primal;
  double objective_value = 0.0;
  std::vector<Eigen::VectorXd> duals;       // one per constraint block
  Eigen::VectorXd bound_duals;              // lower-bound minus upper-bound multipliers
  int iterations = 0;
  double primal_residual = 0.0;
  double dual_residual = 0.0;
  double gap = 0.0;
};

struct SolveOptions {
  double feas_tol = 1e-7;
  double gap_tol = 1e-6;
  int max_iters = 100;
  bool deterministic = true;  // the embedded backend is always deterministic
};

ConicSolution solve(const ConicProgram& prog, const SolveOptions& opts = {});

/// Plain-text dump of a program for external cross-checking.
/// Grammar, one line each:
///   vars <n>
///   min  <c_0> ... <c_{n-1}>
///   quad <i> <j> <Q_ij>            (repeated, upper triangle, only if Q set)
///   bound <i> <lo> <hi>            (repeated, only if bounds set)
///   block <cone> <rows> ; then <rows> lines: <a_0> ... <a_{n-1}> | <b_i>
void dump_program(const ConicProgram& prog, std::ostream& os);

/// Incremental builder used by the trainers to assemble joint programs.
class ProgramBuilder {
 public:
  int add_vars(int count);  // returns the first index of the new range
  void set_cost(int var, double coeff);
  void add_quad_cost(int var_i, int var_j, double coeff);  // adds to Q (symmetric)
  void begin_block(ConeKind kind, int rows);
  void coeff(int local_row, int var, double value);  // within the open block
  void rhs(int local_row, double value);
  void end_block();
  /// Convenience: one extra row appended as its own block.
  void add_row(ConeKind kind, const std::vector<std::pair<int, double>>& terms,
               double rhs_value);
  void set_var_bounds(int var, double lo, double hi);

  ConicProgram build();
  int num_vars() const { return nvars_; }
  int num_blocks() const { return static_cast<int>(blocks_.size()); }

 private:
  struct PendingBlock {
    ConeKind kind;
    int rows;
    std::vector<Eigen::Triplet<double>> trips;
    Eigen::VectorXd b;
  };
  int nvars_ = 0;
  std::vector<double> cost_;
  std::vector<Eigen::Triplet<double>> quad_;
  std::vector<PendingBlock> blocks_;
  std::optional<PendingBlock> open_;
  std::vector<std::pair<double, double>> bounds_;
  bool any_bound_ = false;
};

}  // namespace invopt
