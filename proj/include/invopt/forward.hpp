#pragma once

#include <Eigen/Dense>

#include "invopt/conic.hpp"
#include "invopt/geometry.hpp"
#include "invopt/hypothesis.hpp"

namespace invopt {

/// Linear objective c(s)'x with either an affine map c(s) = c0 + C s or a
/// pass-through that reads selected coordinates of the signal as the cost.
struct ObjectiveSpec {
  Eigen::VectorXd c0;        // length n
  Eigen::MatrixXd C;         // n x K (zero columns allowed)
  std::vector<int> passthrough;  // non-empty: c(s)_i = s(passthrough[i])

  static ObjectiveSpec affine(Eigen::VectorXd c0, Eigen::MatrixXd C);
  static ObjectiveSpec signal_is_cost(std::vector<int> coords);

  Eigen::VectorXd eval(const Eigen::VectorXd& s) const;
};

/// Result of the recovered forward problem
///   min c(s)'x  s.t.  x = A(s) z + b(s), z in Z.
struct ForwardResult {
  SolveStatus status = SolveStatus::NumericalFailure;
  Eigen::VectorXd x_star;  // A(s) z_star + b(s)
  Eigen::VectorXd z_star;  // external coordinates of Z
  double value = 0.0;      // c(s)' x_star
};

ForwardResult solve_forward(const HypothesisParams& theta, const PrimitiveSet& Z,
                            const ObjectiveSpec& obj, const Eigen::VectorXd& s,
                            const SolveOptions& opts = {});

/// Suboptimality gap J(x, s) = c(s)'x - V(s) with V the forward optimal value.
/// Returns +infinity when the forward problem is unbounded; throws
/// std::runtime_error when it is infeasible or fails numerically.
double subopt_gap(const HypothesisParams& theta, const PrimitiveSet& Z,
                  const ObjectiveSpec& obj, const Eigen::VectorXd& x,
                  const Eigen::VectorXd& s, const SolveOptions& opts = {});

}  // namespace invopt
