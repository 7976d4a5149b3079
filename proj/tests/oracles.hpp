// Independent test oracles. These deliberately avoid the library's solve
// paths: vertex enumeration and grid search only, so they can certify the
// solver and loss implementations from the outside.
#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <vector>

#include "invopt/conic.hpp"

namespace oracles {

struct LpVertexResult {
  bool feasible = false;
  double value = std::numeric_limits<double>::infinity();
  Eigen::VectorXd argmin;
};

// Brute-force vertex enumeration for small LPs (Zero/Nonneg blocks and
// variable bounds only). Assumes the feasible set is pointed and bounded,
// which holds for every instance the tests construct.
inline LpVertexResult lp_vertex_oracle(const invopt::ConicProgram& prog) {
  const int n = prog.num_vars;
  std::vector<Eigen::RowVectorXd> eq_rows, in_rows;
  std::vector<double> eq_rhs, in_rhs;
  for (const auto& blk : prog.blocks) {
    Eigen::MatrixXd A(blk.A);
    for (int r = 0; r < blk.cone.dim; ++r) {
      if (blk.cone.kind == invopt::ConeKind::Zero) {
        eq_rows.push_back(A.row(r));
        eq_rhs.push_back(blk.b(r));
      } else {
        in_rows.push_back(A.row(r));
        in_rhs.push_back(blk.b(r));
      }
    }
  }
  if (prog.var_bounds) {
    for (int v = 0; v < n; ++v) {
      const auto& [lo, hi] = (*prog.var_bounds)[v];
      if (std::isfinite(lo)) {
        in_rows.push_back(Eigen::RowVectorXd::Unit(n, v));
        in_rhs.push_back(lo);
      }
      if (std::isfinite(hi)) {
        in_rows.push_back(-Eigen::RowVectorXd::Unit(n, v));
        in_rhs.push_back(-hi);
      }
    }
  }
  const int ne = static_cast<int>(eq_rows.size());
  const int ni = static_cast<int>(in_rows.size());
  const int k = n - ne;
  LpVertexResult best;
  if (k < 0) return best;

  std::vector<int> idx(k);
  std::function<void(int, int)> rec = [&](int start, int depth) {
    if (depth == k) {
      Eigen::MatrixXd M(n, n);
      Eigen::VectorXd rhs(n);
      for (int r = 0; r < ne; ++r) {
        M.row(r) = eq_rows[r];
        rhs(r) = eq_rhs[r];
      }
      for (int r = 0; r < k; ++r) {
        M.row(ne + r) = in_rows[idx[r]];
        rhs(ne + r) = in_rhs[idx[r]];
      }
      Eigen::FullPivLU<Eigen::MatrixXd> lu(M);
      if (!lu.isInvertible()) return;
      Eigen::VectorXd v = lu.solve(rhs);
      for (int r = 0; r < ni; ++r)
        if (in_rows[r].dot(v) < in_rhs[r] - 1e-7) return;
      const double val = prog.c.dot(v);
      if (!best.feasible || val < best.value) {
        best.feasible = true;
        best.value = val;
        best.argmin = v;
      }
      return;
    }
    for (int i = start; i < ni; ++i) {
      idx[depth] = i;
      rec(i + 1, depth + 1);
    }
  };
  rec(0, 0);
  return best;
}

// Grid search minimizer of f over the unit simplex in dimension 2 at the
// given resolution.
inline std::pair<double, Eigen::Vector2d> grid_min_simplex2(
    const std::function<double(const Eigen::Vector2d&)>& f, double step) {
  double best = std::numeric_limits<double>::infinity();
  Eigen::Vector2d arg;
  for (double t = 0.0; t <= 1.0 + 1e-12; t += step) {
    Eigen::Vector2d x(t, 1.0 - t);
    const double v = f(x);
    if (v < best) {
      best = v;
      arg = x;
    }
  }
  return {best, arg};
}

}  // namespace oracles
