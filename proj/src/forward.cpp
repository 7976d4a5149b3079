#include "invopt/forward.hpp"

#include <limits>
#include <stdexcept>

namespace invopt {

ObjectiveSpec ObjectiveSpec::affine(Eigen::VectorXd c0, Eigen::MatrixXd C) {
  if (C.size() > 0 && C.rows() != c0.size())
    throw std::invalid_argument("ObjectiveSpec: C/c0 row mismatch");
  ObjectiveSpec obj;
  obj.c0 = std::move(c0);
  obj.C = std::move(C);
  return obj;
}

ObjectiveSpec ObjectiveSpec::signal_is_cost(std::vector<int> coords) {
  ObjectiveSpec obj;
  obj.passthrough = std::move(coords);
  return obj;
}

Eigen::VectorXd ObjectiveSpec::eval(const Eigen::VectorXd& s) const {
  if (!passthrough.empty()) {
    Eigen::VectorXd c(passthrough.size());
    for (size_t i = 0; i < passthrough.size(); ++i) c(i) = s(passthrough[i]);
    return c;
  }
  if (C.size() == 0) return c0;
  if (C.cols() != s.size())
    throw std::invalid_argument("ObjectiveSpec: signal length != C cols");
  return c0 + C * s;
}

namespace {

// Appends the membership rows H w - h in K for the internal coordinates of Z,
// starting at variable index w0.
void add_primitive_rows(ProgramBuilder& pb, const PrimitiveSet& Z, int w0) {
  int row = 0;
  for (const auto& cone : Z.cones) {
    pb.begin_block(cone.kind, cone.dim);
    for (int r = 0; r < cone.dim; ++r) {
      for (int j = 0; j < Z.dim_full(); ++j)
        if (Z.H(row + r, j) != 0.0) pb.coeff(r, w0 + j, Z.H(row + r, j));
      pb.rhs(r, Z.h(row + r));
    }
    pb.end_block();
    row += cone.dim;
  }
}

}  // namespace

ForwardResult solve_forward(const HypothesisParams& theta, const PrimitiveSet& Z,
                            const ObjectiveSpec& obj, const Eigen::VectorXd& s,
                            const SolveOptions& opts) {
  const Eigen::MatrixXd A = eval_A(theta, s);
  const Eigen::VectorXd b = eval_b(theta, s);
  const Eigen::VectorXd c = obj.eval(s);
  if (A.cols() != Z.dim_external() || A.rows() != c.size() || b.size() != c.size())
    throw std::invalid_argument("solve_forward: inconsistent dimensions");
  // Work in the internal coordinates w of Z (z = E w), so lifted sets keep
  // the single conic membership form. The integral relaxation is exact for a
  // linear objective because the LP attains a vertex of the relaxed set.
  const Eigen::MatrixXd Aeff = A * Z.E;
  const Eigen::VectorXd cw = Aeff.transpose() * c;

  ProgramBuilder pb;
  const int w0 = pb.add_vars(Z.dim_full());
  for (int j = 0; j < Z.dim_full(); ++j) pb.set_cost(w0 + j, cw(j));
  add_primitive_rows(pb, Z, w0);

  auto sol = solve(pb.build(), opts);
  ForwardResult res;
  res.status = sol.status;
  if (sol.status == SolveStatus::Optimal) {
    Eigen::VectorXd w = sol.primal.segment(w0, Z.dim_full());
    res.z_star = Z.E * w;
    res.x_star = A * res.z_star + b;
    res.value = c.dot(res.x_star);
  }
  return res;
}

double subopt_gap(const HypothesisParams& theta, const PrimitiveSet& Z,
                  const ObjectiveSpec& obj, const Eigen::VectorXd& x,
                  const Eigen::VectorXd& s, const SolveOptions& opts) {
  auto fwd = solve_forward(theta, Z, obj, s, opts);
  if (fwd.status == SolveStatus::Unbounded)
    return std::numeric_limits<double>::infinity();
  if (fwd.status != SolveStatus::Optimal)
    throw std::runtime_error("subopt_gap: forward problem " + to_string(fwd.status));
  return obj.eval(s).dot(x) - fwd.value;
}

}  // namespace invopt
