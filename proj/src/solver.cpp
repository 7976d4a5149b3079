#include "invopt/conic.hpp"

#include <Eigen/SparseCholesky>
#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>
#include <stdexcept>

namespace invopt {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Internal standard form:
//   min 1/2 v'Qv + c'v  s.t.  Aeq v = beq,  s = G v - hc in K,
// where K is an orthant of dimension m_l followed by SOC blocks.
struct Internal {
  int n = 0;
  Eigen::SparseMatrix<double> Q, Aeq, G;
  Eigen::VectorXd c, beq, hc;
  int m_l = 0;
  std::vector<int> soc_dims;
  int m() const { return static_cast<int>(hc.size()); }
  int p() const { return static_cast<int>(beq.size()); }
  // maps from original blocks into internal rows
  struct BlockMap {
    bool is_eq = false;
    int offset = 0;  // into eq rows or cone rows
    int rows = 0;
  };
  std::vector<BlockMap> block_maps;
  int bound_rows_offset = -1;  // first orthant row holding variable bounds
  std::vector<std::tuple<int, int, bool>> bound_map;  // (row, var, is_lower)
  std::vector<std::pair<int, int>> pinned_map;  // (eq row, var) for lo == hi
};

double cone_degree(const Internal& in) {
  return in.m_l + static_cast<double>(in.soc_dims.size());
}

// --- Jordan algebra over the orthant + SOC product -------------------------

struct ConeOps {
  int m_l;
  std::vector<int> soc;

  Eigen::VectorXd identity(int m) const {
    Eigen::VectorXd e = Eigen::VectorXd::Zero(m);
    e.head(m_l).setOnes();
    int off = m_l;
    for (int d : soc) {
      e(off) = 1.0;
      off += d;
    }
    return e;
  }

  Eigen::VectorXd product(const Eigen::VectorXd& u, const Eigen::VectorXd& v) const {
    Eigen::VectorXd r(u.size());
    r.head(m_l) = u.head(m_l).cwiseProduct(v.head(m_l));
    int off = m_l;
    for (int d : soc) {
      auto ub = u.segment(off, d);
      auto vb = v.segment(off, d);
      r(off) = ub.dot(vb);
      r.segment(off + 1, d - 1) = ub(0) * vb.tail(d - 1) + vb(0) * ub.tail(d - 1);
      off += d;
    }
    return r;
  }

  // Solves lam o x = u for x.
  Eigen::VectorXd solve_product(const Eigen::VectorXd& lam, const Eigen::VectorXd& u) const {
    Eigen::VectorXd x(u.size());
    x.head(m_l) = u.head(m_l).cwiseQuotient(lam.head(m_l));
    int off = m_l;
    for (int d : soc) {
      auto lb = lam.segment(off, d);
      auto ub = u.segment(off, d);
      // L(lam) = [l0, l1'; l1, l0 I]; solve via Schur complement.
      const double l0 = lb(0);
      const auto l1 = lb.tail(d - 1);
      const double det = l0 * l0 - l1.squaredNorm();
      const double x0 = (l0 * ub(0) - l1.dot(ub.tail(d - 1))) / det;
      x(off) = x0;
      x.segment(off + 1, d - 1) = (ub.tail(d - 1) - x0 * l1) / l0;
      off += d;
    }
    return x;
  }

  // Largest step alpha with u + alpha du staying in the cone (u interior).
  double step_to_boundary(const Eigen::VectorXd& u, const Eigen::VectorXd& du) const {
    double alpha = kInf;
    for (int i = 0; i < m_l; ++i) {
      if (du(i) < 0) alpha = std::min(alpha, -u(i) / du(i));
    }
    int off = m_l;
    for (int d : soc) {
      auto ub = u.segment(off, d);
      auto db = du.segment(off, d);
      const double u0 = ub(0), d0 = db(0);
      const double a = d0 * d0 - db.tail(d - 1).squaredNorm();
      const double b = u0 * d0 - ub.tail(d - 1).dot(db.tail(d - 1));
      const double c0 = std::max(u0 * u0 - ub.tail(d - 1).squaredNorm(), 0.0);
      // roots of a t^2 + 2 b t + c0 = 0, f(0) = c0 >= 0
      const double disc = b * b - a * c0;
      double root = kInf;
      if (std::abs(a) < 1e-14) {
        if (b < 0) root = -c0 / (2 * b);
      } else if (disc >= 0) {
        const double sq = std::sqrt(disc);
        const double r1 = (-b - sq) / a;
        const double r2 = (-b + sq) / a;
        for (double r : {r1, r2})
          if (r > 0 && r < root) root = r;
      }
      alpha = std::min(alpha, root);
      if (d0 < 0) alpha = std::min(alpha, -u0 / d0);
      off += d;
    }
    return alpha;
  }

  // Cone margin: how far inside (negative if outside).
  double margin(const Eigen::VectorXd& u) const {
    double mg = kInf;
    if (m_l > 0) mg = u.head(m_l).minCoeff();
    int off = m_l;
    for (int d : soc) {
      mg = std::min(mg, u(off) - u.segment(off + 1, d - 1).norm());
      off += d;
    }
    return mg;
  }
};

// Nesterov-Todd scaling for the orthant + SOC product.
struct Scaling {
  Eigen::VectorXd d_l;   // orthant: W = diag(sqrt(s/z))
  std::vector<Eigen::MatrixXd> Wb, W2b;  // per SOC block
  const ConeOps* ops = nullptr;

  Eigen::VectorXd apply(const Eigen::VectorXd& u) const {  // W u
    Eigen::VectorXd r(u.size());
    r.head(ops->m_l) = d_l.cwiseProduct(u.head(ops->m_l));
    int off = ops->m_l;
    for (size_t k = 0; k < ops->soc.size(); ++k) {
      const int d = ops->soc[k];
      r.segment(off, d) = Wb[k] * u.segment(off, d);
      off += d;
    }
    return r;
  }
  Eigen::VectorXd apply_inv(const Eigen::VectorXd& u) const {  // W^{-1} u
    Eigen::VectorXd r(u.size());
    r.head(ops->m_l) = u.head(ops->m_l).cwiseQuotient(d_l);
    int off = ops->m_l;
    for (size_t k = 0; k < ops->soc.size(); ++k) {
      const int d = ops->soc[k];
      r.segment(off, d) = Wb[k].llt().solve(u.segment(off, d));
      off += d;
    }
    return r;
  }
};

Scaling nt_scaling(const ConeOps& ops, const Eigen::VectorXd& s,
                   const Eigen::VectorXd& z) {
  Scaling W;
  W.ops = &ops;
  W.d_l = (s.head(ops.m_l).cwiseQuotient(z.head(ops.m_l))).cwiseSqrt();
  int off = ops.m_l;
  for (int d : ops.soc) {
    auto sb = s.segment(off, d);
    auto zb = z.segment(off, d);
    const double js = std::sqrt(std::max(sb(0) * sb(0) - sb.tail(d - 1).squaredNorm(), 1e-300));
    const double jz = std::sqrt(std::max(zb(0) * zb(0) - zb.tail(d - 1).squaredNorm(), 1e-300));
    Eigen::VectorXd sbar = sb / js, zbar = zb / jz;
    const double gamma = std::sqrt((1.0 + sbar.dot(zbar)) / 2.0);
    // wbar = (sbar + J zbar) / (2 gamma), J = diag(1, -I)
    Eigen::VectorXd jzbar(d);
    jzbar(0) = zbar(0);
    jzbar.tail(d - 1) = -zbar.tail(d - 1);
    Eigen::VectorXd wbar = (sbar + jzbar) / (2.0 * gamma);
    const double eta = std::sqrt(js / jz);
    Eigen::MatrixXd Wm(d, d);
    Wm(0, 0) = wbar(0);
    Wm.block(0, 1, 1, d - 1) = wbar.tail(d - 1).transpose();
    Wm.block(1, 0, d - 1, 1) = wbar.tail(d - 1);
    Wm.block(1, 1, d - 1, d - 1) =
        Eigen::MatrixXd::Identity(d - 1, d - 1) +
        wbar.tail(d - 1) * wbar.tail(d - 1).transpose() / (1.0 + wbar(0));
    Wm *= eta;
    W.Wb.push_back(Wm);
    W.W2b.push_back(Wm * Wm);
    off += d;
  }
  return W;
}

// --- KKT system ------------------------------------------------------------

class KktSolver {
 public:
  KktSolver(const Internal& in) : in_(in) {
    n_ = in.n;
    p_ = in.p();
    m_ = in.m();
    dim_ = n_ + p_ + m_;
    base_.reserve(in.Q.nonZeros() + 2 * in.Aeq.nonZeros() + 2 * in.G.nonZeros() + dim_);
    auto add_sym = [&](const Eigen::SparseMatrix<double>& M, int ro, int co, bool sym) {
      for (int k = 0; k < M.outerSize(); ++k)
        for (Eigen::SparseMatrix<double>::InnerIterator it(M, k); it; ++it) {
          base_.emplace_back(ro + static_cast<int>(it.row()), co + static_cast<int>(it.col()),
                             it.value());
          if (sym)
            base_.emplace_back(co + static_cast<int>(it.col()), ro + static_cast<int>(it.row()),
                               it.value());
        }
    };
    add_sym(in.Q, 0, 0, false);
    add_sym(in.Aeq, n_, 0, true);
    add_sym(in.G, n_ + p_, 0, true);
    // static regularization keeps the factorization quasi-definite
    for (int i = 0; i < n_; ++i) base_.emplace_back(i, i, kReg);
    for (int i = n_; i < dim_; ++i) base_.emplace_back(i, i, -kReg);
    // placeholder entries for -W^2 so the pattern stays fixed
    w2_first_ = base_.size();
    for (int i = 0; i < in.m_l; ++i)
      base_.emplace_back(n_ + p_ + i, n_ + p_ + i, -1.0);
    int off = in.m_l;
    for (int d : in.soc_dims) {
      for (int r = 0; r < d; ++r)
        for (int c = 0; c < d; ++c)
          base_.emplace_back(n_ + p_ + off + r, n_ + p_ + off + c, r == c ? -1.0 : 0.0);
      off += d;
    }
  }

  bool factor(const Scaling* W) {
    std::vector<Eigen::Triplet<double>> trips = base_;
    size_t idx = w2_first_;
    if (m_ > 0 && W) {
      for (int i = 0; i < in_.m_l; ++i) {
        const double w2 = std::clamp(W->d_l(i) * W->d_l(i), 1e-14, 1e14);
        trips[idx++] = {n_ + p_ + i, n_ + p_ + i, -w2};
      }
      int off = in_.m_l;
      for (size_t k = 0; k < in_.soc_dims.size(); ++k) {
        const int d = in_.soc_dims[k];
        for (int r = 0; r < d; ++r)
          for (int c = 0; c < d; ++c)
            trips[idx++] = {n_ + p_ + off + r, n_ + p_ + off + c, -W->W2b[k](r, c)};
        off += d;
      }
    }
    // Retry with heavier static regularization when the unpivoted LDLT
    // breaks down (extreme scalings arise on nearly infeasible iterates).
    for (double reg : {kReg, 1e4 * kReg, 1e8 * kReg}) {
      std::vector<Eigen::Triplet<double>> t = trips;
      for (int i = 0; i < n_; ++i) t.emplace_back(i, i, reg - kReg);
      for (int i = n_; i < dim_; ++i) t.emplace_back(i, i, kReg - reg);
      K_.resize(dim_, dim_);
      K_.setFromTriplets(t.begin(), t.end());
      if (!analyzed_) {
        ldlt_.analyzePattern(K_);
        analyzed_ = true;
      }
      ldlt_.factorize(K_);
      if (ldlt_.info() == Eigen::Success) return true;
    }
    return false;
  }

  // Solves the symmetric system with one step of iterative refinement.
  Eigen::VectorXd solve(const Eigen::VectorXd& rhs) const {
    Eigen::VectorXd x = ldlt_.solve(rhs);
    Eigen::VectorXd r = rhs - K_ * x;
    x += ldlt_.solve(r);
    return x;
  }

  int n_, p_, m_, dim_;

 private:
  static constexpr double kReg = 1e-10;
  const Internal& in_;
  std::vector<Eigen::Triplet<double>> base_;
  size_t w2_first_ = 0;
  Eigen::SparseMatrix<double> K_;
  Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> ldlt_;
  bool analyzed_ = false;
};

Internal to_internal(const ConicProgram& prog) {
  Internal in;
  in.n = prog.num_vars;
  in.c = prog.c;

  std::vector<Eigen::Triplet<double>> qt, at, gt;
  if (prog.Q) {
    in.Q = *prog.Q;
  } else {
    in.Q.resize(in.n, in.n);
  }

  int eq_rows = 0, lin_rows = 0, soc_rows = 0;
  for (const auto& blk : prog.blocks) {
    if (blk.cone.kind == ConeKind::Zero)
      eq_rows += blk.cone.dim;
    else if (blk.cone.kind == ConeKind::Nonneg)
      lin_rows += blk.cone.dim;
    else
      soc_rows += blk.cone.dim;
  }
  // A pinned variable (lo == hi) becomes one equality row: the opposing pair
  // of orthant rows it would otherwise produce has no strict interior and
  // stalls the interior-point iteration.
  int bound_rows = 0, pinned_rows = 0;
  if (prog.var_bounds) {
    for (const auto& [lo, hi] : *prog.var_bounds) {
      if (lo == hi && std::isfinite(lo)) {
        ++pinned_rows;
        continue;
      }
      if (lo > -kInf) ++bound_rows;
      if (hi < kInf) ++bound_rows;
    }
  }
  eq_rows += pinned_rows;
  in.m_l = lin_rows + bound_rows;
  in.beq.resize(eq_rows);
  in.hc.resize(in.m_l + soc_rows);

  int eq_off = 0, lin_off = 0, soc_off = in.m_l;
  auto copy_block = [&](const ConstraintBlock& blk, int row_off,
                        std::vector<Eigen::Triplet<double>>& dst) {
    for (int k = 0; k < blk.A.outerSize(); ++k)
      for (Eigen::SparseMatrix<double>::InnerIterator it(blk.A, k); it; ++it)
        dst.emplace_back(row_off + static_cast<int>(it.row()), static_cast<int>(it.col()),
                         it.value());
  };
  for (const auto& blk : prog.blocks) {
    Internal::BlockMap bm;
    bm.rows = blk.cone.dim;
    if (blk.cone.kind == ConeKind::Zero) {
      bm.is_eq = true;
      bm.offset = eq_off;
      copy_block(blk, eq_off, at);
      in.beq.segment(eq_off, blk.cone.dim) = blk.b;
      eq_off += blk.cone.dim;
    } else if (blk.cone.kind == ConeKind::Nonneg) {
      bm.offset = lin_off;
      copy_block(blk, lin_off, gt);
      in.hc.segment(lin_off, blk.cone.dim) = blk.b;
      lin_off += blk.cone.dim;
    } else {
      bm.offset = soc_off;
      copy_block(blk, soc_off, gt);
      in.hc.segment(soc_off, blk.cone.dim) = blk.b;
      in.soc_dims.push_back(blk.cone.dim);
      soc_off += blk.cone.dim;
    }
    in.block_maps.push_back(bm);
  }
  in.bound_rows_offset = lin_off;
  if (prog.var_bounds) {
    for (int v = 0; v < in.n; ++v) {
      const auto& [lo, hi] = (*prog.var_bounds)[v];
      if (lo == hi && std::isfinite(lo)) {
        at.emplace_back(eq_off, v, 1.0);
        in.beq(eq_off) = lo;
        in.pinned_map.emplace_back(eq_off, v);
        ++eq_off;
        continue;
      }
      if (lo > -kInf) {
        gt.emplace_back(lin_off, v, 1.0);
        in.hc(lin_off) = lo;
        in.bound_map.emplace_back(lin_off, v, true);
        ++lin_off;
      }
      if (hi < kInf) {
        gt.emplace_back(lin_off, v, -1.0);
        in.hc(lin_off) = -hi;
        in.bound_map.emplace_back(lin_off, v, false);
        ++lin_off;
      }
    }
  }
  in.Aeq.resize(eq_rows, in.n);
  in.Aeq.setFromTriplets(at.begin(), at.end());
  in.G.resize(in.m(), in.n);
  in.G.setFromTriplets(gt.begin(), gt.end());
  return in;
}

void extract_duals(const Internal& in, const Eigen::VectorXd& y,
                   const Eigen::VectorXd& z, const ConicProgram& prog,
                   ConicSolution& sol) {
  sol.duals.clear();
  for (const auto& bm : in.block_maps) {
    if (bm.is_eq)
      sol.duals.push_back(y.segment(bm.offset, bm.rows));
    else
      sol.duals.push_back(z.segment(bm.offset, bm.rows));
  }
  sol.bound_duals = Eigen::VectorXd::Zero(prog.num_vars);
  for (const auto& [row, var, is_lower] : in.bound_map)
    sol.bound_duals(var) += is_lower ? z(row) : -z(row);
  for (const auto& [row, var] : in.pinned_map) sol.bound_duals(var) += y(row);
}

}  // namespace

void ConicProgram::validate() const {
  if (num_vars <= 0) throw std::invalid_argument("ConicProgram: no variables");
  if (c.size() != num_vars) throw std::invalid_argument("ConicProgram: bad objective length");
  for (const auto& blk : blocks) {
    if (blk.A.rows() != blk.cone.dim || blk.b.size() != blk.cone.dim ||
        blk.A.cols() != num_vars)
      throw std::invalid_argument("ConicProgram: block dimension mismatch");
  }
  if (var_bounds && static_cast<int>(var_bounds->size()) != num_vars)
    throw std::invalid_argument("ConicProgram: bad bounds length");
  if (Q) {
    if (Q->rows() != num_vars || Q->cols() != num_vars)
      throw std::invalid_argument("ConicProgram: bad Q shape");
    Eigen::SparseMatrix<double> Qs = Eigen::SparseMatrix<double>(Q->transpose()) - *Q;
    if (Qs.coeffs().size() > 0 && Qs.coeffs().cwiseAbs().maxCoeff() > 1e-9)
      throw std::invalid_argument("ConicProgram: Q not symmetric");
    // Factor Q + eps*I: positive definite iff Q is PSD, and the shifted
    // diagonal avoids structural-zero pivots in the unpivoted LDLT.
    Eigen::SparseMatrix<double> shifted = *Q;
    Eigen::SparseMatrix<double> eye(num_vars, num_vars);
    eye.setIdentity();
    shifted += 1e-8 * eye;
    Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> ldlt(shifted);
    if (ldlt.info() != Eigen::Success || ldlt.vectorD().minCoeff() < -1e-6)
      throw std::invalid_argument("ConicProgram: Q not PSD");
  }
}

std::string to_string(SolveStatus s) {
  switch (s) {
    case SolveStatus::Optimal: return "optimal";
    case SolveStatus::Infeasible: return "infeasible";
    case SolveStatus::Unbounded: return "unbounded";
    case SolveStatus::NumericalFailure: return "numerical_failure";
    case SolveStatus::IterationLimit: return "iteration_limit";
  }
  return "numerical_failure";
}

ConicSolution solve(const ConicProgram& prog, const SolveOptions& opts) {
  ConicSolution sol;
  Internal in = to_internal(prog);
  const int n = in.n, p = in.p(), m = in.m();
  ConeOps ops{in.m_l, in.soc_dims};
  KktSolver kkt(in);

  auto finish = [&](SolveStatus st, const Eigen::VectorXd& v, const Eigen::VectorXd& y,
                    const Eigen::VectorXd& z, int iters) {
    sol.status = st;
    sol.primal = v;
    sol.objective_value = in.c.dot(v) + 0.5 * v.dot(in.Q * v);
    extract_duals(in, y, z, prog, sol);
    sol.iterations = iters;
    return sol;
  };

  if (m == 0) {
    // equality-constrained (or unconstrained) QP: one Newton solve
    if (!kkt.factor(nullptr))
      return finish(SolveStatus::NumericalFailure, Eigen::VectorXd::Zero(n),
                    Eigen::VectorXd::Zero(p), Eigen::VectorXd(), 0);
    Eigen::VectorXd rhs(n + p);
    rhs.head(n) = -in.c;
    rhs.tail(p) = in.beq;
    Eigen::VectorXd xy = kkt.solve(rhs);
    Eigen::VectorXd v = xy.head(n), y = -xy.tail(p);
    Eigen::VectorXd rv = in.Q * v + in.c - in.Aeq.transpose() * y;
    Eigen::VectorXd ry = in.Aeq * v - in.beq;
    sol.dual_residual = rv.norm();
    sol.primal_residual = ry.norm();
    const bool ok = sol.dual_residual < std::max(1.0, in.c.norm()) * 1e-6 &&
                    sol.primal_residual < std::max(1.0, in.beq.norm()) * 1e-6;
    return finish(ok ? SolveStatus::Optimal : SolveStatus::Unbounded, v, y,
                  Eigen::VectorXd(), 1);
  }

  // initialization from two least-squares solves with identity scaling
  if (!kkt.factor(nullptr))
    return finish(SolveStatus::NumericalFailure, Eigen::VectorXd::Zero(n),
                  Eigen::VectorXd::Zero(p), Eigen::VectorXd::Zero(m), 0);
  Eigen::VectorXd rhs(n + p + m);
  rhs.head(n).setZero();
  rhs.segment(n, p) = in.beq;
  rhs.tail(m) = in.hc;
  Eigen::VectorXd sol1 = kkt.solve(rhs);
  Eigen::VectorXd v = sol1.head(n);
  Eigen::VectorXd s = sol1.tail(m);  // row 3 with W = I gives w = G v - hc
  {
    const double mg = ops.margin(s);
    if (mg < 1e-8) s += (1.0 - mg) * ops.identity(m);
  }
  rhs.head(n) = -in.c;
  rhs.segment(n, p).setZero();
  rhs.tail(m).setZero();
  Eigen::VectorXd sol2 = kkt.solve(rhs);
  Eigen::VectorXd y = -sol2.segment(n, p);
  Eigen::VectorXd z = -sol2.tail(m);
  {
    const double mg = ops.margin(z);
    if (mg < 1e-8) z += (1.0 - mg) * ops.identity(m);
  }

  const double degree = cone_degree(in);
  const double bnorm = std::max(1.0, std::sqrt(in.beq.squaredNorm() + in.hc.squaredNorm()));
  const double cnorm = std::max(1.0, in.c.norm());
  const double v0norm = std::max(1.0, v.norm());

  int iter = 0;
  for (; iter < opts.max_iters; ++iter) {
    Eigen::VectorXd Qv = in.Q * v;
    Eigen::VectorXd rv = Qv + in.c - in.Aeq.transpose() * y - in.G.transpose() * z;
    Eigen::VectorXd ry = in.Aeq * v - in.beq;
    Eigen::VectorXd rz = in.G * v - in.hc - s;
    const double pres = std::sqrt(ry.squaredNorm() + rz.squaredNorm()) / bnorm;
    const double dres = rv.norm() / cnorm;
    const double gap = s.dot(z);
    const double pobj = 0.5 * v.dot(Qv) + in.c.dot(v);
    const double relgap = gap / std::max(1.0, std::abs(pobj));
    sol.primal_residual = pres;
    sol.dual_residual = dres;
    sol.gap = gap;

    if (pres <= opts.feas_tol && dres <= opts.feas_tol &&
        (gap <= opts.gap_tol || relgap <= opts.gap_tol))
      return finish(SolveStatus::Optimal, v, y, z, iter);

    // primal infeasibility certificate: A'y + G'z = 0, z in K, b'y + h'z > 0
    {
      const double u = in.beq.dot(y) + in.hc.dot(z);
      if (u > 1e-10) {
        const double cres =
            (in.Aeq.transpose() * y + in.G.transpose() * z).norm() / u;
        if (cres < 1e-7 && ops.margin(z) > -1e-9 * std::max(1.0, z.norm()))
          return finish(SolveStatus::Infeasible, v, y, z, iter);
      }
    }
    // dual infeasibility (unbounded primal) certificate along the iterate ray
    if (v.norm() > 1e7 * v0norm) {
      Eigen::VectorXd vh = v / v.norm();
      if ((in.Q * vh).norm() < 1e-6 && (in.Aeq * vh).norm() < 1e-6 &&
          ops.margin(in.G * vh) > -1e-6 && in.c.dot(vh) < -1e-9)
        return finish(SolveStatus::Unbounded, v, y, z, iter);
    }
    if (!v.allFinite() || !s.allFinite() || !z.allFinite())
      return finish(SolveStatus::NumericalFailure, v, y, z, iter);

    Scaling W = nt_scaling(ops, s, z);
    Eigen::VectorXd lambda = W.apply(z);
    if (!kkt.factor(&W)) return finish(SolveStatus::NumericalFailure, v, y, z, iter);

    const double mu = gap / degree;
    // affine direction
    Eigen::VectorXd b_aff(n + p + m);
    b_aff.head(n) = -rv;
    b_aff.segment(n, p) = -ry;
    b_aff.tail(m) = -rz - s;
    Eigen::VectorXd da = kkt.solve(b_aff);
    Eigen::VectorXd dv_a = da.head(n);
    Eigen::VectorXd dz_a = -da.tail(m);
    Eigen::VectorXd ds_a = -s - W.apply(W.apply(dz_a));
    double alpha_a = std::min({1.0, ops.step_to_boundary(s, ds_a),
                               ops.step_to_boundary(z, dz_a)});
    const double mu_aff =
        (s + alpha_a * ds_a).dot(z + alpha_a * dz_a) / degree;
    double sigma = std::pow(std::max(0.0, mu_aff / mu), 3.0);
    sigma = std::min(1.0, std::max(0.0, sigma));

    // combined direction with Mehrotra correction
    Eigen::VectorXd corr = ops.product(W.apply_inv(ds_a), W.apply(dz_a));
    Eigen::VectorXd dcomp = ops.product(lambda, lambda) + corr -
                            sigma * mu * ops.identity(m);
    Eigen::VectorXd dtil = W.apply(ops.solve_product(lambda, dcomp));
    Eigen::VectorXd b_c(n + p + m);
    b_c.head(n) = -rv;
    b_c.segment(n, p) = -ry;
    b_c.tail(m) = -rz - dtil;
    Eigen::VectorXd dc = kkt.solve(b_c);
    Eigen::VectorXd dv = dc.head(n);
    Eigen::VectorXd dy = -dc.segment(n, p);
    Eigen::VectorXd dz = -dc.tail(m);
    Eigen::VectorXd ds = -dtil - W.apply(W.apply(dz));

    double alpha = std::min(
        {1.0, 0.99 * ops.step_to_boundary(s, ds), 0.99 * ops.step_to_boundary(z, dz)});
    if (!(alpha > 0) || !std::isfinite(alpha))
      return finish(SolveStatus::NumericalFailure, v, y, z, iter);
    v += alpha * dv;
    y += alpha * dy;
    z += alpha * dz;
    s += alpha * ds;
  }
  return finish(SolveStatus::IterationLimit, v, y, z, iter);
}

void dump_program(const ConicProgram& prog, std::ostream& os) {
  os.precision(17);
  os << "vars " << prog.num_vars << "\n";
  os << "min";
  for (int i = 0; i < prog.num_vars; ++i) os << " " << prog.c(i);
  os << "\n";
  if (prog.Q) {
    for (int k = 0; k < prog.Q->outerSize(); ++k)
      for (Eigen::SparseMatrix<double>::InnerIterator it(*prog.Q, k); it; ++it)
        if (it.row() <= it.col())
          os << "quad " << it.row() << " " << it.col() << " " << it.value() << "\n";
  }
  if (prog.var_bounds) {
    for (int i = 0; i < prog.num_vars; ++i) {
      const auto& [lo, hi] = (*prog.var_bounds)[i];
      if (lo > -kInf || hi < kInf) os << "bound " << i << " " << lo << " " << hi << "\n";
    }
  }
  for (const auto& blk : prog.blocks) {
    const char* kind = blk.cone.kind == ConeKind::Zero ? "zero"
                       : blk.cone.kind == ConeKind::Nonneg ? "nonneg"
                                                           : "soc";
    os << "block " << kind << " " << blk.cone.dim << "\n";
    Eigen::MatrixXd Ad(blk.A);
    for (int r = 0; r < blk.cone.dim; ++r) {
      for (int c = 0; c < prog.num_vars; ++c) os << Ad(r, c) << " ";
      os << "| " << blk.b(r) << "\n";
    }
  }
}

// --- ProgramBuilder --------------------------------------------------------

int ProgramBuilder::add_vars(int count) {
  const int first = nvars_;
  nvars_ += count;
  cost_.resize(nvars_, 0.0);
  bounds_.resize(nvars_, {-kInf, kInf});
  return first;
}

void ProgramBuilder::set_cost(int var, double coeff) { cost_[var] = coeff; }

void ProgramBuilder::add_quad_cost(int var_i, int var_j, double coeff) {
  if (var_i == var_j) {
    quad_.emplace_back(var_i, var_j, coeff);
  } else {
    quad_.emplace_back(var_i, var_j, coeff / 2.0);
    quad_.emplace_back(var_j, var_i, coeff / 2.0);
  }
}

void ProgramBuilder::begin_block(ConeKind kind, int rows) {
  if (open_) throw std::logic_error("ProgramBuilder: block already open");
  open_ = PendingBlock{kind, rows, {}, Eigen::VectorXd::Zero(rows)};
}

void ProgramBuilder::coeff(int local_row, int var, double value) {
  if (value != 0.0) open_->trips.emplace_back(local_row, var, value);
}

void ProgramBuilder::rhs(int local_row, double value) { open_->b(local_row) = value; }

void ProgramBuilder::end_block() {
  blocks_.push_back(std::move(*open_));
  open_.reset();
}

void ProgramBuilder::add_row(ConeKind kind,
                             const std::vector<std::pair<int, double>>& terms,
                             double rhs_value) {
  begin_block(kind, 1);
  for (const auto& [v, coef] : terms) coeff(0, v, coef);
  rhs(0, rhs_value);
  end_block();
}

void ProgramBuilder::set_var_bounds(int var, double lo, double hi) {
  bounds_[var] = {lo, hi};
  any_bound_ = true;
}

ConicProgram ProgramBuilder::build() {
  ConicProgram prog;
  prog.num_vars = nvars_;
  prog.c = Eigen::Map<Eigen::VectorXd>(cost_.data(), nvars_);
  if (!quad_.empty()) {
    Eigen::SparseMatrix<double> Q(nvars_, nvars_);
    Q.setFromTriplets(quad_.begin(), quad_.end());
    prog.Q = std::move(Q);
  }
  for (auto& pb : blocks_) {
    ConstraintBlock blk;
    blk.A.resize(pb.rows, nvars_);
    blk.A.setFromTriplets(pb.trips.begin(), pb.trips.end());
    blk.b = std::move(pb.b);
    blk.cone = {pb.kind, pb.rows};
    prog.blocks.push_back(std::move(blk));
  }
  if (any_bound_) prog.var_bounds = bounds_;
  return prog;
}

}  // namespace invopt
