#include "invopt/losses.hpp"

#include <cmath>
#include <limits>
#include <nlohmann/json.hpp>
#include <sstream>
#include <stdexcept>

namespace invopt {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

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

// Projection programs at degenerate hypotheses can stall the IPM at an
// aggressive target; retry at graduated softer tolerances before giving up.
ConicSolution solve_relaxed(const ConicProgram& prog, const SolveOptions& opts) {
  ConicSolution sol = solve(prog, opts);
  SolveOptions soft = opts;
  for (int retry = 0; retry < 2 && sol.status != SolveStatus::Optimal &&
                      sol.status != SolveStatus::Infeasible;
       ++retry) {
    soft.feas_tol = std::min(1e-6, soft.feas_tol * 100.0);
    soft.gap_tol = std::min(1e-7, soft.gap_tol * 100.0);
    soft.max_iters = std::max(soft.max_iters, 200);
    sol = solve(prog, soft);
  }
  return sol;
}

}  // namespace

std::string to_string(NormKind k) {
  switch (k) {
    case NormKind::L1: return "l1";
    case NormKind::L2: return "l2";
    case NormKind::L2Squared: return "l2sq";
    case NormKind::Linf: return "linf";
  }
  return "l2sq";
}

NormKind norm_from_string(const std::string& s) {
  if (s == "l1") return NormKind::L1;
  if (s == "l2") return NormKind::L2;
  if (s == "l2sq" || s == "l2_squared") return NormKind::L2Squared;
  if (s == "linf") return NormKind::Linf;
  throw std::invalid_argument("unknown norm: " + s);
}

double norm_value(const NormSpec& norm, const Eigen::VectorXd& v) {
  switch (norm.kind) {
    case NormKind::L1: return v.lpNorm<1>();
    case NormKind::L2: return v.norm();
    case NormKind::L2Squared: return v.squaredNorm();
    case NormKind::Linf: return v.size() == 0 ? 0.0 : v.lpNorm<Eigen::Infinity>();
  }
  return 0.0;
}

void add_norm_objective(ProgramBuilder& pb, const NormSpec& norm, int v0, int dim) {
  switch (norm.kind) {
    case NormKind::L2Squared:
      for (int i = 0; i < dim; ++i) pb.add_quad_cost(v0 + i, v0 + i, 2.0);
      break;
    case NormKind::L1: {
      const int t = pb.add_vars(dim);
      for (int i = 0; i < dim; ++i) {
        pb.set_cost(t + i, 1.0);
        pb.add_row(ConeKind::Nonneg, {{t + i, 1.0}, {v0 + i, -1.0}}, 0.0);
        pb.add_row(ConeKind::Nonneg, {{t + i, 1.0}, {v0 + i, 1.0}}, 0.0);
      }
      break;
    }
    case NormKind::Linf: {
      const int t = pb.add_vars(1);
      pb.set_cost(t, 1.0);
      for (int i = 0; i < dim; ++i) {
        pb.add_row(ConeKind::Nonneg, {{t, 1.0}, {v0 + i, -1.0}}, 0.0);
        pb.add_row(ConeKind::Nonneg, {{t, 1.0}, {v0 + i, 1.0}}, 0.0);
      }
      break;
    }
    case NormKind::L2: {
      const int t = pb.add_vars(1);
      pb.set_cost(t, 1.0);
      pb.begin_block(ConeKind::SecondOrder, dim + 1);
      pb.coeff(0, t, 1.0);
      for (int i = 0; i < dim; ++i) pb.coeff(1 + i, v0 + i, 1.0);
      pb.end_block();
      break;
    }
  }
}

double TrueProblemOracle::value(const Eigen::VectorXd& s) const {
  ProgramBuilder pb;
  const int x0 = pb.add_vars(n);
  const Eigen::VectorXd c = obj.eval(s);
  for (int i = 0; i < n; ++i) pb.set_cost(x0 + i, c(i));
  add_feasible_set(pb, x0, s);
  auto sol = solve(pb.build());
  if (sol.status != SolveStatus::Optimal)
    throw std::runtime_error("TrueProblemOracle::value: " + to_string(sol.status));
  return sol.objective_value;
}

TrueProblemOracle oracle_from_hypothesis(const HypothesisParams& theta,
                                         const PrimitiveSet& Z,
                                         const ObjectiveSpec& obj) {
  TrueProblemOracle oracle;
  oracle.n = theta.n();
  oracle.obj = obj;
  oracle.add_feasible_set = [theta, Z](ProgramBuilder& pb, int x0,
                                       const Eigen::VectorXd& s) {
    const Eigen::MatrixXd Aeff = eval_A(theta, s) * Z.E;
    const Eigen::VectorXd b = eval_b(theta, s);
    const int w0 = pb.add_vars(Z.dim_full());
    add_primitive_rows(pb, Z, w0);
    for (int i = 0; i < b.size(); ++i) {
      std::vector<std::pair<int, double>> terms{{x0 + i, 1.0}};
      for (int j = 0; j < Z.dim_full(); ++j)
        if (Aeff(i, j) != 0.0) terms.push_back({w0 + j, -Aeff(i, j)});
      pb.add_row(ConeKind::Zero, terms, b(i));
    }
  };
  return oracle;
}

PredLoss pred_loss(const HypothesisParams& theta, const PrimitiveSet& Z,
                   const ObjectiveSpec& obj, const NormSpec& norm,
                   const Eigen::VectorXd& x, const Eigen::VectorXd& s,
                   const SolveOptions& opts) {
  // Stage 1: the recovered optimal value V(s).
  auto fwd = solve_forward(theta, Z, obj, s, opts);
  PredLoss out;
  if (fwd.status == SolveStatus::Unbounded) {
    out.loss = kInf;
    return out;
  }
  if (fwd.status != SolveStatus::Optimal)
    throw std::runtime_error("pred_loss: forward problem " + to_string(fwd.status));

  // Stage 2: min ||gamma|| s.t. x + gamma = A(s) z + b(s), z in Z,
  //          c(s)'(x + gamma) <= V(s).
  const Eigen::MatrixXd Aeff = eval_A(theta, s) * Z.E;
  const Eigen::VectorXd b = eval_b(theta, s);
  const Eigen::VectorXd c = obj.eval(s);
  const int n = static_cast<int>(x.size());

  ProgramBuilder pb;
  const int w0 = pb.add_vars(Z.dim_full());
  const int g0 = pb.add_vars(n);
  add_primitive_rows(pb, Z, w0);
  for (int i = 0; i < n; ++i) {
    std::vector<std::pair<int, double>> terms{{g0 + i, -1.0}};
    for (int j = 0; j < Z.dim_full(); ++j)
      if (Aeff(i, j) != 0.0) terms.push_back({w0 + j, Aeff(i, j)});
    pb.add_row(ConeKind::Zero, terms, x(i) - b(i));
  }
  {
    std::vector<std::pair<int, double>> terms;
    for (int i = 0; i < n; ++i)
      if (c(i) != 0.0) terms.push_back({g0 + i, -c(i)});
    pb.add_row(ConeKind::Nonneg, terms, c.dot(x) - fwd.value);
  }
  add_norm_objective(pb, norm, g0, n);
  auto sol = solve_relaxed(pb.build(), opts);
  if (sol.status != SolveStatus::Optimal)
    throw std::runtime_error("pred_loss: projection " + to_string(sol.status));
  out.gamma = sol.primal.segment(g0, n);
  out.loss = norm_value(norm, out.gamma);
  return out;
}

SubLoss sub_loss(const HypothesisParams& theta, const PrimitiveSet& Z,
                 const ObjectiveSpec& obj, const NormSpec& norm,
                 const Eigen::VectorXd& x, const Eigen::VectorXd& s,
                 const SolveOptions& opts) {
  SubLoss out;
  const double J = subopt_gap(theta, Z, obj, x, s, opts);
  if (std::isinf(J)) {
    out.loss = out.gamma_o = kInf;
    return out;
  }
  out.gamma_o = std::max(0.0, J);

  // gamma_f: projection distance of x onto the image of Z.
  const Eigen::MatrixXd Aeff = eval_A(theta, s) * Z.E;
  const Eigen::VectorXd b = eval_b(theta, s);
  const int n = static_cast<int>(x.size());
  ProgramBuilder pb;
  const int w0 = pb.add_vars(Z.dim_full());
  const int g0 = pb.add_vars(n);
  add_primitive_rows(pb, Z, w0);
  for (int i = 0; i < n; ++i) {
    std::vector<std::pair<int, double>> terms{{g0 + i, -1.0}};
    for (int j = 0; j < Z.dim_full(); ++j)
      if (Aeff(i, j) != 0.0) terms.push_back({w0 + j, Aeff(i, j)});
    pb.add_row(ConeKind::Zero, terms, x(i) - b(i));
  }
  add_norm_objective(pb, norm, g0, n);
  auto sol = solve_relaxed(pb.build(), opts);
  if (sol.status != SolveStatus::Optimal)
    throw std::runtime_error("sub_loss: projection " + to_string(sol.status));
  out.gamma_f = norm_value(norm, sol.primal.segment(g0, n));
  out.loss = out.gamma_f + out.gamma_o;
  return out;
}

TrueLosses true_losses(const TrueProblemOracle& oracle, const NormSpec& norm,
                       const Eigen::VectorXd& x, const Eigen::VectorXd& s,
                       const SolveOptions& opts) {
  const double V = oracle.value(s);
  const Eigen::VectorXd c = oracle.obj.eval(s);
  const int n = oracle.n;
  TrueLosses out;

  // l_p: min ||gamma|| s.t. x + gamma in X(s), c'(x + gamma) <= V(s).
  {
    ProgramBuilder pb;
    const int y0 = pb.add_vars(n);  // y = x + gamma
    oracle.add_feasible_set(pb, y0, s);
    const int g0 = pb.add_vars(n);
    for (int i = 0; i < n; ++i)
      pb.add_row(ConeKind::Zero, {{y0 + i, 1.0}, {g0 + i, -1.0}}, x(i));
    {
      std::vector<std::pair<int, double>> terms;
      for (int i = 0; i < n; ++i)
        if (c(i) != 0.0) terms.push_back({y0 + i, -c(i)});
      pb.add_row(ConeKind::Nonneg, terms, -V);
    }
    add_norm_objective(pb, norm, g0, n);
    auto sol = solve_relaxed(pb.build(), opts);
    if (sol.status != SolveStatus::Optimal)
      throw std::runtime_error("true_losses: l_p projection " + to_string(sol.status));
    out.l_p = norm_value(norm, sol.primal.segment(g0, n));
  }

  // l_sub: distance to X(s) plus the positive part of the optimality gap.
  {
    ProgramBuilder pb;
    const int y0 = pb.add_vars(n);
    oracle.add_feasible_set(pb, y0, s);
    const int g0 = pb.add_vars(n);
    for (int i = 0; i < n; ++i)
      pb.add_row(ConeKind::Zero, {{y0 + i, 1.0}, {g0 + i, -1.0}}, x(i));
    add_norm_objective(pb, norm, g0, n);
    auto sol = solve_relaxed(pb.build(), opts);
    if (sol.status != SolveStatus::Optimal)
      throw std::runtime_error("true_losses: projection " + to_string(sol.status));
    const double gamma_f = norm_value(norm, sol.primal.segment(g0, n));
    out.l_sub = gamma_f + std::max(0.0, c.dot(x) - V);
  }
  return out;
}

EvalReport evaluate(const HypothesisParams& theta, const PrimitiveSet& Z,
                    const ObjectiveSpec& obj, const NormSpec& norm,
                    const IODataset& test_data, const TrueProblemOracle* oracle,
                    const SolveOptions& opts) {
  if (test_data.size() == 0) throw std::invalid_argument("evaluate: empty dataset");
  EvalReport rep;
  double sum_p = 0.0, sum_s = 0.0, sum_tp = 0.0, sum_ts = 0.0;
  int used = 0;
  for (int i = 0; i < test_data.size(); ++i) {
    const Eigen::VectorXd s = test_data.signals.row(i);
    const Eigen::VectorXd x = test_data.decisions.row(i);
    auto fwd = solve_forward(theta, Z, obj, s, opts);
    if (fwd.status != SolveStatus::Optimal) {
      ++rep.skipped;
      continue;
    }
    const auto lp = pred_loss(theta, Z, obj, norm, x, s, opts);
    const auto ls = sub_loss(theta, Z, obj, norm, x, s, opts);
    rep.per_point_pred.push_back(lp.loss);
    rep.per_point_sub.push_back(ls.loss);
    sum_p += lp.loss;
    sum_s += ls.loss;
    if (oracle) {
      const auto tl = true_losses(*oracle, norm, fwd.x_star, s, opts);
      rep.per_point_true_pred.push_back(tl.l_p);
      rep.per_point_true_sub.push_back(tl.l_sub);
      sum_tp += tl.l_p;
      sum_ts += tl.l_sub;
    }
    ++used;
  }
  if (used == 0) throw std::runtime_error("evaluate: every point failed");
  rep.est_pred = sum_p / used;
  rep.est_sub = sum_s / used;
  if (oracle) {
    rep.true_pred = sum_tp / used;
    rep.true_sub = sum_ts / used;
  }
  return rep;
}

namespace {

nlohmann::json num_or_inf(double v) {
  if (std::isinf(v)) return "inf";
  return v;
}

}  // namespace

nlohmann::json to_json(const EvalReport& rep) {
  nlohmann::json j;
  j["est_pred"] = num_or_inf(rep.est_pred);
  j["est_sub"] = num_or_inf(rep.est_sub);
  if (rep.true_pred) j["true_pred"] = num_or_inf(*rep.true_pred);
  if (rep.true_sub) j["true_sub"] = num_or_inf(*rep.true_sub);
  j["skipped"] = rep.skipped;
  j["per_point"] = {{"pred", rep.per_point_pred}, {"sub", rep.per_point_sub}};
  if (!rep.per_point_true_pred.empty()) {
    j["per_point"]["true_pred"] = rep.per_point_true_pred;
    j["per_point"]["true_sub"] = rep.per_point_true_sub;
  }
  return j;
}

std::string to_csv_row(const EvalReport& rep, bool with_header) {
  std::ostringstream os;
  os.precision(17);
  if (with_header) os << "est_pred,est_sub,true_pred,true_sub,skipped\n";
  os << rep.est_pred << "," << rep.est_sub << ",";
  if (rep.true_pred) os << *rep.true_pred;
  os << ",";
  if (rep.true_sub) os << *rep.true_sub;
  os << "," << rep.skipped << "\n";
  return os.str();
}

}  // namespace invopt
