#include "invopt/train_bcd.hpp"

#include <chrono>
#include <cmath>
#include <limits>
#include <nlohmann/json.hpp>
#include <random>
#include <sstream>
#include <stdexcept>

namespace invopt {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Adds `weight * ||v||` (norm per kind) to the builder's objective for the
// variable range [v0, v0 + dim).
void add_weighted_norm(ProgramBuilder& pb, NormKind kind, int v0, int dim,
                       double weight) {
  switch (kind) {
    case NormKind::L2Squared:
      for (int i = 0; i < dim; ++i) pb.add_quad_cost(v0 + i, v0 + i, 2.0 * weight);
      break;
    case NormKind::L1: {
      const int t = pb.add_vars(dim);
      for (int i = 0; i < dim; ++i) {
        pb.set_cost(t + i, weight);
        pb.add_row(ConeKind::Nonneg, {{t + i, 1.0}, {v0 + i, -1.0}}, 0.0);
        pb.add_row(ConeKind::Nonneg, {{t + i, 1.0}, {v0 + i, 1.0}}, 0.0);
      }
      break;
    }
    case NormKind::Linf: {
      const int t = pb.add_vars(1);
      pb.set_cost(t, weight);
      for (int i = 0; i < dim; ++i) {
        pb.add_row(ConeKind::Nonneg, {{t, 1.0}, {v0 + i, -1.0}}, 0.0);
        pb.add_row(ConeKind::Nonneg, {{t, 1.0}, {v0 + i, 1.0}}, 0.0);
      }
      break;
    }
    case NormKind::L2: {
      const int t = pb.add_vars(1);
      pb.set_cost(t, weight);
      pb.begin_block(ConeKind::SecondOrder, dim + 1);
      pb.coeff(0, t, 1.0);
      for (int i = 0; i < dim; ++i) pb.coeff(1 + i, v0 + i, 1.0);
      pb.end_block();
      break;
    }
  }
}

// Signal extended with s_0 = 1 so b(s) = sum_k s_k b_k runs over k = 0..K.
Eigen::VectorXd extended_signal(const Eigen::VectorXd& s) {
  Eigen::VectorXd e(s.size() + 1);
  e(0) = 1.0;
  e.tail(s.size()) = s;
  return e;
}

Eigen::MatrixXd eval_A_free(const std::vector<Eigen::MatrixXd>& A,
                            const Eigen::VectorXd& s) {
  Eigen::MatrixXd M = A[0];
  for (int k = 0; k + 1 < static_cast<int>(A.size()); ++k) M += s(k) * A[k + 1];
  return M;
}

double sum_frob_sq(const std::vector<Eigen::MatrixXd>& G) {
  double t = 0.0;
  for (const auto& g : G) t += g.squaredNorm();
  return t;
}

}  // namespace

std::string to_string(LossKind k) {
  return k == LossKind::Predictability ? "predictability" : "suboptimality";
}

LossKind loss_from_string(const std::string& s) {
  if (s == "predictability" || s == "pred") return LossKind::Predictability;
  if (s == "suboptimality" || s == "sub") return LossKind::Suboptimality;
  throw std::invalid_argument("unknown loss: " + s);
}

InnerSolution solve_inner(const std::vector<Eigen::MatrixXd>& A,
                          const IODataset& data, const PrimitiveSet& Z,
                          const ObjectiveSpec& obj, const TrainConfig& cfg,
                          std::optional<std::pair<double, double>> eps) {
  const int N = data.size();
  if (N == 0) throw std::invalid_argument("solve_inner: empty dataset");
  const int n = data.n();
  const int K = data.K();
  // a short list trains only the leading matrices (size 1: constant A)
  if (A.empty() || static_cast<int>(A.size()) > K + 1)
    throw std::invalid_argument("solve_inner: A list length not in [1, K + 1]");
  const int df = Z.dim_full();
  const int l = static_cast<int>(Z.H.rows());
  const bool sub = cfg.loss == LossKind::Suboptimality;
  const bool smooth = eps.has_value();
  // Slack channels: s1 relaxes the coupling equality (predictability only),
  // s2 relaxes the dual-feasibility equality (both losses).
  const bool use_s1 = smooth && !sub;
  const bool use_s2 = smooth;
  const double w = 1.0 / N;

  ProgramBuilder pb;
  const int b0 = pb.add_vars((K + 1) * n);
  struct Point {
    int g, wv, lam, go = -1, s1 = -1, s2 = -1;
    int blk_couple = -1, blk_dual = -1;
  };
  std::vector<Point> pts(N);

  for (int i = 0; i < N; ++i) {
    const Eigen::VectorXd s = data.signals.row(i);
    const Eigen::VectorXd x = data.decisions.row(i);
    const Eigen::VectorXd se = extended_signal(s);
    const Eigen::VectorXd c = obj.eval(s);
    const Eigen::MatrixXd Aeff = eval_A_free(A, s) * Z.E;
    auto& P = pts[i];
    P.g = pb.add_vars(n);
    P.wv = pb.add_vars(df);
    P.lam = pb.add_vars(l);
    if (sub) P.go = pb.add_vars(1);
    if (use_s1) P.s1 = pb.add_vars(n);
    if (use_s2) P.s2 = pb.add_vars(df);

    // coupling: A(s_i) z_i + b(s_i) [+ s1_i] - gamma_i = x_i
    P.blk_couple = pb.num_blocks();
    pb.begin_block(ConeKind::Zero, n);
    for (int r = 0; r < n; ++r) {
      for (int j = 0; j < df; ++j)
        if (Aeff(r, j) != 0.0) pb.coeff(r, P.wv + j, Aeff(r, j));
      for (int k = 0; k <= K; ++k) pb.coeff(r, b0 + k * n + r, se(k));
      pb.coeff(r, P.g + r, -1.0);
      if (use_s1) pb.coeff(r, P.s1 + r, 1.0);
      pb.rhs(r, x(r));
    }
    pb.end_block();

    // membership: H w_i - h in K
    {
      int row = 0;
      for (const auto& cone : Z.cones) {
        pb.begin_block(cone.kind, cone.dim);
        for (int r = 0; r < cone.dim; ++r) {
          for (int j = 0; j < df; ++j)
            if (Z.H(row + r, j) != 0.0) pb.coeff(r, P.wv + j, Z.H(row + r, j));
          pb.rhs(r, Z.h(row + r));
        }
        pb.end_block();
        row += cone.dim;
      }
    }

    // dual feasibility: c' A(s_i) - lambda' H [+ s2_i] = 0 (columns of H)
    const Eigen::VectorXd cA = Aeff.transpose() * c;
    P.blk_dual = pb.num_blocks();
    pb.begin_block(ConeKind::Zero, df);
    for (int j = 0; j < df; ++j) {
      for (int r = 0; r < l; ++r)
        if (Z.H(r, j) != 0.0) pb.coeff(j, P.lam + r, -Z.H(r, j));
      if (use_s2) pb.coeff(j, P.s2 + j, 1.0);
      pb.rhs(j, -cA(j));
    }
    pb.end_block();

    // lambda_i in K*: orthant rows self-dual, SOC self-dual, zero rows free
    {
      int row = 0;
      for (const auto& cone : Z.cones) {
        if (cone.kind != ConeKind::Zero) {
          pb.begin_block(cone.kind, cone.dim);
          for (int r = 0; r < cone.dim; ++r) {
            pb.coeff(r, P.lam + row + r, 1.0);
            pb.rhs(r, 0.0);
          }
          pb.end_block();
        }
        row += cone.dim;
      }
    }

    // optimal-value inequality
    if (!sub) {
      // c'(x_i + gamma_i - b(s_i)) - lambda' h <= 0
      std::vector<std::pair<int, double>> terms;
      for (int r = 0; r < n; ++r)
        if (c(r) != 0.0) {
          terms.push_back({P.g + r, -c(r)});
          for (int k = 0; k <= K; ++k)
            terms.push_back({b0 + k * n + r, se(k) * c(r)});
        }
      for (int r = 0; r < l; ++r)
        if (Z.h(r) != 0.0) terms.push_back({P.lam + r, Z.h(r)});
      pb.add_row(ConeKind::Nonneg, terms, c.dot(x));
    } else {
      // c'(x_i - b(s_i)) - lambda' h <= gamma_o_i
      std::vector<std::pair<int, double>> terms{{P.go, 1.0}};
      for (int r = 0; r < n; ++r)
        if (c(r) != 0.0)
          for (int k = 0; k <= K; ++k)
            terms.push_back({b0 + k * n + r, se(k) * c(r)});
      for (int r = 0; r < l; ++r)
        if (Z.h(r) != 0.0) terms.push_back({P.lam + r, Z.h(r)});
      pb.add_row(ConeKind::Nonneg, terms, c.dot(x));
      pb.set_var_bounds(P.go, 0.0, kInf);
    }

    // objective
    add_weighted_norm(pb, cfg.norm.kind, P.g, n, w);
    if (sub) pb.set_cost(P.go, w);
    if (use_s1) add_weighted_norm(pb, NormKind::L2Squared, P.s1, n, eps->first);
    if (use_s2) add_weighted_norm(pb, NormKind::L2Squared, P.s2, df, eps->second);
  }

  auto sol = solve(pb.build(), cfg.solver);
  InnerSolution out;
  out.status = sol.status;
  if (sol.status != SolveStatus::Optimal) {
    out.objective = kInf;
    return out;
  }
  out.objective = sol.objective_value;
  out.num_A = static_cast<int>(A.size());
  for (int k = 0; k <= K; ++k)
    out.b.push_back(sol.primal.segment(b0 + k * n, n));
  for (int i = 0; i < N; ++i) {
    const auto& P = pts[i];
    out.gamma.push_back(sol.primal.segment(P.g, n));
    out.z.push_back(sol.primal.segment(P.wv, df));
    out.lambda.push_back(sol.primal.segment(P.lam, l));
    if (sub) out.gamma_o.push_back(sol.primal(P.go));
    if (use_s1) {
      out.s1.push_back(sol.primal.segment(P.s1, n));
      out.slack1_sq += out.s1.back().squaredNorm();
    }
    if (use_s2) {
      out.s2.push_back(sol.primal.segment(P.s2, df));
      out.slack2_sq += out.s2.back().squaredNorm();
    }
    // Sign convention: with the solver's Lagrangian L = obj - lambda'(Av - b),
    // the envelope derivative of the optimal value w.r.t. A_eff is
    // -c mu_raw' - beta_raw z'; storing mu = -mu_raw and beta = beta_raw makes
    // the textbook form c mu' - beta z' in gradient_A exact.
    out.beta.push_back(sol.duals[P.blk_couple]);
    out.mu.push_back(-sol.duals[P.blk_dual]);
  }
  return out;
}

std::vector<Eigen::MatrixXd> gradient_A(const InnerSolution& inner,
                                        const IODataset& data,
                                        const PrimitiveSet& Z,
                                        const ObjectiveSpec& obj) {
  if (inner.status != SolveStatus::Optimal || inner.beta.empty())
    throw std::invalid_argument("gradient_A: inner solution lacks duals");
  const int N = data.size();
  const int n = data.n();
  const int K = data.K();
  const int p = Z.dim_external();
  const int nA = inner.num_A > 0 ? inner.num_A : K + 1;
  std::vector<Eigen::MatrixXd> G(nA, Eigen::MatrixXd::Zero(n, p));
  for (int i = 0; i < N; ++i) {
    const Eigen::VectorXd s = data.signals.row(i);
    const Eigen::VectorXd c = obj.eval(s);
    // gradient in the effective (internal) coordinates, mapped back via E'
    const Eigen::MatrixXd Geff =
        c * inner.mu[i].transpose() - inner.beta[i] * inner.z[i].transpose();
    const Eigen::MatrixXd Gi = Geff * Z.E.transpose();
    G[0] += Gi;
    for (int k = 0; k + 1 < nA; ++k) G[k + 1] += s(k) * Gi;
  }
  return G;
}

ArmijoResult armijo_step(const std::vector<Eigen::MatrixXd>& A_t,
                         const std::vector<Eigen::MatrixXd>& G,
                         const IODataset& data, const PrimitiveSet& Z,
                         const ObjectiveSpec& obj, const TrainConfig& cfg,
                         double loss_t,
                         std::optional<std::pair<double, double>> eps) {
  ArmijoResult res;
  const double g2 = sum_frob_sq(G);
  if (g2 == 0.0) {
    res.A_next = A_t;
    res.eta_used = 0.0;
    res.accepted = true;
    res.inner_next = solve_inner(A_t, data, Z, obj, cfg, eps);
    return res;
  }
  double eta = cfg.eta;
  for (int bt = 0; bt <= cfg.armijo.max_backtracks; ++bt) {
    std::vector<Eigen::MatrixXd> cand(A_t.size());
    for (size_t k = 0; k < A_t.size(); ++k) cand[k] = A_t[k] - eta * G[k];
    auto inner = solve_inner(cand, data, Z, obj, cfg, eps);
    if (inner.status == SolveStatus::Optimal &&
        inner.objective <= loss_t - cfg.armijo.c * eta * g2) {
      res.A_next = std::move(cand);
      res.eta_used = eta;
      res.accepted = true;
      res.inner_next = std::move(inner);
      return res;
    }
    eta *= cfg.armijo.shrink;
  }
  res.A_next = A_t;
  res.accepted = false;
  return res;
}

namespace {

HypothesisParams make_theta(const std::vector<Eigen::MatrixXd>& A,
                            const std::vector<Eigen::VectorXd>& b) {
  HypothesisParams theta;
  theta.A = A;
  theta.b = b;
  return theta;
}

double stopwatch_s(const std::chrono::steady_clock::time_point& t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

}  // namespace

HypothesisParams init_from_decisions(const IODataset& data, int p,
                                     unsigned seed, double jitter) {
  if (data.size() == 0)
    throw std::invalid_argument("init_from_decisions: empty dataset");
  if (p < 1) throw std::invalid_argument("init_from_decisions: p < 1");
  const int n = data.n();
  std::vector<Eigen::VectorXd> distinct;
  for (int i = 0; i < data.size(); ++i) {
    const Eigen::VectorXd x = data.decisions.row(i);
    bool seen = false;
    for (const auto& d : distinct)
      if ((d - x).lpNorm<Eigen::Infinity>() <= 1e-9) {
        seen = true;
        break;
      }
    if (!seen) distinct.push_back(x);
  }
  HypothesisParams theta;
  theta.structure = StructureKind::Free;
  theta.b.assign(data.K() + 1, Eigen::VectorXd::Zero(n));
  Eigen::MatrixXd A(n, p);
  std::mt19937 rng(seed);
  std::uniform_real_distribution<double> U(-jitter, jitter);
  for (int j = 0; j < p; ++j) {
    A.col(j) = distinct[j % distinct.size()];
    for (int r = 0; r < n; ++r) A(r, j) += U(rng);
  }
  theta.A = {A};
  return theta;
}

TrainReport train_vanilla(const IODataset& data, const PrimitiveSet& Z,
                          const ObjectiveSpec& obj, const TrainConfig& cfg,
                          const HypothesisParams& theta0) {
  if (cfg.smoothing.enabled)
    throw std::invalid_argument("train_vanilla: smoothing must be disabled");
  if (theta0.structure != StructureKind::Free)
    throw std::invalid_argument("train_vanilla: free structure required");
  TrainReport rep;
  std::vector<Eigen::MatrixXd> A = theta0.A;
  auto inner = solve_inner(A, data, Z, obj, cfg);
  if (inner.status == SolveStatus::Infeasible)
    throw std::runtime_error(
        "train_vanilla: inner program infeasible at the initial point; "
        "use the smoothed trainer");
  if (inner.status != SolveStatus::Optimal)
    throw std::runtime_error("train_vanilla: inner solve " + to_string(inner.status));

  int stall = 0;
  for (int t = 0; t < cfg.max_iters; ++t) {
    const auto t0 = std::chrono::steady_clock::now();
    rep.loss_trajectory.push_back(inner.objective);
    rep.statuses.push_back(to_string(inner.status));
    auto G = gradient_A(inner, data, Z, obj);
    auto step = armijo_step(A, G, data, Z, obj, cfg, inner.objective);
    double new_loss = inner.objective;
    if (step.accepted) {
      A = step.A_next;
      new_loss = step.inner_next.objective;
      inner = std::move(step.inner_next);
    }
    rep.iter_seconds.push_back(stopwatch_s(t0));
    stall = std::abs(new_loss - rep.loss_trajectory.back()) < cfg.stop_tol
                ? stall + 1
                : 0;
    if (stall >= 10) {
      rep.termination = "stalled";
      break;
    }
  }
  if (rep.termination.empty()) rep.termination = "max_iters";
  rep.loss_trajectory.push_back(inner.objective);
  rep.final_loss = inner.objective;
  rep.theta = make_theta(A, inner.b);
  return rep;
}

TrainReport train_smoothed(const IODataset& data, const PrimitiveSet& Z,
                           const ObjectiveSpec& obj, const TrainConfig& cfg,
                           const HypothesisParams& theta0) {
  if (!cfg.smoothing.enabled)
    throw std::invalid_argument("train_smoothed: smoothing must be enabled");
  if (theta0.structure != StructureKind::Free)
    throw std::invalid_argument("train_smoothed: free structure required");
  TrainReport rep;
  std::vector<Eigen::MatrixXd> A = theta0.A;
  double eps1 = cfg.smoothing.eps1, eps2 = cfg.smoothing.eps2;
  auto eps = std::make_pair(eps1, eps2);
  auto inner = solve_inner(A, data, Z, obj, cfg, eps);
  if (inner.status != SolveStatus::Optimal)
    throw std::runtime_error("train_smoothed: inner solve " + to_string(inner.status));
  double prev_s1 = inner.slack1_sq, prev_s2 = inner.slack2_sq;
  bool have_prev = false;
  int stall = 0;

  for (int t = 0; t < cfg.max_iters; ++t) {
    const auto t0 = std::chrono::steady_clock::now();
    rep.loss_trajectory.push_back(inner.objective);
    rep.eps1_trajectory.push_back(eps1);
    rep.eps2_trajectory.push_back(eps2);
    rep.slack1_trajectory.push_back(inner.slack1_sq);
    rep.slack2_trajectory.push_back(inner.slack2_sq);
    rep.statuses.push_back(to_string(inner.status));

    auto G = gradient_A(inner, data, Z, obj);
    auto step = armijo_step(A, G, data, Z, obj, cfg, inner.objective, eps);
    double new_loss = inner.objective;
    if (step.accepted) {
      A = step.A_next;
      new_loss = step.inner_next.objective;
      // the accepted candidate's solve doubles as the re-solve of Alg. 2
      inner = std::move(step.inner_next);
    }
    stall = std::abs(new_loss - rep.loss_trajectory.back()) < cfg.stop_tol
                ? stall + 1
                : 0;

    // adapt each epsilon when its slack magnitude stops changing
    bool grew = false;
    if (have_prev) {
      const auto thr = [](double e) {
        return 0.01 / std::pow(10.0, std::log2(e) + 1.0);
      };
      if (std::abs(inner.slack1_sq - prev_s1) < thr(eps1)) {
        eps1 *= 2.0;
        grew = true;
      }
      if (std::abs(inner.slack2_sq - prev_s2) < thr(eps2)) {
        eps2 *= 2.0;
        grew = true;
      }
    }
    prev_s1 = inner.slack1_sq;
    prev_s2 = inner.slack2_sq;
    have_prev = true;
    if (grew) {
      auto resolved = solve_inner(A, data, Z, obj, cfg, {{eps1, eps2}});
      if (resolved.status == SolveStatus::Optimal) {
        eps = {eps1, eps2};
        inner = std::move(resolved);
        stall = 0;
      } else {
        // the stiffer program defeated the solver: stay on the old epsilons
        eps1 = eps.first;
        eps2 = eps.second;
      }
    }
    rep.iter_seconds.push_back(stopwatch_s(t0));
    if (stall >= 10) {
      rep.termination = "stalled";
      break;
    }
  }
  if (rep.termination.empty()) rep.termination = "max_iters";

  // report the unsmoothed loss at the final theta; if the unsmoothed program
  // is infeasible (predictability pathology), fall back to the gamma term of
  // the last smoothed solve
  auto plain = solve_inner(A, data, Z, obj, cfg);
  if (plain.status == SolveStatus::Optimal) {
    rep.final_loss = plain.objective;
    rep.theta = make_theta(A, plain.b);
  } else {
    double g = 0.0;
    for (const auto& gi : inner.gamma) g += norm_value(cfg.norm, gi);
    for (double go : inner.gamma_o) g += go;
    rep.final_loss = g / data.size();
    rep.theta = make_theta(A, inner.b);
  }
  rep.loss_trajectory.push_back(rep.final_loss);
  return rep;
}

bool smoothing_identity_check(const HypothesisParams& theta,
                              const std::vector<Eigen::VectorXd>& z,
                              const IODataset& data, const ObjectiveSpec& obj,
                              const PrimitiveSet& Z, double tol) {
  (void)obj;
  const int N = data.size();
  if (static_cast<int>(z.size()) != N)
    throw std::invalid_argument("smoothing_identity_check: z size != N");
  const double eps = N / 2.0;
  double lhs = 0.0, rhs = 0.0;
  for (int i = 0; i < N; ++i) {
    const Eigen::VectorXd s = data.signals.row(i);
    const Eigen::VectorXd x = data.decisions.row(i);
    const Eigen::VectorXd resid =
        x - eval_A(theta, s) * (Z.E * z[i]) - eval_b(theta, s);
    lhs += resid.squaredNorm() / (2.0 * eps);
    const double gamma_f = resid.norm();
    rhs += gamma_f * gamma_f / N;
  }
  return std::abs(lhs - rhs) <= tol;
}

nlohmann::json to_json(const TrainReport& rep) {
  nlohmann::json j;
  j["loss_trajectory"] = rep.loss_trajectory;
  j["eps1_trajectory"] = rep.eps1_trajectory;
  j["eps2_trajectory"] = rep.eps2_trajectory;
  j["slack1_trajectory"] = rep.slack1_trajectory;
  j["slack2_trajectory"] = rep.slack2_trajectory;
  j["statuses"] = rep.statuses;
  j["iter_seconds"] = rep.iter_seconds;
  j["final_loss"] = std::isinf(rep.final_loss) ? nlohmann::json("inf")
                                               : nlohmann::json(rep.final_loss);
  j["termination"] = rep.termination;
  j["theta"] = to_json(rep.theta);
  return j;
}

std::string trajectory_csv(const TrainReport& rep) {
  std::ostringstream os;
  os.precision(17);
  os << "iteration,loss,eps1,eps2,slack1_sq,slack2_sq\n";
  for (size_t t = 0; t < rep.loss_trajectory.size(); ++t) {
    auto at = [&](const std::vector<double>& v) {
      return t < v.size() ? v[t] : std::numeric_limits<double>::quiet_NaN();
    };
    os << t << "," << rep.loss_trajectory[t] << "," << at(rep.eps1_trajectory)
       << "," << at(rep.eps2_trajectory) << "," << at(rep.slack1_trajectory)
       << "," << at(rep.slack2_trajectory) << "\n";
  }
  return os.str();
}

}  // namespace invopt
