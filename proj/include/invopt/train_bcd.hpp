#pragma once

#include <Eigen/Dense>
#include <nlohmann/json_fwd.hpp>
#include <optional>
#include <string>
#include <vector>

#include "invopt/dataset.hpp"
#include "invopt/losses.hpp"

namespace invopt {

enum class LossKind { Predictability, Suboptimality };

std::string to_string(LossKind k);
LossKind loss_from_string(const std::string& s);

struct ArmijoConfig {
  double c = 1e-4;
  double shrink = 0.5;
  int max_backtracks = 30;
};

struct SmoothingConfig {
  bool enabled = false;
  double eps1 = 1.0;
  double eps2 = 1.0;
};

struct TrainConfig {
  LossKind loss = LossKind::Predictability;
  NormSpec norm{NormKind::L2Squared};
  int max_iters = 500;
  double eta = 1.0;
  ArmijoConfig armijo;
  SmoothingConfig smoothing;
  unsigned seed = 0;
  double stop_tol = 1e-8;
  SolveOptions solver;
};

/// Solution of the inner convex program (A fixed): variables are the b_k and,
/// per point, gamma_i, the latent z_i (internal coordinates of Z) and the
/// dual-cone multipliers lambda_i, plus the smoothing slacks when enabled.
/// beta_i / mu_i are the dual multipliers of the coupling equality and the
/// dual-feasibility equality, used by the outer gradient step.
struct InnerSolution {
  SolveStatus status = SolveStatus::NumericalFailure;
  double objective = 0.0;  // +inf when infeasible
  std::vector<Eigen::VectorXd> b;                  // K+1 vectors
  std::vector<Eigen::VectorXd> gamma, z, lambda;   // per point (z internal)
  std::vector<double> gamma_o;                     // suboptimality loss only
  std::vector<Eigen::VectorXd> s1, s2;             // smoothing slacks
  std::vector<Eigen::VectorXd> beta, mu;           // per-point duals
  double slack1_sq = 0.0;  // sum_i ||s1_i||^2
  double slack2_sq = 0.0;  // sum_i ||s2_i||^2
  int num_A = 0;           // length of the trained A list (<= K + 1)
};

/// Solves Eq-(8)/(9)-style joint program for fixed {A_k}; `eps` switches to
/// the smoothed variant with penalties (eps1, eps2).
InnerSolution solve_inner(const std::vector<Eigen::MatrixXd>& A,
                          const IODataset& data, const PrimitiveSet& Z,
                          const ObjectiveSpec& obj, const TrainConfig& cfg,
                          std::optional<std::pair<double, double>> eps = {});

/// Outer gradient: d loss / d A_k = sum_i s_{i,k} (c_i mu_i' - beta_i z_i'),
/// with s_{i,0} = 1 and lifted sets mapped back through E.
std::vector<Eigen::MatrixXd> gradient_A(const InnerSolution& inner,
                                        const IODataset& data,
                                        const PrimitiveSet& Z,
                                        const ObjectiveSpec& obj);

struct ArmijoResult {
  std::vector<Eigen::MatrixXd> A_next;
  double eta_used = 0.0;
  bool accepted = false;
  InnerSolution inner_next;  // the solve at A_next when accepted
};

ArmijoResult armijo_step(const std::vector<Eigen::MatrixXd>& A_t,
                         const std::vector<Eigen::MatrixXd>& G,
                         const IODataset& data, const PrimitiveSet& Z,
                         const ObjectiveSpec& obj, const TrainConfig& cfg,
                         double loss_t,
                         std::optional<std::pair<double, double>> eps = {});

struct TrainReport {
  std::vector<double> loss_trajectory;            // objective per iteration
  std::vector<double> eps1_trajectory, eps2_trajectory;
  std::vector<double> slack1_trajectory, slack2_trajectory;  // sum ||.||^2
  std::vector<std::string> statuses;
  std::vector<double> iter_seconds;
  HypothesisParams theta;
  double final_loss = 0.0;  // unsmoothed objective at the final theta
  std::string termination;
};

/// Data-driven initialization for the free-structure trainers: a constant A
/// whose columns cycle through the distinct decision vectors of the dataset
/// (first-appearance order) plus iid U(-jitter, jitter) noise, with b = 0.
/// For vertex-policy data the distinct decisions are exactly the reachable
/// vertices, which puts the starting point inside the convergence basin.
HypothesisParams init_from_decisions(const IODataset& data, int p,
                                     unsigned seed, double jitter = 0.1);

/// Algorithm 1: plain gradient descent with Armijo backtracking.
TrainReport train_vanilla(const IODataset& data, const PrimitiveSet& Z,
                          const ObjectiveSpec& obj, const TrainConfig& cfg,
                          const HypothesisParams& theta0);

/// Algorithm 2: adaptive smoothing with the doubling epsilon schedule.
TrainReport train_smoothed(const IODataset& data, const PrimitiveSet& Z,
                           const ObjectiveSpec& obj, const TrainConfig& cfg,
                           const HypothesisParams& theta0);

/// Appendix-identity check: at smoothing level eps = N/2 the quadratic
/// penalty term equals (1/N) sum_i gamma_f_i^2 with
/// gamma_f_i = ||x_i - A(s_i) z_i - b(s_i)||_2. Requires squared-L2 norm.
bool smoothing_identity_check(const HypothesisParams& theta,
                              const std::vector<Eigen::VectorXd>& z,
                              const IODataset& data, const ObjectiveSpec& obj,
                              const PrimitiveSet& Z, double tol = 1e-8);

nlohmann::json to_json(const TrainReport& report);
std::string trajectory_csv(const TrainReport& report);

}  // namespace invopt
