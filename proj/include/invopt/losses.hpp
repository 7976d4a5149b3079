#pragma once

#include <Eigen/Dense>
#include <functional>
#include <nlohmann/json_fwd.hpp>
#include <optional>
#include <string>
#include <vector>

#include "invopt/dataset.hpp"
#include "invopt/forward.hpp"

namespace invopt {

enum class NormKind { L1, L2, L2Squared, Linf };

std::string to_string(NormKind k);
NormKind norm_from_string(const std::string& s);

/// Norm used for the gamma variable of the point losses. The pair norm of the
/// suboptimality loss is separable: |gamma_f| + |gamma_o|.
struct NormSpec {
  NormKind kind = NormKind::L2Squared;
};

double norm_value(const NormSpec& norm, const Eigen::VectorXd& v);

/// Adds epigraph variables and rows so that minimizing the builder's
/// objective minimizes ||v|| for the existing variable range [v0, v0+dim).
void add_norm_objective(ProgramBuilder& pb, const NormSpec& norm, int v0, int dim);

/// The known forward problem used for true losses. `add_feasible_set` appends
/// the rows (and any auxiliary variables it needs) describing the feasible
/// set X(s) over the decision variables [x0, x0+n).
struct TrueProblemOracle {
  int n = 0;
  ObjectiveSpec obj;
  std::function<void(ProgramBuilder& pb, int x0, const Eigen::VectorXd& s)>
      add_feasible_set;

  double value(const Eigen::VectorXd& s) const;  // V(s)
};

/// True problem induced by a hypothesis (used when the generator's ground
/// truth is itself a primitive-set model).
TrueProblemOracle oracle_from_hypothesis(const HypothesisParams& theta,
                                         const PrimitiveSet& Z,
                                         const ObjectiveSpec& obj);

struct PredLoss {
  double loss = 0.0;  // +inf when the recovered problem is unbounded
  Eigen::VectorXd gamma;
};

struct SubLoss {
  double loss = 0.0;
  double gamma_f = 0.0;
  double gamma_o = 0.0;
};

PredLoss pred_loss(const HypothesisParams& theta, const PrimitiveSet& Z,
                   const ObjectiveSpec& obj, const NormSpec& norm,
                   const Eigen::VectorXd& x, const Eigen::VectorXd& s,
                   const SolveOptions& opts = {});

SubLoss sub_loss(const HypothesisParams& theta, const PrimitiveSet& Z,
                 const ObjectiveSpec& obj, const NormSpec& norm,
                 const Eigen::VectorXd& x, const Eigen::VectorXd& s,
                 const SolveOptions& opts = {});

struct TrueLosses {
  double l_p = 0.0;
  double l_sub = 0.0;
};

TrueLosses true_losses(const TrueProblemOracle& oracle, const NormSpec& norm,
                       const Eigen::VectorXd& x, const Eigen::VectorXd& s,
                       const SolveOptions& opts = {});

struct EvalReport {
  double est_pred = 0.0;
  double est_sub = 0.0;
  std::optional<double> true_pred;
  std::optional<double> true_sub;
  std::vector<double> per_point_pred, per_point_sub;
  std::vector<double> per_point_true_pred, per_point_true_sub;
  int skipped = 0;  // points whose forward solve was not optimal
};

EvalReport evaluate(const HypothesisParams& theta, const PrimitiveSet& Z,
                    const ObjectiveSpec& obj, const NormSpec& norm,
                    const IODataset& test_data,
                    const TrueProblemOracle* oracle = nullptr,
                    const SolveOptions& opts = {});

nlohmann::json to_json(const EvalReport& report);
std::string to_csv_row(const EvalReport& report, bool with_header = false);

}  // namespace invopt
