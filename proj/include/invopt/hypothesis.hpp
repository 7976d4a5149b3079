#pragma once

#include <Eigen/Dense>
#include <nlohmann/json_fwd.hpp>
#include <string>
#include <vector>

namespace invopt {

enum class StructureKind { Free, ScalarAlpha, SignedIncidence };

std::string to_string(StructureKind k);
StructureKind structure_from_string(const std::string& s);

/// theta = ({A_k}, {b_k}) with A(s) = A_0 + sum_k s_k A_k and likewise for b.
///
/// Restricted parameterizations replace the A list:
///  - ScalarAlpha: A(s) = alpha * I with alpha >= 0 (n must equal p).
///  - SignedIncidence: A(s) is the fixed matrix whose column m is
///    candidate_columns.col(m) when selector[m] == 1 and zero otherwise;
///    candidate columns have exactly one +1 and one -1 entry.
/// b stays a free affine map in both cases.
struct HypothesisParams {
  std::vector<Eigen::MatrixXd> A;  // K+1 matrices, n x p (Free only)
  std::vector<Eigen::VectorXd> b;  // K+1 vectors, length n
  StructureKind structure = StructureKind::Free;
  double alpha = 1.0;                 // ScalarAlpha payload
  Eigen::MatrixXd candidate_columns;  // n x M, SignedIncidence payload
  std::vector<int> selector;          // length M, entries in {0, 1}

  int n() const;
  int p() const;
  int K() const { return static_cast<int>(b.size()) - 1; }
  void validate() const;  // throws std::invalid_argument on shape violations
};

Eigen::MatrixXd eval_A(const HypothesisParams& theta, const Eigen::VectorXd& s);
Eigen::VectorXd eval_b(const HypothesisParams& theta, const Eigen::VectorXd& s);

/// Deterministic initialization: Free draws each A_k entry iid uniform on
/// [-scale, scale] from the seed; all b_k start at zero (the trainers re-solve
/// b through the inner convex program). ScalarAlpha starts at alpha = 1.
HypothesisParams init_params(int n, int p, int K, StructureKind structure,
                             unsigned seed, double scale = 1.0);

nlohmann::json to_json(const HypothesisParams& theta);
HypothesisParams hypothesis_from_json(const nlohmann::json& j);

}  // namespace invopt
