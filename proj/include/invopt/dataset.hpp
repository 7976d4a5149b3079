#pragma once

#include <Eigen/Dense>
#include <memory>
#include <string>

namespace invopt {

struct TrueProblemOracle;

/// Observed (signal, decision) pairs. Rows are samples: signals is N x K and
/// decisions is N x n.
struct IODataset {
  Eigen::MatrixXd signals;
  Eigen::MatrixXd decisions;
  struct Meta {
    std::string generator;
    unsigned seed = 0;
    double noise_std = 0.0;
    std::string split;  // "train" / "test" / ""
    int regenerated = 0;  // samples redrawn due to ties
  } meta;
  std::shared_ptr<const TrueProblemOracle> oracle;  // optional

  int size() const { return static_cast<int>(signals.rows()); }
  int K() const { return static_cast<int>(signals.cols()); }
  int n() const { return static_cast<int>(decisions.cols()); }
};

}  // namespace invopt
