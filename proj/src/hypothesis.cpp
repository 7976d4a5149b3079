#include "invopt/hypothesis.hpp"

#include <nlohmann/json.hpp>
#include <random>
#include <stdexcept>

namespace invopt {

std::string to_string(StructureKind k) {
  switch (k) {
    case StructureKind::Free: return "free";
    case StructureKind::ScalarAlpha: return "scalar_alpha";
    case StructureKind::SignedIncidence: return "signed_incidence";
  }
  return "free";
}

StructureKind structure_from_string(const std::string& s) {
  if (s == "free") return StructureKind::Free;
  if (s == "scalar_alpha") return StructureKind::ScalarAlpha;
  if (s == "signed_incidence") return StructureKind::SignedIncidence;
  throw std::invalid_argument("unknown structure kind: " + s);
}

int HypothesisParams::n() const {
  return b.empty() ? 0 : static_cast<int>(b[0].size());
}

int HypothesisParams::p() const {
  switch (structure) {
    case StructureKind::Free:
      return A.empty() ? 0 : static_cast<int>(A[0].cols());
    case StructureKind::ScalarAlpha:
      return n();
    case StructureKind::SignedIncidence:
      return static_cast<int>(candidate_columns.cols());
  }
  return 0;
}

void HypothesisParams::validate() const {
  if (b.empty()) throw std::invalid_argument("HypothesisParams: empty b list");
  const int nn = n();
  for (const auto& bk : b)
    if (bk.size() != nn) throw std::invalid_argument("HypothesisParams: ragged b");
  switch (structure) {
    case StructureKind::Free: {
      // a short A list means the trailing signal-dependent matrices are zero
      // (A.size() == 1 is the constant-A subclass)
      if (A.empty() || A.size() > b.size())
        throw std::invalid_argument("HypothesisParams: A list length");
      const int pp = p();
      for (const auto& Ak : A)
        if (Ak.rows() != nn || Ak.cols() != pp)
          throw std::invalid_argument("HypothesisParams: ragged A");
      break;
    }
    case StructureKind::ScalarAlpha:
      if (alpha < 0) throw std::invalid_argument("HypothesisParams: alpha < 0");
      break;
    case StructureKind::SignedIncidence: {
      if (candidate_columns.rows() != nn)
        throw std::invalid_argument("HypothesisParams: candidate column length != n");
      if (static_cast<int>(selector.size()) != candidate_columns.cols())
        throw std::invalid_argument("HypothesisParams: selector length mismatch");
      for (int m = 0; m < candidate_columns.cols(); ++m) {
        int pos = 0, neg = 0;
        for (int r = 0; r < nn; ++r) {
          const double v = candidate_columns(r, m);
          if (v == 1.0)
            ++pos;
          else if (v == -1.0)
            ++neg;
          else if (v != 0.0)
            throw std::invalid_argument("HypothesisParams: non-incidence column entry");
        }
        if (pos != 1 || neg != 1)
          throw std::invalid_argument("HypothesisParams: column is not one +1 / one -1");
      }
      for (int y : selector)
        if (y != 0 && y != 1)
          throw std::invalid_argument("HypothesisParams: selector must be binary");
      break;
    }
  }
}

Eigen::MatrixXd eval_A(const HypothesisParams& theta, const Eigen::VectorXd& s) {
  if (s.size() != theta.K())
    throw std::invalid_argument("eval_A: signal length != K");
  switch (theta.structure) {
    case StructureKind::Free: {
      Eigen::MatrixXd M = theta.A[0];
      for (int k = 0; k + 1 < static_cast<int>(theta.A.size()); ++k)
        M += s(k) * theta.A[k + 1];
      return M;
    }
    case StructureKind::ScalarAlpha:
      return theta.alpha * Eigen::MatrixXd::Identity(theta.n(), theta.n());
    case StructureKind::SignedIncidence: {
      Eigen::MatrixXd M = theta.candidate_columns;
      for (int m = 0; m < M.cols(); ++m)
        if (!theta.selector[m]) M.col(m).setZero();
      return M;
    }
  }
  throw std::logic_error("eval_A: unreachable");
}

Eigen::VectorXd eval_b(const HypothesisParams& theta, const Eigen::VectorXd& s) {
  if (s.size() != theta.K())
    throw std::invalid_argument("eval_b: signal length != K");
  Eigen::VectorXd v = theta.b[0];
  for (int k = 0; k < s.size(); ++k) v += s(k) * theta.b[k + 1];
  return v;
}

HypothesisParams init_params(int n, int p, int K, StructureKind structure,
                             unsigned seed, double scale) {
  if (n < 1 || p < 1 || K < 0)
    throw std::invalid_argument("init_params: need n, p >= 1 and K >= 0");
  HypothesisParams theta;
  theta.structure = structure;
  theta.b.assign(K + 1, Eigen::VectorXd::Zero(n));
  if (structure == StructureKind::Free) {
    std::mt19937 rng(seed);
    std::uniform_real_distribution<double> U(-scale, scale);
    theta.A.assign(K + 1, Eigen::MatrixXd::Zero(n, p));
    for (auto& Ak : theta.A)
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < p; ++j) Ak(i, j) = U(rng);
  } else if (structure == StructureKind::ScalarAlpha) {
    if (n != p) throw std::invalid_argument("init_params: scalar_alpha needs n == p");
    theta.alpha = 1.0;
  } else {
    theta.candidate_columns.resize(n, 0);
  }
  return theta;
}

nlohmann::json to_json(const HypothesisParams& theta) {
  nlohmann::json j;
  j["n"] = theta.n();
  j["p"] = theta.p();
  j["K"] = theta.K();
  j["structure"] = to_string(theta.structure);
  auto mat = [](const Eigen::MatrixXd& M) {
    nlohmann::json rows = nlohmann::json::array();
    for (int r = 0; r < M.rows(); ++r) {
      nlohmann::json row = nlohmann::json::array();
      for (int c = 0; c < M.cols(); ++c) row.push_back(M(r, c));
      rows.push_back(row);
    }
    return rows;
  };
  j["A"] = nlohmann::json::array();
  for (const auto& Ak : theta.A) j["A"].push_back(mat(Ak));
  j["b"] = nlohmann::json::array();
  for (const auto& bk : theta.b) {
    nlohmann::json v = nlohmann::json::array();
    for (int i = 0; i < bk.size(); ++i) v.push_back(bk(i));
    j["b"].push_back(v);
  }
  if (theta.structure == StructureKind::ScalarAlpha) j["alpha"] = theta.alpha;
  if (theta.structure == StructureKind::SignedIncidence) {
    j["candidate_columns"] = mat(theta.candidate_columns);
    j["selector"] = theta.selector;
  }
  return j;
}

HypothesisParams hypothesis_from_json(const nlohmann::json& j) {
  HypothesisParams theta;
  theta.structure = structure_from_string(j.at("structure").get<std::string>());
  auto mat = [](const nlohmann::json& rows) {
    const int r = static_cast<int>(rows.size());
    const int c = r == 0 ? 0 : static_cast<int>(rows[0].size());
    Eigen::MatrixXd M(r, c);
    for (int i = 0; i < r; ++i)
      for (int k = 0; k < c; ++k) M(i, k) = rows[i][k].get<double>();
    return M;
  };
  for (const auto& Ak : j.at("A")) theta.A.push_back(mat(Ak));
  for (const auto& bk : j.at("b")) {
    Eigen::VectorXd v(bk.size());
    for (int i = 0; i < v.size(); ++i) v(i) = bk[i].get<double>();
    theta.b.push_back(v);
  }
  if (theta.structure == StructureKind::ScalarAlpha)
    theta.alpha = j.at("alpha").get<double>();
  if (theta.structure == StructureKind::SignedIncidence) {
    theta.candidate_columns = mat(j.at("candidate_columns"));
    theta.selector = j.at("selector").get<std::vector<int>>();
  }
  theta.validate();
  return theta;
}

}  // namespace invopt
