#include "invopt/geometry.hpp"

#include <nlohmann/json.hpp>
#include <cmath>
#include <stdexcept>

namespace invopt {

int total_dim(const std::vector<Cone>& cones) {
  int d = 0;
  for (const auto& c : cones) d += c.dim;
  return d;
}

bool in_cone(const std::vector<Cone>& cones, const Eigen::VectorXd& r,
             double tol) {
  if (r.size() != total_dim(cones))
    throw std::invalid_argument("in_cone: residual length does not match cones");
  int off = 0;
  for (const auto& c : cones) {
    auto blk = r.segment(off, c.dim);
    switch (c.kind) {
      case ConeKind::Zero:
        if (blk.lpNorm<Eigen::Infinity>() > tol) return false;
        break;
      case ConeKind::Nonneg:
        if (blk.minCoeff() < -tol) return false;
        break;
      case ConeKind::SecondOrder:
        if (c.dim == 1) {
          if (blk(0) < -tol) return false;
        } else if (blk(0) < blk.tail(c.dim - 1).norm() - tol) {
          return false;
        }
        break;
    }
    off += c.dim;
  }
  return true;
}

bool in_dual_cone(const std::vector<Cone>& cones, const Eigen::VectorXd& lambda,
                  double tol) {
  if (lambda.size() != total_dim(cones))
    throw std::invalid_argument("in_dual_cone: length does not match cones");
  int off = 0;
  for (const auto& c : cones) {
    auto blk = lambda.segment(off, c.dim);
    switch (c.kind) {
      case ConeKind::Zero:
        break;  // dual of {0} is the whole space
      case ConeKind::Nonneg:
        if (blk.minCoeff() < -tol) return false;
        break;
      case ConeKind::SecondOrder:
        if (c.dim == 1) {
          if (blk(0) < -tol) return false;
        } else if (blk(0) < blk.tail(c.dim - 1).norm() - tol) {
          return false;
        }
        break;
    }
    off += c.dim;
  }
  return true;
}

std::string to_string(PrimitiveKind k) {
  switch (k) {
    case PrimitiveKind::Simplex: return "simplex";
    case PrimitiveKind::BinarySimplex: return "binary_simplex";
    case PrimitiveKind::Box: return "box";
    case PrimitiveKind::L1Ball: return "l1_ball";
    case PrimitiveKind::L2Ball: return "l2_ball";
    case PrimitiveKind::Custom: return "custom";
  }
  return "custom";
}

PrimitiveKind primitive_kind_from_string(const std::string& s) {
  if (s == "simplex") return PrimitiveKind::Simplex;
  if (s == "binary_simplex") return PrimitiveKind::BinarySimplex;
  if (s == "box") return PrimitiveKind::Box;
  if (s == "l1_ball") return PrimitiveKind::L1Ball;
  if (s == "l2_ball") return PrimitiveKind::L2Ball;
  if (s == "custom") return PrimitiveKind::Custom;
  throw std::invalid_argument("unknown primitive kind: " + s);
}

bool PrimitiveSet::lifted() const {
  return E.rows() != E.cols() || !E.isIdentity(0.0);
}

bool PrimitiveSet::has_integrality() const {
  for (bool f : integrality)
    if (f) return true;
  return false;
}

Eigen::VectorXd PrimitiveSet::canonical_member() const {
  const int p = dim_full();
  switch (kind) {
    case PrimitiveKind::Simplex:
    case PrimitiveKind::BinarySimplex:
      return Eigen::VectorXd::Unit(p, 0);
    case PrimitiveKind::Box:
      return 0.5 * (lower + upper);
    case PrimitiveKind::L1Ball:
    case PrimitiveKind::L2Ball:
    case PrimitiveKind::Custom:
      return Eigen::VectorXd::Zero(p);
  }
  return Eigen::VectorXd::Zero(p);
}

Eigen::VectorXd PrimitiveSet::lift_point(const Eigen::VectorXd& z) const {
  if (z.size() != dim_external())
    throw std::invalid_argument("lift_point: bad external dimension");
  if (!lifted()) return z;
  if (kind == PrimitiveKind::L1Ball) {
    const int p = dim_external();
    Eigen::VectorXd w(2 * p);
    w.head(p) = z.cwiseMax(0.0);
    w.tail(p) = (-z).cwiseMax(0.0);
    return w;
  }
  throw std::invalid_argument("lift_point: no canonical lift for custom lifted set");
}

static PrimitiveSet make_simplex(int p, bool binary) {
  PrimitiveSet Z;
  Z.kind = binary ? PrimitiveKind::BinarySimplex : PrimitiveKind::Simplex;
  Z.H.setZero(p + 1, p);
  Z.H.topRows(p).setIdentity();
  Z.H.row(p).setOnes();
  Z.h.setZero(p + 1);
  Z.h(p) = 1.0;
  Z.cones = {{ConeKind::Nonneg, p}, {ConeKind::Zero, 1}};
  Z.E = Eigen::MatrixXd::Identity(p, p);
  Z.integrality.assign(p, binary);
  return Z;
}

PrimitiveSet make_box(const Eigen::VectorXd& lower, const Eigen::VectorXd& upper) {
  const int p = static_cast<int>(lower.size());
  if (upper.size() != p) throw std::invalid_argument("box: bound length mismatch");
  if ((upper - lower).minCoeff() < 0)
    throw std::invalid_argument("box: inverted bounds");
  PrimitiveSet Z;
  Z.kind = PrimitiveKind::Box;
  Z.lower = lower;
  Z.upper = upper;
  Z.H.setZero(2 * p, p);
  Z.H.topRows(p).setIdentity();
  Z.H.bottomRows(p) = -Eigen::MatrixXd::Identity(p, p);
  Z.h.resize(2 * p);
  Z.h.head(p) = lower;
  Z.h.tail(p) = -upper;
  Z.cones = {{ConeKind::Nonneg, 2 * p}};
  Z.E = Eigen::MatrixXd::Identity(p, p);
  Z.integrality.assign(p, false);
  return Z;
}

PrimitiveSet make_primitive(PrimitiveKind kind, int dim, double scale) {
  if (dim < 1) throw std::invalid_argument("make_primitive: dim must be >= 1");
  switch (kind) {
    case PrimitiveKind::Simplex:
      return make_simplex(dim, false);
    case PrimitiveKind::BinarySimplex:
      return make_simplex(dim, true);
    case PrimitiveKind::Box: {
      Eigen::VectorXd b = Eigen::VectorXd::Constant(dim, std::abs(scale));
      return make_box(-b, b);
    }
    case PrimitiveKind::L1Ball: {
      if (scale <= 0) throw std::invalid_argument("l1_ball: radius must be positive");
      // Lifted: w = (u, v), z = u - v, u, v >= 0, e^T(u+v) <= r.
      PrimitiveSet Z;
      Z.kind = PrimitiveKind::L1Ball;
      Z.radius = scale;
      const int p = dim;
      Z.H.setZero(2 * p + 1, 2 * p);
      Z.H.topRows(2 * p).setIdentity();
      Z.H.row(2 * p).setConstant(-1.0);
      Z.h.setZero(2 * p + 1);
      Z.h(2 * p) = -scale;
      Z.cones = {{ConeKind::Nonneg, 2 * p + 1}};
      Z.E.setZero(p, 2 * p);
      Z.E.leftCols(p).setIdentity();
      Z.E.rightCols(p) = -Eigen::MatrixXd::Identity(p, p);
      Z.integrality.assign(2 * p, false);
      return Z;
    }
    case PrimitiveKind::L2Ball: {
      if (scale <= 0) throw std::invalid_argument("l2_ball: radius must be positive");
      PrimitiveSet Z;
      Z.kind = PrimitiveKind::L2Ball;
      Z.radius = scale;
      Z.H.setZero(dim + 1, dim);
      Z.H.bottomRows(dim).setIdentity();
      Z.h.setZero(dim + 1);
      Z.h(0) = -scale;  // H z - h = (r, z) in SOC
      Z.cones = {{ConeKind::SecondOrder, dim + 1}};
      Z.E = Eigen::MatrixXd::Identity(dim, dim);
      Z.integrality.assign(dim, false);
      return Z;
    }
    case PrimitiveKind::Custom:
      throw std::invalid_argument("make_primitive: custom sets are built directly");
  }
  throw std::invalid_argument("make_primitive: unknown kind");
}

bool contains(const PrimitiveSet& Z, const Eigen::VectorXd& z, double tol) {
  if (z.size() != Z.dim_external())
    throw std::invalid_argument("contains: dimension mismatch");
  Eigen::VectorXd w = Z.lift_point(z);
  for (int j = 0; j < Z.dim_full(); ++j) {
    if (Z.integrality[j] && std::abs(w(j) - std::round(w(j))) > tol) return false;
  }
  return in_cone(Z.cones, Z.H * w - Z.h, tol);
}

static nlohmann::json matrix_to_json(const Eigen::MatrixXd& M) {
  nlohmann::json rows = nlohmann::json::array();
  for (Eigen::Index i = 0; i < M.rows(); ++i) {
    nlohmann::json row = nlohmann::json::array();
    for (Eigen::Index j = 0; j < M.cols(); ++j) row.push_back(M(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

static Eigen::MatrixXd matrix_from_json(const nlohmann::json& j) {
  const auto r = j.size();
  const auto c = r == 0 ? 0 : j.at(0).size();
  Eigen::MatrixXd M(r, c);
  for (size_t i = 0; i < r; ++i)
    for (size_t k = 0; k < c; ++k) M(i, k) = j.at(i).at(k).get<double>();
  return M;
}

nlohmann::json to_json(const PrimitiveSet& Z) {
  nlohmann::json j;
  j["kind"] = to_string(Z.kind);
  j["dim"] = Z.dim_external();
  nlohmann::json params;
  if (Z.kind == PrimitiveKind::L1Ball || Z.kind == PrimitiveKind::L2Ball)
    params["radius"] = Z.radius;
  if (Z.kind == PrimitiveKind::Box) {
    params["lower"] = std::vector<double>(Z.lower.data(), Z.lower.data() + Z.lower.size());
    params["upper"] = std::vector<double>(Z.upper.data(), Z.upper.data() + Z.upper.size());
  }
  j["params"] = params;
  j["H"] = matrix_to_json(Z.H);
  j["h"] = std::vector<double>(Z.h.data(), Z.h.data() + Z.h.size());
  nlohmann::json cones = nlohmann::json::array();
  for (const auto& c : Z.cones) {
    const char* k = c.kind == ConeKind::Zero ? "zero"
                    : c.kind == ConeKind::Nonneg ? "nonneg"
                                                 : "soc";
    cones.push_back({{"kind", k}, {"dim", c.dim}});
  }
  j["cones"] = cones;
  j["integrality"] = Z.integrality;
  if (Z.lifted()) j["E"] = matrix_to_json(Z.E);
  return j;
}

PrimitiveSet primitive_from_json(const nlohmann::json& j) {
  PrimitiveSet Z;
  Z.kind = primitive_kind_from_string(j.at("kind").get<std::string>());
  Z.H = matrix_from_json(j.at("H"));
  auto hv = j.at("h").get<std::vector<double>>();
  Z.h = Eigen::Map<Eigen::VectorXd>(hv.data(), static_cast<Eigen::Index>(hv.size()));
  Z.cones.clear();
  for (const auto& c : j.at("cones")) {
    const auto k = c.at("kind").get<std::string>();
    Cone cone;
    cone.kind = k == "zero" ? ConeKind::Zero : k == "nonneg" ? ConeKind::Nonneg : ConeKind::SecondOrder;
    cone.dim = c.at("dim").get<int>();
    Z.cones.push_back(cone);
  }
  Z.integrality = j.at("integrality").get<std::vector<bool>>();
  if (j.contains("E")) {
    Z.E = matrix_from_json(j.at("E"));
  } else {
    Z.E = Eigen::MatrixXd::Identity(Z.H.cols(), Z.H.cols());
  }
  const auto& params = j.at("params");
  if (params.contains("radius")) Z.radius = params.at("radius").get<double>();
  if (params.contains("lower")) {
    auto lo = params.at("lower").get<std::vector<double>>();
    auto up = params.at("upper").get<std::vector<double>>();
    Z.lower = Eigen::Map<Eigen::VectorXd>(lo.data(), static_cast<Eigen::Index>(lo.size()));
    Z.upper = Eigen::Map<Eigen::VectorXd>(up.data(), static_cast<Eigen::Index>(up.size()));
  }
  if (Z.h.size() != Z.H.rows() || total_dim(Z.cones) != Z.H.rows() ||
      static_cast<int>(Z.integrality.size()) != Z.dim_full())
    throw std::invalid_argument("primitive_from_json: inconsistent dimensions");
  return Z;
}

}  // namespace invopt
