#pragma once

#include <Eigen/Dense>
#include <nlohmann/json_fwd.hpp>
#include <string>
#include <vector>

namespace invopt {

enum class ConeKind { Zero, Nonneg, SecondOrder };

/// One factor of a cone product. For SecondOrder, dim counts the total
/// length of the block (t, u) with t >= ||u||_2.
struct Cone {
  ConeKind kind = ConeKind::Zero;
  int dim = 0;
};

int total_dim(const std::vector<Cone>& cones);

/// Membership of a residual vector in a cone product, block by block.
bool in_cone(const std::vector<Cone>& cones, const Eigen::VectorXd& r,
             double tol = 1e-9);

/// Membership in the dual cone product. Zero cone dualizes to the whole
/// space; the orthant and second-order cone are self-dual.
bool in_dual_cone(const std::vector<Cone>& cones, const Eigen::VectorXd& lambda,
                  double tol = 1e-9);

enum class PrimitiveKind { Simplex, BinarySimplex, Box, L1Ball, L2Ball, Custom };

std::string to_string(PrimitiveKind k);
PrimitiveKind primitive_kind_from_string(const std::string& s);

/// Conic primitive set Z = {z : H w - h in K, z = E w} in normal form.
///
/// Most sets are encoded directly (E is the identity and w = z). The L1 ball
/// uses a lifted encoding w = (u, v) with z = u - v, u, v >= 0 and
/// e^T(u+v) <= r, which keeps the set in the single (H, h, K) form; the lift
/// columns are internal and E projects back to the external coordinates.
struct PrimitiveSet {
  Eigen::MatrixXd H;              // l x dim_full
  Eigen::VectorXd h;              // l
  std::vector<Cone> cones;        // partitions the l residual rows
  Eigen::MatrixXd E;              // dim_ext x dim_full, external map z = E w
  std::vector<bool> integrality;  // per internal coordinate, len dim_full
  PrimitiveKind kind = PrimitiveKind::Custom;
  double radius = 0.0;            // ball kinds
  Eigen::VectorXd lower, upper;   // box kind

  int dim_full() const { return static_cast<int>(H.cols()); }
  int dim_external() const { return static_cast<int>(E.rows()); }
  bool lifted() const;
  bool has_integrality() const;

  /// A point guaranteed to belong to the set (internal coordinates).
  Eigen::VectorXd canonical_member() const;

  /// Canonical internal coordinates for an external point. Identity when not
  /// lifted; the positive/negative split for the L1 ball.
  Eigen::VectorXd lift_point(const Eigen::VectorXd& z) const;
};

struct BoxBounds {
  Eigen::VectorXd lower, upper;
};

/// Standard constructors. `scale` is the radius for ball kinds and ignored
/// otherwise; pass `bounds` for boxes (defaults to [-scale, scale]^dim).
PrimitiveSet make_primitive(PrimitiveKind kind, int dim, double scale = 1.0);
PrimitiveSet make_box(const Eigen::VectorXd& lower, const Eigen::VectorXd& upper);

/// True iff z (external coordinates) lies in the set within tol, including
/// integrality of flagged coordinates.
bool contains(const PrimitiveSet& Z, const Eigen::VectorXd& z, double tol = 1e-9);

nlohmann::json to_json(const PrimitiveSet& Z);
PrimitiveSet primitive_from_json(const nlohmann::json& j);

}  // namespace invopt
