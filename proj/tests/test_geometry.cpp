#include "invopt/geometry.hpp"

#include <nlohmann/json.hpp>
#include <random>

#include "doctest.h"

using namespace invopt;

namespace {

// Ground-truth membership predicates written directly against the set
// definitions, independent of the conic encodings under test.
bool direct_simplex(const Eigen::VectorXd& z, double tol) {
  return z.minCoeff() >= -tol && std::abs(z.sum() - 1.0) <= tol;
}

bool direct_box(const Eigen::VectorXd& z, const Eigen::VectorXd& lo,
                const Eigen::VectorXd& hi, double tol) {
  return (z - lo).minCoeff() >= -tol && (hi - z).minCoeff() >= -tol;
}

bool direct_l1(const Eigen::VectorXd& z, double r, double tol) {
  return z.lpNorm<1>() <= r + tol;
}

bool direct_l2(const Eigen::VectorXd& z, double r, double tol) {
  return z.norm() <= r + tol;
}

}  // namespace

TEST_CASE("conic encodings agree with direct membership on random points") {
  std::mt19937 rng(42);
  std::uniform_real_distribution<double> U(-1.5, 1.5);
  const double tol = 1e-9;
  for (int p : {2, 3, 5}) {
    auto simplex = make_primitive(PrimitiveKind::Simplex, p);
    auto box = make_primitive(PrimitiveKind::Box, p, 1.0);
    auto l1 = make_primitive(PrimitiveKind::L1Ball, p, 1.0);
    auto l2 = make_primitive(PrimitiveKind::L2Ball, p, 1.0);
    Eigen::VectorXd lo = Eigen::VectorXd::Constant(p, -1.0);
    Eigen::VectorXd hi = Eigen::VectorXd::Constant(p, 1.0);
    for (int t = 0; t < 1000; ++t) {
      Eigen::VectorXd z(p);
      for (int i = 0; i < p; ++i) z(i) = U(rng);
      // occasionally project onto the simplex face so both branches get hit
      if (t % 5 == 0 && z.minCoeff() > 0) z /= z.sum();
      CHECK(contains(simplex, z, tol) == direct_simplex(z, tol));
      CHECK(contains(box, z, tol) == direct_box(z, lo, hi, tol));
      CHECK(contains(l1, z, tol) == direct_l1(z, 1.0, tol));
      CHECK(contains(l2, z, tol) == direct_l2(z, 1.0, tol));
    }
  }
}

TEST_CASE("canonical members belong to their sets") {
  for (auto kind : {PrimitiveKind::Simplex, PrimitiveKind::BinarySimplex,
                    PrimitiveKind::Box, PrimitiveKind::L1Ball, PrimitiveKind::L2Ball}) {
    for (int p : {1, 2, 4}) {
      auto Z = make_primitive(kind, p, 2.0);
      Eigen::VectorXd w = Z.canonical_member();
      REQUIRE(w.size() == Z.dim_full());
      CHECK(contains(Z, Z.E * w, 1e-9));
    }
  }
}

TEST_CASE("binary simplex contains exactly the unit vectors") {
  const int p = 4;
  auto Z = make_primitive(PrimitiveKind::BinarySimplex, p);
  CHECK(Z.has_integrality());
  int members = 0;
  for (int mask = 0; mask < (1 << p); ++mask) {
    Eigen::VectorXd z(p);
    for (int i = 0; i < p; ++i) z(i) = (mask >> i) & 1;
    const bool in = contains(Z, z, 1e-9);
    if (in) ++members;
    CHECK(in == (z.sum() == 1.0));
  }
  CHECK(members == p);
  // fractional points are rejected even though they satisfy the relaxation
  Eigen::VectorXd frac = Eigen::VectorXd::Constant(p, 1.0 / p);
  CHECK_FALSE(contains(Z, frac, 1e-9));
}

TEST_CASE("dual cone pairing: lambda' r >= 0 for members of cone and dual") {
  std::mt19937 rng(3);
  std::uniform_real_distribution<double> U(-1.0, 1.0);
  std::vector<Cone> cones{{ConeKind::Nonneg, 3}, {ConeKind::SecondOrder, 3},
                          {ConeKind::Zero, 2}};
  const int m = total_dim(cones);
  REQUIRE(m == 8);
  int pairs = 0;
  while (pairs < 100) {
    Eigen::VectorXd r(m), lam(m);
    for (int i = 0; i < m; ++i) {
      r(i) = U(rng);
      lam(i) = U(rng);
    }
    r.segment(6, 2).setZero();  // zero cone rows must vanish
    if (!in_cone(cones, r) || !in_dual_cone(cones, lam)) continue;
    ++pairs;
    CHECK(lam.dot(r) >= -1e-9);
  }
}

TEST_CASE("in_dual_cone lets zero-cone multipliers range freely") {
  std::vector<Cone> cones{{ConeKind::Zero, 2}};
  Eigen::VectorXd lam(2);
  lam << -5.0, 7.0;
  CHECK(in_dual_cone(cones, lam));
  CHECK_FALSE(in_cone(cones, lam));
}

TEST_CASE("l1 ball is lifted and lift_point splits signs") {
  const int p = 3;
  auto Z = make_primitive(PrimitiveKind::L1Ball, p, 2.0);
  CHECK(Z.lifted());
  CHECK(Z.dim_external() == p);
  CHECK(Z.dim_full() == 2 * p);
  Eigen::VectorXd z(p);
  z << 0.5, -1.0, 0.0;
  Eigen::VectorXd w = Z.lift_point(z);
  CHECK((Z.E * w - z).norm() == doctest::Approx(0.0));
  CHECK(w.minCoeff() >= 0.0);
  CHECK(w.lpNorm<1>() == doctest::Approx(z.lpNorm<1>()));
}

TEST_CASE("asymmetric box via make_box") {
  Eigen::VectorXd lo(2), hi(2);
  lo << -1.0, 0.5;
  hi << 2.0, 3.0;
  auto Z = make_box(lo, hi);
  Eigen::VectorXd in(2), out(2);
  in << 0.0, 1.0;
  out << 0.0, 0.0;
  CHECK(contains(Z, in, 1e-9));
  CHECK_FALSE(contains(Z, out, 1e-9));
}

TEST_CASE("tolerance band behaves as documented") {
  auto Z = make_primitive(PrimitiveKind::Simplex, 2);
  Eigen::VectorXd z(2);
  z << 1.0 + 5e-10, -5e-10;
  CHECK(contains(Z, z, 1e-9));
  CHECK_FALSE(contains(Z, z, 1e-12));
}

TEST_CASE("json round-trip preserves every primitive kind") {
  for (auto kind : {PrimitiveKind::Simplex, PrimitiveKind::BinarySimplex,
                    PrimitiveKind::Box, PrimitiveKind::L1Ball, PrimitiveKind::L2Ball}) {
    auto Z = make_primitive(kind, 3, 1.5);
    auto back = primitive_from_json(to_json(Z));
    CHECK(back.kind == Z.kind);
    CHECK(back.dim_full() == Z.dim_full());
    CHECK(back.dim_external() == Z.dim_external());
    CHECK((back.H - Z.H).norm() == doctest::Approx(0.0));
    CHECK((back.h - Z.h).norm() == doctest::Approx(0.0));
    CHECK((back.E - Z.E).norm() == doctest::Approx(0.0));
    CHECK(back.integrality == Z.integrality);
    REQUIRE(back.cones.size() == Z.cones.size());
    for (size_t i = 0; i < back.cones.size(); ++i) {
      CHECK(back.cones[i].kind == Z.cones[i].kind);
      CHECK(back.cones[i].dim == Z.cones[i].dim);
    }
    // behavioural equality on a probe point
    Eigen::VectorXd probe = Eigen::VectorXd::Constant(3, 0.2);
    CHECK(contains(back, probe) == contains(Z, probe));
  }
}
