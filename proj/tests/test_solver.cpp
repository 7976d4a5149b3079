#include "invopt/conic.hpp"

#include <random>
#include <sstream>

#include "doctest.h"
#include "oracles.hpp"

using namespace invopt;

TEST_CASE("1-d LP: min x s.t. x >= 1") {
  ProgramBuilder pb;
  int x = pb.add_vars(1);
  pb.set_cost(x, 1.0);
  pb.add_row(ConeKind::Nonneg, {{x, 1.0}}, 1.0);
  auto sol = solve(pb.build());
  REQUIRE(sol.status == SolveStatus::Optimal);
  CHECK(sol.primal(0) == doctest::Approx(1.0).epsilon(1e-6));
  CHECK(sol.duals[0](0) == doctest::Approx(1.0).epsilon(1e-5));
}

TEST_CASE("LP over simplex picks the cheapest vertex") {
  ProgramBuilder pb;
  int x = pb.add_vars(3);
  Eigen::Vector3d c(3.0, 1.0, 2.0);
  for (int i = 0; i < 3; ++i) {
    pb.set_cost(x + i, c(i));
    pb.add_row(ConeKind::Nonneg, {{x + i, 1.0}}, 0.0);
  }
  pb.add_row(ConeKind::Zero, {{x, 1.0}, {x + 1, 1.0}, {x + 2, 1.0}}, 1.0);
  auto sol = solve(pb.build());
  REQUIRE(sol.status == SolveStatus::Optimal);
  CHECK(sol.objective_value == doctest::Approx(1.0).epsilon(1e-6));
  CHECK(sol.primal(1) == doctest::Approx(1.0).epsilon(1e-5));
}

TEST_CASE("QP projection onto the simplex matches grid search") {
  // min ||x - (2,0)||^2 s.t. x in simplex(2)
  ProgramBuilder pb;
  int x = pb.add_vars(2);
  pb.add_quad_cost(x, x, 2.0);
  pb.add_quad_cost(x + 1, x + 1, 2.0);
  pb.set_cost(x, -4.0);
  pb.set_cost(x + 1, 0.0);
  pb.add_row(ConeKind::Nonneg, {{x, 1.0}}, 0.0);
  pb.add_row(ConeKind::Nonneg, {{x + 1, 1.0}}, 0.0);
  pb.add_row(ConeKind::Zero, {{x, 1.0}, {x + 1, 1.0}}, 1.0);
  auto sol = solve(pb.build());
  REQUIRE(sol.status == SolveStatus::Optimal);
  const double val = sol.objective_value + 4.0;  // add back ||(2,0)||^2
  auto [oracle_val, oracle_arg] = oracles::grid_min_simplex2(
      [](const Eigen::Vector2d& p) { return (p - Eigen::Vector2d(2, 0)).squaredNorm(); },
      1e-4);
  CHECK(val == doctest::Approx(oracle_val).epsilon(1e-4));
  CHECK(sol.primal(0) == doctest::Approx(1.0).epsilon(1e-5));
}

TEST_CASE("SOCP: minimize t with t >= ||x - a||, x on a line") {
  // min t s.t. (t, x - a) in SOC, x1 = 0, a = (1, 1)
  ProgramBuilder pb;
  int t = pb.add_vars(1);
  int x = pb.add_vars(2);
  pb.set_cost(t, 1.0);
  pb.begin_block(ConeKind::SecondOrder, 3);
  pb.coeff(0, t, 1.0);
  pb.coeff(1, x, 1.0);
  pb.rhs(1, 1.0);
  pb.coeff(2, x + 1, 1.0);
  pb.rhs(2, 1.0);
  pb.end_block();
  pb.add_row(ConeKind::Zero, {{x, 1.0}}, 0.0);
  auto sol = solve(pb.build());
  REQUIRE(sol.status == SolveStatus::Optimal);
  CHECK(sol.objective_value == doctest::Approx(1.0).epsilon(1e-6));
  CHECK(sol.primal(1) == doctest::Approx(0.0).epsilon(1e-5));
  CHECK(sol.primal(2) == doctest::Approx(1.0).epsilon(1e-5));
}

TEST_CASE("weak duality and KKT certificates on random LPs") {
  std::mt19937 rng(7);
  std::uniform_real_distribution<double> U(-1.0, 1.0);
  for (int trial = 0; trial < 25; ++trial) {
    const int n = 2 + trial % 4;
    ProgramBuilder pb;
    int x = pb.add_vars(n);
    Eigen::VectorXd c(n);
    for (int i = 0; i < n; ++i) {
      c(i) = U(rng);
      pb.set_cost(x + i, c(i));
      pb.set_var_bounds(x + i, -2.0, 2.0);
    }
    // a couple of random inequality rows keeping the box feasible at 0
    for (int r = 0; r < 2; ++r) {
      std::vector<std::pair<int, double>> terms;
      for (int i = 0; i < n; ++i) terms.push_back({x + i, U(rng)});
      pb.add_row(ConeKind::Nonneg, terms, -std::abs(U(rng)) - 0.1);
    }
    auto prog = pb.build();
    auto sol = solve(prog);
    REQUIRE(sol.status == SolveStatus::Optimal);
    auto oracle = oracles::lp_vertex_oracle(prog);
    REQUIRE(oracle.feasible);
    CHECK(sol.objective_value == doctest::Approx(oracle.value).epsilon(1e-5));
    // duals lie in the dual cones
    for (size_t b = 0; b < prog.blocks.size(); ++b) {
      if (prog.blocks[b].cone.kind == ConeKind::Nonneg)
        CHECK(sol.duals[b].minCoeff() >= -1e-7);
    }
  }
}

TEST_CASE("infeasible LP is reported as infeasible") {
  ProgramBuilder pb;
  int x = pb.add_vars(1);
  pb.set_cost(x, 1.0);
  pb.add_row(ConeKind::Nonneg, {{x, 1.0}}, 1.0);    // x >= 1
  pb.add_row(ConeKind::Nonneg, {{x, -1.0}}, 0.0);   // x <= 0
  auto sol = solve(pb.build());
  CHECK(sol.status == SolveStatus::Infeasible);
}

TEST_CASE("unbounded LP is not reported optimal") {
  ProgramBuilder pb;
  int x = pb.add_vars(1);
  pb.set_cost(x, -1.0);
  pb.add_row(ConeKind::Nonneg, {{x, 1.0}}, 0.0);  // x >= 0, min -x
  auto sol = solve(pb.build());
  CHECK(sol.status != SolveStatus::Optimal);
  CHECK(sol.status != SolveStatus::Infeasible);
}

TEST_CASE("equality-constrained QP solves in closed form") {
  // min ||x||^2 s.t. x1 + x2 = 2  ->  x = (1,1)
  ProgramBuilder pb;
  int x = pb.add_vars(2);
  pb.add_quad_cost(x, x, 2.0);
  pb.add_quad_cost(x + 1, x + 1, 2.0);
  pb.add_row(ConeKind::Zero, {{x, 1.0}, {x + 1, 1.0}}, 2.0);
  auto sol = solve(pb.build());
  REQUIRE(sol.status == SolveStatus::Optimal);
  CHECK(sol.primal(0) == doctest::Approx(1.0));
  CHECK(sol.primal(1) == doctest::Approx(1.0));
}

TEST_CASE("program dump round-trips the structure textually") {
  ProgramBuilder pb;
  int x = pb.add_vars(2);
  pb.set_cost(x, 1.0);
  pb.add_row(ConeKind::Nonneg, {{x, 1.0}, {x + 1, -1.0}}, 0.5);
  std::ostringstream os;
  dump_program(pb.build(), os);
  const std::string text = os.str();
  CHECK(text.find("vars 2") != std::string::npos);
  CHECK(text.find("block nonneg 1") != std::string::npos);
}

TEST_CASE("validate rejects an indefinite Q") {
  ProgramBuilder pb;
  int x = pb.add_vars(2);
  pb.add_quad_cost(x, x, -2.0);
  pb.add_row(ConeKind::Nonneg, {{x, 1.0}}, 0.0);
  auto prog = pb.build();
  CHECK_THROWS(prog.validate());
}
