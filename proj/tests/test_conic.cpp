#include <cmath>
#include <random>
#include <vector>

#include "doctest.h"

#include "cortex/conic.hpp"

using namespace cortex;

namespace {

SocConstraint norm_leq_var(std::size_t nv, const Eigen::VectorXd& d,
                           std::size_t t_idx) {
  SocConstraint sc;
  sc.C.resize(d.size(), static_cast<Eigen::Index>(nv));
  sc.d = d;
  sc.p = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(nv));
  sc.p[static_cast<Eigen::Index>(t_idx)] = 1.0;
  sc.q = 0.0;
  return sc;
}

SocConstraint halfspace(std::size_t nv, const Eigen::VectorXd& p, double q) {
  SocConstraint sc;
  sc.C.resize(0, static_cast<Eigen::Index>(nv));
  sc.d = Eigen::VectorXd::Zero(0);
  sc.p = p;
  sc.q = q;
  return sc;
}

}  // namespace

TEST_SUITE("conic") {

TEST_CASE("epigraph of a fixed norm solves to the norm") {
  // minimize t  subject to  ||(3,4)|| <= t.
  ConicProgram pr;
  pr.num_vars = 1;
  pr.cost = Eigen::VectorXd::Ones(1);
  Eigen::VectorXd d(2);
  d << 3.0, 4.0;
  pr.cones.push_back(norm_leq_var(1, d, 0));

  const ConicSolution sol = solve(pr);
  REQUIRE(sol.status == SolveStatus::kOptimal);
  CHECK(sol.objective == doctest::Approx(5.0).epsilon(1e-7));
  CHECK(sol.primal[0] == doctest::Approx(5.0).epsilon(1e-7));
  CHECK(sol.iterations > 0);
  CHECK(sol.solve_time_s >= 0.0);
}

TEST_CASE("contradictory halfspaces are reported infeasible") {
  // x >= 2 and x <= 1 cannot hold together.
  ConicProgram pr;
  pr.num_vars = 1;
  pr.cost = Eigen::VectorXd::Ones(1);
  Eigen::VectorXd p1(1), p2(1);
  p1 << 1.0;
  p2 << -1.0;
  pr.cones.push_back(halfspace(1, p1, -2.0));  // x - 2 >= 0
  pr.cones.push_back(halfspace(1, p2, 1.0));   // 1 - x >= 0
  const ConicSolution sol = solve(pr);
  CHECK(sol.status == SolveStatus::kInfeasible);
}

TEST_CASE("linear objective over a ball lands on the analytic point") {
  // minimize c.x  subject to  ||x - a|| <= R, solved by x = a - R c/||c||.
  std::mt19937_64 gen(7);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int trial = 0; trial < 20; ++trial) {
    const int dim = 2 + static_cast<int>(trial % 3);
    Eigen::VectorXd c(dim), a(dim);
    for (int i = 0; i < dim; ++i) {
      c[i] = u(gen);
      a[i] = 5.0 * u(gen);
    }
    if (c.norm() < 0.1) c[0] += 1.0;
    const double radius = 0.5 + 2.0 * std::abs(u(gen));

    ConicProgram pr;
    pr.num_vars = static_cast<std::size_t>(dim);
    pr.cost = c;
    SocConstraint ball;
    ball.C.resize(dim, dim);
    ball.C.setIdentity();
    ball.d = -a;
    ball.p = Eigen::VectorXd::Zero(dim);
    ball.q = radius;
    pr.cones.push_back(ball);

    const ConicSolution sol = solve(pr);
    REQUIRE(sol.status == SolveStatus::kOptimal);
    const Eigen::VectorXd expect = a - radius * c / c.norm();
    const double expect_obj = c.dot(expect);
    CHECK(std::abs(sol.objective - expect_obj) <=
          1e-4 * std::max(1.0, std::abs(expect_obj)));
    CHECK((sol.primal - expect).norm() <= 1e-4 * std::max(1.0, expect.norm()));
  }
}

TEST_CASE("box-constrained linear programs select the correct vertex") {
  std::mt19937_64 gen(11);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int trial = 0; trial < 10; ++trial) {
    Eigen::VectorXd c(3);
    for (int i = 0; i < 3; ++i) {
      c[i] = u(gen);
      if (std::abs(c[i]) < 0.05) c[i] = 0.1;  // keep the vertex unique
    }
    ConicProgram pr;
    pr.num_vars = 3;
    pr.cost = c;
    pr.lower.assign(3, 0.0);
    pr.upper.assign(3, 1.0);
    const ConicSolution sol = solve(pr);
    REQUIRE(sol.status == SolveStatus::kOptimal);
    for (int i = 0; i < 3; ++i) {
      const double expect = c[i] > 0.0 ? 0.0 : 1.0;
      CHECK(sol.primal[i] == doctest::Approx(expect).epsilon(1e-6));
    }
  }
}

TEST_CASE("norm minimization under an equality spreads mass evenly") {
  // minimize ||x||  subject to  sum(x) = 1  (n = 3): x = (1/3, 1/3, 1/3).
  ConicProgram pr;
  pr.num_vars = 4;  // x, t
  pr.cost = Eigen::VectorXd::Zero(4);
  pr.cost[3] = 1.0;
  pr.eq.resize(1, 4);
  std::vector<Eigen::Triplet<double>> trip;
  for (int j = 0; j < 3; ++j) trip.emplace_back(0, j, 1.0);
  pr.eq.setFromTriplets(trip.begin(), trip.end());
  pr.eq_rhs = Eigen::VectorXd::Ones(1);

  SocConstraint sc;
  sc.C.resize(3, 4);
  std::vector<Eigen::Triplet<double>> ct;
  for (int j = 0; j < 3; ++j) ct.emplace_back(j, j, 1.0);
  sc.C.setFromTriplets(ct.begin(), ct.end());
  sc.d = Eigen::VectorXd::Zero(3);
  sc.p = Eigen::VectorXd::Zero(4);
  sc.p[3] = 1.0;
  sc.q = 0.0;
  pr.cones.push_back(sc);

  const ConicSolution sol = solve(pr);
  REQUIRE(sol.status == SolveStatus::kOptimal);
  CHECK(sol.objective == doctest::Approx(1.0 / std::sqrt(3.0)).epsilon(1e-6));
  for (int i = 0; i < 3; ++i) {
    CHECK(sol.primal[i] == doctest::Approx(1.0 / 3.0).epsilon(1e-5));
  }
}

TEST_CASE("variable bounds act as constraints") {
  ConicProgram pr;
  pr.num_vars = 1;
  pr.cost = Eigen::VectorXd::Ones(1);
  pr.lower.assign(1, -3.0);
  pr.upper.assign(1, 7.0);
  const ConicSolution sol = solve(pr);
  REQUIRE(sol.status == SolveStatus::kOptimal);
  CHECK(sol.primal[0] == doctest::Approx(-3.0).epsilon(1e-7));
}

TEST_CASE("repeated solves are bit-identical") {
  ConicProgram pr;
  pr.num_vars = 3;
  pr.cost = Eigen::VectorXd::Zero(3);
  pr.cost[2] = 1.0;
  Eigen::VectorXd d(2);
  d << 1.0, -2.0;
  SocConstraint sc;
  sc.C.resize(2, 3);
  std::vector<Eigen::Triplet<double>> ct;
  ct.emplace_back(0, 0, 1.0);
  ct.emplace_back(1, 1, 1.0);
  sc.C.setFromTriplets(ct.begin(), ct.end());
  sc.d = d;
  sc.p = Eigen::VectorXd::Zero(3);
  sc.p[2] = 1.0;
  sc.q = 0.0;
  pr.cones.push_back(sc);
  pr.lower.assign(3, -10.0);
  pr.upper.assign(3, 10.0);

  const ConicSolution s1 = solve(pr);
  const ConicSolution s2 = solve(pr);
  REQUIRE(s1.status == SolveStatus::kOptimal);
  REQUIRE(s2.status == SolveStatus::kOptimal);
  CHECK(s1.iterations == s2.iterations);
  REQUIRE(s1.primal.size() == s2.primal.size());
  for (Eigen::Index i = 0; i < s1.primal.size(); ++i) {
    CHECK(s1.primal[i] == s2.primal[i]);  // exact equality, no tolerance
  }
}

TEST_CASE("malformed programs are rejected") {
  ConicProgram pr;
  pr.num_vars = 2;
  pr.cost = Eigen::VectorXd::Ones(3);  // wrong length
  CHECK_THROWS_AS((void)solve(pr), std::invalid_argument);

  ConicProgram pr2;
  pr2.num_vars = 2;
  pr2.cost = Eigen::VectorXd::Ones(2);
  pr2.eq.resize(1, 3);  // wrong column count
  pr2.eq_rhs = Eigen::VectorXd::Ones(1);
  CHECK_THROWS_AS((void)solve(pr2), std::invalid_argument);

  ConicProgram pr3;
  pr3.num_vars = 2;
  pr3.cost = Eigen::VectorXd::Ones(2);
  SocConstraint sc;
  sc.C.resize(2, 2);
  sc.d = Eigen::VectorXd::Zero(1);  // mismatched with C rows
  sc.p = Eigen::VectorXd::Zero(2);
  sc.q = 0.0;
  pr3.cones.push_back(sc);
  CHECK_THROWS_AS((void)solve(pr3), std::invalid_argument);
}

}  // TEST_SUITE
