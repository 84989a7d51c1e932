#include "doctest.h"

#include "ratsyn/sim.hpp"

#include "ratsyn/model.hpp"
#include "ratsyn/poly.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

using namespace ratsyn;
using namespace ratsyn::sim;

namespace {

Dynamics decay() {
  return [](const Eigen::VectorXd& x) { return Eigen::VectorXd(-x); };
}

// Terminal error of the linear test plant at step dt.
double decay_error(double dt) {
  Eigen::VectorXd x0 = Eigen::VectorXd::Ones(1);
  auto traj = simulate(decay(), x0, 1.0, dt);
  return std::abs(traj.states.back()[0] - std::exp(-1.0));
}

}  // namespace

TEST_SUITE("sim") {

TEST_CASE("linear plant hits the analytic solution") {
  Eigen::VectorXd x0 = Eigen::VectorXd::Ones(1);
  auto traj = simulate(decay(), x0, 1.0, 1e-3);
  REQUIRE(traj.completed());
  CHECK(traj.size() == 1001);
  CHECK(traj.times[0] == 0.0);
  CHECK(traj.times[1000] == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(std::abs(traj.states.back()[0] - std::exp(-1.0)) < 1e-9);
}

TEST_CASE("RK4 order of convergence") {
  const double e1 = decay_error(0.05);
  const double e2 = decay_error(0.025);
  const double factor = e1 / e2;
  CHECK(factor >= 12.0);
  CHECK(factor <= 20.0);
}

TEST_CASE("undamped pendulum conserves energy") {
  const double grav = 9.81;
  auto pend = [&](const Eigen::VectorXd& s) {
    Eigen::VectorXd d(2);
    d << s[1], -grav * std::sin(s[0]);
    return d;
  };
  Eigen::VectorXd x0(2);
  x0 << 1.2, 0.0;
  auto traj = simulate(pend, x0, 10.0, 1e-3);
  REQUIRE(traj.completed());
  auto energy = [&](const Eigen::VectorXd& s) {
    return 0.5 * s[1] * s[1] - grav * std::cos(s[0]);
  };
  const double e0 = energy(traj.states.front());
  double drift = 0.0;
  for (const auto& s : traj.states) {
    drift = std::max(drift, std::abs(energy(s) - e0));
  }
  CHECK(drift < 1e-6);
}

TEST_CASE("open-loop unstable plant diverges") {
  // xdot1 = x2^2/(1+x1^2), xdot2 = x1 x2 with no input.
  auto f = [](const Eigen::VectorXd& s) {
    Eigen::VectorXd d(2);
    d << s[1] * s[1] / (1.0 + s[0] * s[0]), s[0] * s[1];
    return d;
  };
  Eigen::VectorXd x0(2);
  x0 << 1.0, 1.0;
  auto traj = simulate(f, x0, 50.0, 1e-3);
  CHECK(traj.outcome == SimOutcome::kDiverged);
  CHECK(traj.size() < 50001);  // aborted early
  CHECK(traj.states.back().norm() <= 1e6 * 1.001);
}

TEST_CASE("denominator guard becomes a typed outcome") {
  // Dynamics with a pole barrier at x1 = -5: constant drift into the
  // barrier trips the same std::domain_error the model guard raises.
  auto f = [](const Eigen::VectorXd& s) -> Eigen::VectorXd {
    if (s[0] <= -5.0 + 1e-3) {
      throw std::domain_error("denominator magnitude <= 1e-9 at x");
    }
    return Eigen::VectorXd::Constant(1, -1.0);
  };
  Eigen::VectorXd x0 = Eigen::VectorXd::Constant(1, -4.9);
  auto traj = simulate(f, x0, 10.0, 1e-3);
  CHECK(traj.outcome == SimOutcome::kDomainError);
  CHECK(!traj.note.empty());
  CHECK(traj.size() >= 2);  // what was integrated is kept
  CHECK(traj.states.back()[0] > -5.0);
}

TEST_CASE("closed-loop inputs are recorded") {
  auto f = [](const Eigen::VectorXd& x, const Eigen::VectorXd& u) {
    return Eigen::VectorXd(-x + u);
  };
  Controller ctrl = [](const Eigen::VectorXd& x) {
    return Eigen::VectorXd(0.5 * x);
  };
  Eigen::VectorXd x0 = Eigen::VectorXd::Ones(1);
  auto traj = simulate(f, ctrl, x0, 1.0, 1e-2);
  REQUIRE(traj.completed());
  REQUIRE(traj.inputs.size() == traj.states.size());
  for (int k = 0; k < traj.size(); ++k) {
    CHECK(traj.inputs[static_cast<std::size_t>(k)][0] ==
          doctest::Approx(0.5 * traj.states[static_cast<std::size_t>(k)][0]));
  }
  // xdot = -x/2: terminal value e^{-1/2}.
  CHECK(std::abs(traj.states.back()[0] - std::exp(-0.5)) < 1e-9);
}

TEST_CASE("l2 norm matches analytic integrals") {
  // Constant signal c: norm = |c| sqrt(T).
  Trajectory traj;
  const int len = 101;
  traj.times = Eigen::VectorXd::LinSpaced(len, 0.0, 1.0);
  for (int k = 0; k < len; ++k) {
    traj.states.push_back(Eigen::VectorXd::Constant(2, 3.0));
  }
  CHECK(l2_norm(traj) == doctest::Approx(3.0 * std::sqrt(2.0)).epsilon(1e-12));
  CHECK(l2_norm(traj, {0}) == doctest::Approx(3.0).epsilon(1e-12));

  // Exponential decay over [0, 10].
  auto decay_traj = simulate(decay(), Eigen::VectorXd::Ones(1), 10.0, 1e-3);
  const double expect = std::sqrt((1.0 - std::exp(-20.0)) / 2.0);
  CHECK(l2_norm(decay_traj) == doctest::Approx(expect).epsilon(1e-4));
}

TEST_CASE("csv export round trips at printed precision") {
  auto traj = simulate(decay(), Eigen::VectorXd::Ones(1), 0.1, 1e-2);
  traj.inputs.assign(traj.states.begin(), traj.states.end());
  const std::string path = "/tmp/ratsyn_test_traj.csv";
  export_csv(traj, path);

  std::ifstream in(path);
  std::string header;
  std::getline(in, header);
  CHECK(header == "t,x1,u1");
  int rows = 0;
  std::string line;
  while (std::getline(in, line)) {
    std::stringstream ss(line);
    std::string cell;
    std::getline(ss, cell, ',');
    CHECK(std::abs(std::stod(cell) - traj.times[rows]) <=
          1e-11 * (1.0 + std::abs(traj.times[rows])));
    std::getline(ss, cell, ',');
    CHECK(std::abs(std::stod(cell) -
                   traj.states[static_cast<std::size_t>(rows)][0]) <=
          1e-11 *
              (1.0 + std::abs(traj.states[static_cast<std::size_t>(rows)][0])));
    ++rows;
  }
  CHECK(rows == traj.size());
  std::remove(path.c_str());
}

TEST_CASE("vector field export covers the grid") {
  const std::string path = "/tmp/ratsyn_test_field.csv";
  export_vector_field(decay(), -1.0, 1.0, -2.0, 2.0, 5, 7, path);
  std::ifstream in(path);
  std::string line;
  std::getline(in, line);
  CHECK(line == "x1,x2,dx1,dx2");
  int rows = 0;
  while (std::getline(in, line)) ++rows;
  CHECK(rows == 35);
  std::remove(path.c_str());
}

TEST_CASE("argument validation") {
  CHECK_THROWS_AS(simulate(decay(), Eigen::VectorXd::Ones(1), 1.0, 0.0),
                  std::invalid_argument);
  CHECK_THROWS_AS(simulate(decay(), Eigen::VectorXd::Ones(1), 1e-4, 1e-3),
                  std::invalid_argument);
}

}  // TEST_SUITE
