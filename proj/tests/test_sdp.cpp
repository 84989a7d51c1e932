#include "doctest.h"

#include "ratsyn/sdp.hpp"

#include <random>

using namespace ratsyn::sdp;

namespace {

using Trip = Eigen::Triplet<double>;

ConicProblem make_problem(const ConeLayout& cones,
                          const std::vector<Trip>& trips,
                          const Eigen::VectorXd& h,
                          const Eigen::VectorXd& c = Eigen::VectorXd()) {
  ConicProblem p;
  p.cones = cones;
  p.G.resize(h.size(), cones.dim());
  p.G.setFromTriplets(trips.begin(), trips.end());
  p.h = h;
  p.c = c;
  return p;
}

// min x s.t. [[x, 1], [1, x]] >= 0; optimum x* = 1 by the determinant
// condition x^2 >= 1, x >= 0.
ConicProblem analytic_2x2() {
  ConeLayout cones;
  cones.num_free = 1;
  cones.psd_dims = {2};
  const double isqrt2 = 1.0 / std::sqrt(2.0);
  std::vector<Trip> trips = {
      {0, 0, -1.0}, {0, 1, 1.0},       // S00 - x = 0
      {1, 0, -1.0}, {1, 3, 1.0},       // S11 - x = 0
      {2, 2, isqrt2},                  // S01 = 1
  };
  Eigen::VectorXd h(3);
  h << 0.0, 0.0, 1.0;
  Eigen::VectorXd c = Eigen::VectorXd::Zero(4);
  c[0] = 1.0;
  return make_problem(cones, trips, h, c);
}

// Feasibility: X >= 0 (2x2) with trace(X) = t and X01 = v.
ConicProblem trace_offdiag(double t, double v) {
  ConeLayout cones;
  cones.psd_dims = {2};
  const double isqrt2 = 1.0 / std::sqrt(2.0);
  std::vector<Trip> trips = {
      {0, 0, 1.0}, {0, 2, 1.0},  // trace
      {1, 1, isqrt2},            // off-diagonal entry
  };
  Eigen::VectorXd h(2);
  h << t, v;
  return make_problem(cones, trips, h);
}

// Brute-force grid oracle: is there a 2x2 PSD X with trace t and X01 = v?
bool grid_feasible_trace_offdiag(double t, double v) {
  for (double a = 0.0; a <= t + 1e-12; a += t / 2000.0) {
    const double b = t - a;
    if (a * b >= v * v - 1e-12) return true;  // PSD iff det >= 0, diag >= 0
  }
  return false;
}

}  // namespace

TEST_SUITE("sdp") {

TEST_CASE("svec/smat round trip and isometry") {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> d(-2.0, 2.0);
  for (int trial = 0; trial < 50; ++trial) {
    const int p = 1 + static_cast<int>(rng() % 6);
    Eigen::MatrixXd a(p, p);
    for (int i = 0; i < p; ++i)
      for (int j = 0; j < p; ++j) a(i, j) = d(rng);
    Eigen::MatrixXd s = 0.5 * (a + a.transpose());
    Eigen::VectorXd v = svec(s);
    REQUIRE(v.size() == svec_dim(p));
    CHECK(smat(v).isApprox(s, 1e-14));
    CHECK(v.norm() == doctest::Approx(s.norm()).epsilon(1e-12));
  }
  CHECK(svec_index(3, 0, 0) == 0);
  CHECK(svec_index(3, 0, 2) == 2);
  CHECK(svec_index(3, 1, 1) == 3);
  CHECK(svec_index(3, 2, 2) == 5);
}

TEST_CASE("psd_project basics") {
  Eigen::MatrixXd id = Eigen::MatrixXd::Identity(3, 3);
  CHECK((psd_project(id) - id).cwiseAbs().maxCoeff() <= 1e-12);

  Eigen::MatrixXd d(2, 2);
  d << 1.0, 0.0, 0.0, -1.0;
  Eigen::MatrixXd want(2, 2);
  want << 1.0, 0.0, 0.0, 0.0;
  CHECK((psd_project(d) - want).cwiseAbs().maxCoeff() <= 1e-12);

  Eigen::MatrixXd ns(2, 2);
  ns << 1.0, 0.5, -0.5, 1.0;
  CHECK_THROWS_AS(psd_project(ns), std::invalid_argument);
}

TEST_CASE("psd_project idempotence on random matrices") {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> d(-1.0, 1.0);
  for (int trial = 0; trial < 100; ++trial) {
    const int p = 2 + static_cast<int>(rng() % 5);
    Eigen::MatrixXd a(p, p);
    for (int i = 0; i < p; ++i)
      for (int j = 0; j < p; ++j) a(i, j) = d(rng);
    Eigen::MatrixXd s = 0.5 * (a + a.transpose());
    Eigen::MatrixXd p1 = psd_project(s);
    Eigen::MatrixXd p2 = psd_project(p1);
    CHECK((p2 - p1).cwiseAbs().maxCoeff() <= 1e-12);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(p1);
    CHECK(eig.eigenvalues().minCoeff() >= -1e-12);
  }
}

TEST_CASE("analytic 2x2 SDP optimum") {
  auto prob = analytic_2x2();
  auto sol = solve(prob);
  REQUIRE(sol.report.status == SolveStatus::kFeasible);
  CHECK(std::abs(sol.x[0] - 1.0) <= 1e-6);
  CHECK(std::abs(sol.report.objective - 1.0) <= 1e-6);
  // Feasible report self-check on independent residuals.
  Eigen::VectorXd r = prob.G * sol.x - prob.h;
  CHECK(r.norm() / (1.0 + prob.h.norm()) <= 1e-7);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(smat(sol.x.tail(3)));
  CHECK(eig.eigenvalues().minCoeff() >= -1e-8);
}

TEST_CASE("2x2 feasibility against brute-force oracle") {
  // trace 1 cannot support an off-diagonal of 0.6 (max is 0.5): the grid
  // oracle says infeasible, and the solver must agree.
  REQUIRE(!grid_feasible_trace_offdiag(1.0, 0.6));
  auto bad = solve(trace_offdiag(1.0, 0.6));
  CHECK(bad.report.status == SolveStatus::kInfeasible);

  // trace 2 with off-diagonal 0.6 is feasible (e.g. X = I + 0.6 offdiag).
  REQUIRE(grid_feasible_trace_offdiag(2.0, 0.6));
  auto good = solve(trace_offdiag(2.0, 0.6));
  REQUIRE(good.report.status == SolveStatus::kFeasible);
  Eigen::MatrixXd X = smat(good.x);
  CHECK(std::abs(X.trace() - 2.0) <= 1e-6);
  CHECK(std::abs(X(0, 1) - 0.6) <= 1e-6);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(X);
  CHECK(eig.eigenvalues().minCoeff() >= -1e-8);
}

TEST_CASE("capped diagonal makes large off-diagonal infeasible") {
  // X >= 0 with X00 + s1 = 0.5, X11 + s2 = 0.1 (s >= 0), X01 = 0.9.
  // PSD forces X01^2 <= X00 X11 <= 0.05 << 0.81.
  ConeLayout cones;
  cones.num_nonneg = 2;
  cones.psd_dims = {2};
  const double isqrt2 = 1.0 / std::sqrt(2.0);
  std::vector<Trip> trips = {
      {0, 0, 1.0}, {0, 2, 1.0},   // X00 + s1 = 0.5
      {1, 1, 1.0}, {1, 4, 1.0},   // X11 + s2 = 0.1
      {2, 3, isqrt2},             // X01 = 0.9
  };
  Eigen::VectorXd h(3);
  h << 0.5, 0.1, 0.9;
  auto prob = make_problem(cones, trips, h);
  auto sol = solve(prob);
  REQUIRE(sol.report.status == SolveStatus::kInfeasible);

  // Hand-checkable Farkas certificate: h'y = -1 and G'y in the dual cone
  // up to the certified tolerance.
  CHECK(std::abs(prob.h.dot(sol.y) + 1.0) <= 1e-9);
  Eigen::VectorXd gty = prob.G.transpose() * sol.y;
  // Free part: none here. Nonneg part must be >= -tol; PSD part >= -tol.
  CHECK(gty.head(2).minCoeff() >= -1e-6);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(smat(gty.tail(3)));
  CHECK(eig.eigenvalues().minCoeff() >= -1e-6 * (1.0 + sol.y.norm()));
}

TEST_CASE("linear equality and nonnegative cone") {
  ConeLayout cones;
  cones.num_nonneg = 2;
  std::vector<Trip> trips = {{0, 0, 1.0}, {0, 1, 1.0}};
  Eigen::VectorXd h(1);
  h << 1.0;
  auto sol = solve(make_problem(cones, trips, h));
  REQUIRE(sol.report.status == SolveStatus::kFeasible);
  CHECK(std::abs(sol.x.sum() - 1.0) <= 1e-6);
  CHECK(sol.x.minCoeff() >= 0.0);

  h << -1.0;
  auto inf = solve(make_problem(cones, trips, h));
  CHECK(inf.report.status == SolveStatus::kInfeasible);
}

TEST_CASE("free-variable equality system") {
  ConeLayout cones;
  cones.num_free = 2;
  std::vector<Trip> trips = {{0, 0, 1.0}, {0, 1, 1.0}, {1, 0, 1.0}, {1, 1, -1.0}};
  Eigen::VectorXd h(2);
  h << 3.0, 1.0;
  auto sol = solve(make_problem(cones, trips, h));
  REQUIRE(sol.report.status == SolveStatus::kFeasible);
  CHECK(std::abs(sol.x[0] - 2.0) <= 1e-6);
  CHECK(std::abs(sol.x[1] - 1.0) <= 1e-6);
}

TEST_CASE("inconsistent equalities yield a certificate") {
  ConeLayout cones;
  cones.num_free = 1;
  std::vector<Trip> trips = {{0, 0, 1.0}, {1, 0, 1.0}};
  Eigen::VectorXd h(2);
  h << 1.0, 2.0;  // x = 1 and x = 2
  auto sol = solve(make_problem(cones, trips, h));
  REQUIRE(sol.report.status == SolveStatus::kInfeasible);
  CHECK(std::abs(h.dot(sol.y) + 1.0) <= 1e-6);
  CHECK(std::abs(sol.y[0] + sol.y[1]) <= 1e-6);  // G'y = y0 + y1 = 0
}

TEST_CASE("determinism of repeated solves") {
  auto prob = analytic_2x2();
  auto a = solve(prob);
  auto b = solve(prob);
  CHECK(a.report.iterations == b.report.iterations);
  CHECK(a.report.status == b.report.status);
  CHECK(a.x == b.x);
}

TEST_CASE("status is invariant to uniform data scaling") {
  for (double scale : {1e3, 1e-3}) {
    auto feas = trace_offdiag(2.0, 0.6);
    feas.G *= scale;
    feas.h *= scale;
    CHECK(solve(feas).report.status == SolveStatus::kFeasible);

    auto infeas = trace_offdiag(1.0, 0.6);
    infeas.G *= scale;
    infeas.h *= scale;
    CHECK(solve(infeas).report.status == SolveStatus::kInfeasible);
  }
}

TEST_CASE("text round trip") {
  auto prob = analytic_2x2();
  auto back = from_text(to_text(prob));
  CHECK(Eigen::MatrixXd(back.G) == Eigen::MatrixXd(prob.G));
  CHECK(back.h == prob.h);
  CHECK(back.c == prob.c);
  CHECK(back.cones.num_free == prob.cones.num_free);
  CHECK(back.cones.psd_dims == prob.cones.psd_dims);
  auto sol = solve(back);
  CHECK(std::abs(sol.x[0] - 1.0) <= 1e-6);
}

TEST_CASE("report json contains status and residuals") {
  auto sol = solve(analytic_2x2());
  auto js = report_to_json(sol.report);
  CHECK(js.find("\"status\": \"feasible\"") != std::string::npos);
  CHECK(js.find("primal_residual") != std::string::npos);
}

TEST_CASE("shape validation") {
  ConicProblem p;
  p.cones.num_free = 2;
  p.G.resize(1, 3);
  p.h = Eigen::VectorXd::Zero(1);
  CHECK_THROWS_AS(p.validate(), std::invalid_argument);
}

}  // TEST_SUITE
