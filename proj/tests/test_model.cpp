#include "doctest.h"

#include "ratsyn/model.hpp"

#include <random>

using namespace ratsyn;
using namespace ratsyn::model;

namespace {

poly::Polynomial P(const std::string& s, int nvars) {
  return poly::parse_poly(s, nvars);
}

// xdot1 = x2^2/(1+x1^2) + u1, xdot2 = x1 x2 + x2 u2.
RationalSystem example1() {
  RationalSystem sys;
  sys.n = 2;
  sys.m = 2;
  sys.drift = {{P("x2^2", 2), P("1 + x1^2", 2)}, {P("x1*x2", 2), P("1", 2)}};
  sys.input = {{{P("1", 2), P("1", 2)}, {P("0", 2), P("1", 2)}},
               {{P("0", 2), P("1", 2)}, {P("x2", 2), P("1", 2)}}};
  return sys;
}

// Two-compartment model: xdot1 = -x1/(5+x1) - x1 + x2 + u, xdot2 = x1 - x2.
RationalSystem example2() {
  RationalSystem sys;
  sys.n = 2;
  sys.m = 1;
  sys.drift = {{P("-6*x1 + 5*x2 - x1^2 + x1*x2", 2), P("5 + x1", 2)},
               {P("x1 - x2", 2), P("1", 2)}};
  sys.input = {{{P("1", 2), P("1", 2)}},
               {{P("0", 2), P("1", 2)}}};
  return sys;
}

// Row i of A Z(x) as a polynomial.
poly::Polynomial row_poly(const Eigen::MatrixXd& a,
                          const poly::MonomialVector& z, int i) {
  poly::Polynomial out(z.nvars);
  for (int k = 0; k < z.size(); ++k) {
    out.add_term(z.mons[static_cast<std::size_t>(k)], a(i, k));
  }
  return out;
}

// Numeric consistency oracle: p(x) * eval_dynamics == A Z + B H u.
double max_identity_residual(const RationalSystem& sys, const PolyForm& form,
                             std::mt19937_64& rng, int trials, double span) {
  std::uniform_real_distribution<double> dx(-span, span);
  double worst = 0.0;
  for (int t = 0; t < trials; ++t) {
    Eigen::VectorXd x(sys.n), u(sys.m);
    for (int i = 0; i < sys.n; ++i) x[i] = dx(rng);
    for (int j = 0; j < sys.m; ++j) u[j] = dx(rng);
    Eigen::VectorXd xdot;
    try {
      xdot = eval_dynamics(sys, x, u);
    } catch (const std::domain_error&) {
      continue;  // sampled too close to a denominator zero
    }
    Eigen::VectorXd lhs = form.p.eval(x) * xdot;
    Eigen::VectorXd rhs = form.A_true * form.basis.Z.eval(x) +
                          form.B_true * (form.basis.H.eval(x) * u);
    worst = std::max(worst,
                     (lhs - rhs).cwiseAbs().maxCoeff() / (1.0 + lhs.norm()));
  }
  return worst;
}

}  // namespace

TEST_SUITE("model") {

TEST_CASE("example 1 cleared form matches the published matrices") {
  auto form = clear_denominators(example1());
  CHECK(form.p == P("1 + x1^2", 2));
  CHECK(form.p.eval(Eigen::VectorXd::Zero(2)) == 1.0);

  // Basis contents (order here is graded-lex; the published listing is a
  // permutation of the same set).
  REQUIRE(form.basis.Z.size() == 5);
  const std::vector<std::string> zmons = {"x1", "x2", "x2^2", "x1*x2",
                                          "x1^3*x2"};
  for (const auto& s : zmons) {
    CHECK(form.basis.Z.contains(P(s, 2).terms().begin()->first));
  }
  REQUIRE(form.basis.Zp.size() == 1);
  CHECK(form.basis.Zp.mons[0] == poly::Monomial::var(2, 0, 2));
  REQUIRE(form.P_true.cols() == 1);
  CHECK(form.P_true(0, 0) == 1.0);

  // A Z(x) row-wise equals the cleared drift, coefficient-exactly.
  CHECK(row_poly(form.A_true, form.basis.Z, 0) == P("x2^2", 2));
  CHECK(row_poly(form.A_true, form.basis.Z, 1) == P("x1*x2 + x1^3*x2", 2));

  // Published values through the index map (their Z ordering differs).
  auto idx = [&](const std::string& s) {
    return form.basis.Z.index_of(P(s, 2).terms().begin()->first);
  };
  CHECK(form.A_true(0, idx("x2^2")) == 1.0);
  CHECK(form.A_true(1, idx("x1*x2")) == 1.0);
  CHECK(form.A_true(1, idx("x1^3*x2")) == 1.0);
  CHECK(form.A_true.cwiseAbs().sum() == 3.0);

  // H: [[1,0],[x1^2,0],[0,x2],[0,x1^2 x2]] and B = [[1,1,0,0],[0,0,1,1]].
  REQUIRE(form.basis.H.rows() == 4);
  REQUIRE(form.basis.H.cols() == 2);
  CHECK(form.basis.H(0, 0) == P("1", 2));
  CHECK(form.basis.H(1, 0) == P("x1^2", 2));
  CHECK(form.basis.H(2, 1) == P("x2", 2));
  CHECK(form.basis.H(3, 1) == P("x1^2*x2", 2));
  CHECK(form.basis.H(0, 1).is_zero());
  Eigen::MatrixXd bexp(2, 4);
  bexp << 1, 1, 0, 0, 0, 0, 1, 1;
  CHECK(form.B_true == bexp);

  // Z_K defaults to Z.
  CHECK(form.basis.ZK.mons == form.basis.Z.mons);
  CHECK(form.basis.Z.min_degree() >= 1);
}

TEST_CASE("example 1 evaluation") {
  auto sys = example1();
  Eigen::VectorXd x0 = Eigen::VectorXd::Zero(2);
  Eigen::VectorXd u0 = Eigen::VectorXd::Zero(2);
  CHECK(eval_dynamics(sys, x0, u0).cwiseAbs().maxCoeff() == 0.0);
  Eigen::VectorXd x1(2);
  x1 << 1.0, 1.0;
  Eigen::VectorXd xd = eval_dynamics(sys, x1, u0);
  CHECK(xd[0] == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(xd[1] == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("cleared identity holds at random points") {
  std::mt19937_64 rng(71);
  auto s1 = example1();
  auto f1 = clear_denominators(s1);
  CHECK(max_identity_residual(s1, f1, rng, 1000, 2.0) < 1e-10);
  auto s2 = example2();
  auto f2 = clear_denominators(s2);
  CHECK(max_identity_residual(s2, f2, rng, 100, 2.0) < 1e-10);
}

TEST_CASE("example 2 cleared form is normalized at the origin") {
  auto form = clear_denominators(example2());
  // Raw product 5 + x1 normalized to 1 + 0.2 x1 so [P 1][Z_p; 1] = p.
  CHECK(form.p == P("1 + 0.2*x1", 2));
  REQUIRE(form.basis.Zp.size() == 1);
  CHECK(form.basis.Zp.mons[0] == poly::Monomial::var(2, 0));
  CHECK(form.P_true(0, 0) == doctest::Approx(0.2).epsilon(1e-15));

  // [P 1][Z_p; 1] = p identically.
  poly::Polynomial rebuilt = poly::Polynomial::constant(2, 1.0);
  for (int k = 0; k < form.basis.Zp.size(); ++k) {
    rebuilt.add_term(form.basis.Zp.mons[static_cast<std::size_t>(k)],
                     form.P_true(0, k));
  }
  CHECK(rebuilt == form.p);

  // Cleared drift rows: a_i * (p_raw / d_i) / p_raw(0), up to one ulp of
  // the 1/5 scaling.
  auto coeff_gap = [](const poly::Polynomial& a, const poly::Polynomial& b) {
    double w = 0.0;
    auto d = a - b;
    for (const auto& [mono, c] : d.terms()) w = std::max(w, std::abs(c));
    return w;
  };
  CHECK(coeff_gap(row_poly(form.A_true, form.basis.Z, 0),
                  P("-1.2*x1 + x2 - 0.2*x1^2 + 0.2*x1*x2", 2)) < 1e-14);
  CHECK(coeff_gap(row_poly(form.A_true, form.basis.Z, 1),
                  P("x1 - x2 + 0.2*x1^2 - 0.2*x1*x2", 2)) < 1e-14);

  // Input channel clears to 1 + 0.2 x1 on H rows [1, x1].
  REQUIRE(form.basis.H.rows() == 2);
  CHECK(form.basis.H(0, 0) == P("1", 2));
  CHECK(form.basis.H(1, 0) == P("x1", 2));
  CHECK(form.B_true(0, 0) == doctest::Approx(1.0));
  CHECK(form.B_true(0, 1) == doctest::Approx(0.2));
  CHECK(form.B_true(1, 0) == 0.0);
  CHECK(form.B_true(1, 1) == 0.0);
}

TEST_CASE("purely polynomial system degenerates cleanly") {
  RationalSystem sys;
  sys.n = 2;
  sys.m = 1;
  sys.drift = {{P("x2", 2), P("1", 2)}, {P("-x1 + x2^3", 2), P("1", 2)}};
  sys.input = {{{P("1", 2), P("1", 2)}}, {{P("0", 2), P("1", 2)}}};
  auto form = clear_denominators(sys);
  CHECK(form.p == P("1", 2));
  CHECK(form.basis.Zp.size() == 0);
  CHECK(form.P_true.cols() == 0);
  CHECK(form.basis.H.rows() == 1);
  CHECK(form.basis.H(0, 0) == P("1", 2));
}

TEST_CASE("denominator guard") {
  auto sys = example2();
  Eigen::VectorXd x(2), u(1);
  x << -5.0, 0.0;
  u << 0.0;
  CHECK_THROWS_AS(eval_dynamics(sys, x, u), std::domain_error);
  x << -5.0 + 1e-12, 0.0;
  CHECK_THROWS_AS(eval_dynamics(sys, x, u), std::domain_error);
  x << -4.0, 0.0;
  CHECK_NOTHROW(eval_dynamics(sys, x, u));
}

TEST_CASE("denominator grid report") {
  Box box5;
  box5.lo = Eigen::VectorXd::Constant(2, -5.0);
  box5.hi = Eigen::VectorXd::Constant(2, 5.0);
  auto r1 = validate_denominators(example1(), box5);
  CHECK(!r1.global_claim.has_value());
  CHECK(!r1.sign_change);
  CHECK(r1.box_min >= 1.0);
  CHECK(r1.box_min <= 1.05);

  Box box10;
  box10.lo = Eigen::VectorXd::Constant(2, -10.0);
  box10.hi = Eigen::VectorXd::Constant(2, 10.0);
  auto r2 = validate_denominators(example2(), box10);
  CHECK(r2.sign_change);
  REQUIRE(r2.global_claim.has_value());
  CHECK(*r2.global_claim == false);
  CHECK(r2.argmin[0] == doctest::Approx(-5.0).epsilon(0.1));

  RationalSystem sys;
  sys.n = 1;
  sys.m = 0;
  sys.drift = {{P("-x1", 1), P("1", 1)}};
  sys.input = {{}};
  Box box1;
  box1.lo = Eigen::VectorXd::Constant(1, -1.0);
  box1.hi = Eigen::VectorXd::Constant(1, 1.0);
  auto r3 = validate_denominators(sys, box1);
  REQUIRE(r3.global_claim.has_value());
  CHECK(*r3.global_claim == true);
}

TEST_CASE("over-approximated basis keeps the identity") {
  auto sys = example1();
  auto form = clear_denominators(sys);
  auto wide = augment_basis(
      form, {poly::Monomial::var(2, 0, 2),
             poly::Monomial(std::vector<int>{0, 3}),
             poly::Monomial::var(2, 0)});  // duplicate x1 is deduplicated
  CHECK(wide.basis.Z.size() == 7);
  CHECK(wide.basis.ZK.mons == wide.basis.Z.mons);
  std::mt19937_64 rng(73);
  CHECK(max_identity_residual(sys, wide, rng, 300, 2.0) < 1e-10);
  // Old columns moved, new columns are zero.
  CHECK(wide.A_true.cwiseAbs().sum() ==
        doctest::Approx(form.A_true.cwiseAbs().sum()));
  CHECK_THROWS_AS(augment_basis(form, {poly::Monomial::unit(2)}),
                  std::invalid_argument);
}

TEST_CASE("system validation rejects bad fixtures") {
  auto sys = example1();
  sys.drift[0].num = P("1 + x2^2", 2);  // origin no longer a steady state
  CHECK_THROWS_AS(clear_denominators(sys), std::invalid_argument);
  sys = example1();
  sys.drift[0].den = P("x1", 2);  // denominator vanishes at the origin
  CHECK_THROWS_AS(clear_denominators(sys), std::invalid_argument);
  sys = example1();
  sys.drift.pop_back();
  CHECK_THROWS_AS(sys.validate(), std::invalid_argument);
}

TEST_CASE("system files round trip") {
  auto sys = example2();
  auto text = format_system(sys);
  auto back = parse_system(text);
  auto f1 = clear_denominators(sys);
  auto f2 = clear_denominators(back);
  CHECK(f1.p == f2.p);
  CHECK(f1.A_true == f2.A_true);
  CHECK(f1.B_true == f2.B_true);
  CHECK(f1.basis.Z.mons == f2.basis.Z.mons);

  // Spec'd field names, defaulted denominators, unknown-key rejection.
  auto mini = parse_system(
      R"({"n":1,"m":1,"drift_num":["-x1"],"input_num":[["1"]]})");
  CHECK(mini.drift[0].den == P("1", 1));
  CHECK_THROWS_AS(parse_system(R"({"n":1,"m":0,"drift_num":["-x1"],"typo":1})"),
                  std::invalid_argument);
  CHECK_THROWS_AS(parse_system("not json"), std::invalid_argument);
  CHECK_THROWS_AS(parse_system(R"({"n":1,"m":1,"drift_num":["-x1"]})"),
                  std::invalid_argument);
}

}  // TEST_SUITE
