#include "doctest.h"

#include "ratsyn/data.hpp"

#include <cmath>
#include <cstdio>
#include <random>
#include <string>

#include "ratsyn/lift.hpp"
#include "ratsyn/model.hpp"

using namespace ratsyn;
using namespace ratsyn::data;

namespace {

poly::Polynomial P(const std::string& s, int nvars) {
  return poly::parse_poly(s, nvars);
}

// xdot1 = x2^2/(1+x1^2) + u1, xdot2 = x1 x2 + x2 u2 (open-loop unstable
// rational benchmark plant).
model::RationalSystem bench_rational() {
  model::RationalSystem sys;
  sys.n = 2;
  sys.m = 2;
  sys.drift = {{P("x2^2", 2), P("1 + x1^2", 2)},
               {P("x1*x2", 2), P("1", 2)}};
  sys.input = {{{P("1", 2), P("1", 2)}, {P("0", 2), P("1", 2)}},
               {{P("0", 2), P("1", 2)}, {P("x2", 2), P("1", 2)}}};
  return sys;
}

GenConfig bench_config() {
  GenConfig cfg;
  cfg.d = 4;
  cfg.Nd = 5;
  cfg.Ts = 1e-3;
  cfg.x0_lo = Eigen::Vector2d(-1.0, -1.0);
  cfg.x0_hi = Eigen::Vector2d(1.0, 1.0);
  cfg.u_lo = Eigen::Vector2d(-5.0, -5.0);
  cfg.u_hi = Eigen::Vector2d(5.0, 5.0);
  cfg.wbar = 1e-2;
  return cfg;
}

// Simple stable polynomial plant: xdot1 = x2, xdot2 = -x1 - x2 + u.
model::RationalSystem linear_plant() {
  model::RationalSystem sys;
  sys.n = 2;
  sys.m = 1;
  sys.drift = {{P("x2", 2), P("1", 2)}, {P("-x1 - x2", 2), P("1", 2)}};
  sys.input = {{{P("0", 2), P("1", 2)}}, {{P("1", 2), P("1", 2)}}};
  return sys;
}

lift::SymbolicSystem pendulum() {
  lift::SymbolicSystem sys;
  sys.l = 2;
  sys.m = 1;
  sys.lifts = {{"sin", 0, 0.0}, {"cos", 0, 0.0}};
  sys.f = poly::PolyMatrix(2, 1, 4);
  sys.f(0, 0) = P("x2", 4);
  sys.f(1, 0) = P("-9.81*x3", 4);
  sys.g = poly::PolyMatrix(2, 1, 4);
  sys.g(1, 0) = P("1", 4);
  return sys;
}

// Column-wise data-equation residual p(x) xdot - (A Z + B H u + Bw w).
double max_eq4_residual(const model::PolyForm& form, const Dataset& ds,
                        const Eigen::MatrixXd& Bw) {
  REQUIRE(ds.Wtrue.size() > 0);
  double worst = 0.0;
  for (int k = 0; k < ds.N(); ++k) {
    const Eigen::VectorXd x = ds.X.col(k);
    const Eigen::VectorXd lhs = form.p.eval(x) * ds.Xdot.col(k);
    const Eigen::VectorXd rhs =
        form.A_true * form.basis.Z.eval(x) +
        form.B_true * (form.basis.H.eval(x) * ds.U.col(k)) +
        Bw * ds.Wtrue.col(k);
    worst = std::max(worst, (lhs - rhs).cwiseAbs().maxCoeff());
  }
  return worst;
}

}  // namespace

TEST_SUITE("data") {

TEST_CASE("pointwise bound matches the lumped formula") {
  auto nb = pointwise_bound(1e-4, 100, 2);
  CHECK(nb.Qw == -Eigen::MatrixXd::Identity(100, 100));
  CHECK(nb.Sw == Eigen::MatrixXd::Zero(100, 2));
  CHECK((nb.Rw - 1e-6 * Eigen::MatrixXd::Identity(2, 2))
            .cwiseAbs()
            .maxCoeff() <= 1e-18);
  CHECK_NOTHROW(nb.validate());

  auto noise_free = pointwise_bound(0.0, 7, 3);
  CHECK(noise_free.Rw == Eigen::MatrixXd::Zero(3, 3));
}

TEST_CASE("pointwise bound admits exactly the pointwise-ball disturbances") {
  const int N = 17, mw = 3;
  const double wbar = 0.05;
  auto nb = pointwise_bound(wbar, N, mw);
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  std::uniform_real_distribution<double> rad(0.0, 1.0);
  for (int trial = 0; trial < 100; ++trial) {
    Eigen::MatrixXd W(mw, N);
    for (int k = 0; k < N; ++k) {
      Eigen::VectorXd dir(mw);
      for (int i = 0; i < mw; ++i) dir[i] = unit(rng);
      if (dir.norm() < 1e-12) dir.setOnes();
      W.col(k) = dir.normalized() * (wbar * rad(rng));
    }
    CHECK(noise_bound_eig(W, nb) >= -1e-15);
  }

  // One column exceeding the lumped budget wbar^2 N breaks the bound.
  Eigen::MatrixXd Wbad = Eigen::MatrixXd::Zero(mw, N);
  Wbad(0, 4) = wbar * std::sqrt(static_cast<double>(N)) * 1.01;
  CHECK(noise_bound_eig(Wbad, nb) < 0.0);
}

TEST_CASE("noise bound validation rejects malformed bounds") {
  auto nb = pointwise_bound(0.1, 5, 2);
  auto bad = nb;
  bad.Qw = Eigen::MatrixXd::Identity(5, 5);  // not negative definite
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);

  bad = nb;
  bad.Qw.setZero();  // semidefinite is not enough
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);

  bad = nb;
  bad.Qw(0, 1) = 0.5;  // asymmetric
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);

  bad = nb;
  bad.Bw = Eigen::MatrixXd::Zero(3, 2);
  bad.Bw(0, 0) = 1.0;  // rank 1 < 2 columns
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
}

TEST_CASE("generated data satisfies the perturbed data equation exactly") {
  auto form = model::clear_denominators(bench_rational());
  auto cfg = bench_config();
  auto ds = generate_data(form, cfg, 42);

  CHECK(ds.X.rows() == 2);
  CHECK(ds.X.cols() == 20);
  CHECK(ds.U.rows() == 2);
  CHECK(ds.Wtrue.cols() == 20);
  for (int traj = 0; traj < cfg.d; ++traj) {
    for (int k = 0; k < cfg.Nd; ++k) {
      CHECK(ds.times[traj * cfg.Nd + k] ==
            doctest::Approx(k * cfg.Ts).epsilon(1e-15));
    }
  }
  for (int k = 0; k < ds.N(); ++k) {
    CHECK(ds.Wtrue.col(k).norm() <= cfg.wbar * (1.0 + 1e-12));
  }
  CHECK(max_eq4_residual(form, ds, Eigen::MatrixXd::Identity(2, 2)) <
        1e-10);
}

TEST_CASE("noise-free generation records the true dynamics") {
  auto sys = bench_rational();
  auto form = model::clear_denominators(sys);
  auto cfg = bench_config();
  cfg.wbar = 0.0;
  auto ds = generate_data(form, cfg, 3);

  CHECK(ds.Wtrue.cwiseAbs().maxCoeff() == 0.0);
  for (int k = 0; k < ds.N(); ++k) {
    const Eigen::VectorXd truth =
        model::eval_dynamics(sys, ds.X.col(k), ds.U.col(k));
    CHECK((ds.Xdot.col(k) - truth).cwiseAbs().maxCoeff() <= 1e-12);
  }
}

TEST_CASE("generation is deterministic in the seed") {
  auto form = model::clear_denominators(bench_rational());
  auto cfg = bench_config();
  auto a = generate_data(form, cfg, 1234);
  auto b = generate_data(form, cfg, 1234);
  CHECK(a.X == b.X);
  CHECK(a.Xdot == b.Xdot);
  CHECK(a.U == b.U);
  CHECK(a.Wtrue == b.Wtrue);

  auto c = generate_data(form, cfg, 1235);
  CHECK(a.X != c.X);
}

TEST_CASE("finite-difference mode approximates derivatives without noise") {
  auto form = model::clear_denominators(linear_plant());
  GenConfig cfg;
  cfg.d = 2;
  cfg.Nd = 6;
  cfg.Ts = 1e-3;
  cfg.x0_lo = Eigen::Vector2d(-1.0, -1.0);
  cfg.x0_hi = Eigen::Vector2d(1.0, 1.0);
  cfg.u_lo = Eigen::VectorXd::Constant(1, -1.0);
  cfg.u_hi = Eigen::VectorXd::Constant(1, 1.0);
  cfg.deriv = DerivativeMode::kFiniteDifference;
  auto ds = generate_data(form, cfg, 5);

  CHECK(ds.Wtrue.size() == 0);
  for (int k = 0; k < ds.N(); ++k) {
    const Eigen::VectorXd x = ds.X.col(k);
    const Eigen::VectorXd truth = form.A_true * form.basis.Z.eval(x) +
                                  form.B_true *
                                      (form.basis.H.eval(x) * ds.U.col(k));
    // Forward difference of a smooth flow: O(Ts) error.
    CHECK((ds.Xdot.col(k) - truth).norm() <= 10.0 * cfg.Ts);
  }
}

TEST_CASE("assembled blocks match an independent dense congruence") {
  auto form = model::clear_denominators(bench_rational());
  auto cfg = bench_config();
  auto ds = generate_data(form, cfg, 99);
  auto nb = pointwise_bound(cfg.wbar, ds.N(), 2);
  auto cq = assemble_consistency(ds, form.basis, nb);

  CHECK(cq.nv() == 11);  // N_z + N_u + n N_p = 5 + 4 + 2
  CHECK(cq.Qbar.rows() == 11);
  CHECK((cq.Qbar - cq.Qbar.transpose()).cwiseAbs().maxCoeff() <= 1e-12);
  CHECK((cq.Rbar - cq.Rbar.transpose()).cwiseAbs().maxCoeff() <= 1e-12);

  // Independent computation of the full congruence, then block compare.
  const int n = 2, N = ds.N();
  const int nv = cq.nv();
  Eigen::MatrixXd T(nv, N);
  for (int k = 0; k < N; ++k) {
    const Eigen::VectorXd x = ds.X.col(k);
    T.col(k).head(form.basis.nz()) = -form.basis.Z.eval(x);
    T.col(k).segment(form.basis.nz(), form.basis.nu()) =
        -(form.basis.H.eval(x) * ds.U.col(k));
    const Eigen::VectorXd zp = form.basis.Zp.eval(x);
    for (int i = 0; i < n; ++i) {
      T.col(k).segment(form.basis.nz() + form.basis.nu() +
                           i * form.basis.np(),
                       form.basis.np()) = zp * ds.Xdot(i, k);
    }
  }
  Eigen::MatrixXd big(nv + n, N + nb.mw());
  big.setZero();
  big.topLeftCorner(nv, N) = T;
  big.bottomLeftCorner(n, N) = ds.Xdot;
  big.bottomRightCorner(n, nb.mw()) = nb.Bw;
  Eigen::MatrixXd mid(N + nb.mw(), N + nb.mw());
  mid << nb.Qw, nb.Sw, nb.Sw.transpose(), nb.Rw;
  const Eigen::MatrixXd full = big * mid * big.transpose();
  const double scale = full.cwiseAbs().maxCoeff();
  CHECK((cq.Qbar - full.topLeftCorner(nv, nv)).cwiseAbs().maxCoeff() <=
        1e-12 * (1.0 + scale));
  CHECK((cq.Sbar - full.topRightCorner(nv, n)).cwiseAbs().maxCoeff() <=
        1e-12 * (1.0 + scale));
  CHECK((cq.Rbar - full.bottomRightCorner(n, n)).cwiseAbs().maxCoeff() <=
        1e-12 * (1.0 + scale));
}

TEST_CASE("polynomial plants drop the Zp block") {
  auto form = model::clear_denominators(linear_plant());
  CHECK(form.basis.np() == 0);
  GenConfig cfg;
  cfg.d = 3;
  cfg.Nd = 4;
  cfg.Ts = 1e-3;
  cfg.x0_lo = Eigen::Vector2d(-1.0, -1.0);
  cfg.x0_hi = Eigen::Vector2d(1.0, 1.0);
  cfg.u_lo = Eigen::VectorXd::Constant(1, -1.0);
  cfg.u_hi = Eigen::VectorXd::Constant(1, 1.0);
  cfg.wbar = 1e-3;
  auto ds = generate_data(form, cfg, 11);
  auto nb = pointwise_bound(cfg.wbar, ds.N(), 2);
  auto cq = assemble_consistency(ds, form.basis, nb);
  CHECK(cq.np == 0);
  CHECK(cq.nv() == form.basis.nz() + form.basis.nu());
  CHECK(cq.Zphat.rows() == 0);
  auto res = membership_test(form.A_true, form.B_true,
                             Eigen::MatrixXd::Zero(1, 0), cq);
  CHECK(res.member);
}

TEST_CASE("noise-free consistency reduces to the residual-free bound") {
  auto form = model::clear_denominators(bench_rational());
  auto cfg = bench_config();
  cfg.wbar = 0.0;
  auto ds = generate_data(form, cfg, 21);
  const double wbar_assumed = 1e-3;
  auto nb = pointwise_bound(wbar_assumed, ds.N(), 2);
  auto cq = assemble_consistency(ds, form.basis, nb);

  // Zero residual: G collapses to Bw Rw Bw' exactly.
  const Eigen::MatrixXd V = [&] {
    Eigen::MatrixXd v(cq.nv(), cq.n);
    v.topRows(cq.nz) = form.A_true.transpose();
    v.middleRows(cq.nz, cq.nu) = form.B_true.transpose();
    v.bottomRows(cq.n * cq.np).setZero();
    for (int i = 0; i < cq.n; ++i) {
      v.block(cq.nz + cq.nu + i * cq.np, i, cq.np, 1) =
          form.P_true.transpose();
    }
    return v;
  }();
  const Eigen::MatrixXd G = V.transpose() * cq.Qbar * V +
                            V.transpose() * cq.Sbar +
                            cq.Sbar.transpose() * V + cq.Rbar;
  const Eigen::MatrixXd expected = nb.Bw * nb.Rw * nb.Bw.transpose();
  CHECK((G - expected).cwiseAbs().maxCoeff() <=
        1e-10 * (1.0 + expected.cwiseAbs().maxCoeff()));

  auto res = membership_test(form.A_true, form.B_true, form.P_true, cq);
  CHECK(res.member);
  CHECK(res.min_eig >= -1e-12);
}

TEST_CASE("true parameters are members for every seed") {
  auto form = model::clear_denominators(bench_rational());
  auto cfg = bench_config();
  for (std::uint64_t seed = 0; seed < 30; ++seed) {
    auto ds = generate_data(form, cfg, seed);
    auto nb = pointwise_bound(cfg.wbar, ds.N(), 2);
    auto cq = assemble_consistency(ds, form.basis, nb);
    auto res = membership_test(form.A_true, form.B_true, form.P_true, cq);
    CHECK_MESSAGE(res.member, "seed ", seed, " min_eig ", res.min_eig);
  }
}

TEST_CASE("inconsistent parameters are rejected on rich data") {
  auto form = model::clear_denominators(bench_rational());
  auto cfg = bench_config();
  cfg.d = 200;
  cfg.Nd = 5;
  cfg.wbar = 1e-4;
  auto ds = generate_data(form, cfg, 2024);
  CHECK(ds.N() == 1000);
  auto nb = pointwise_bound(cfg.wbar, ds.N(), 2);
  auto cq = assemble_consistency(ds, form.basis, nb);
  CHECK_FALSE(cq.rank_deficient);

  auto res = membership_test(1e6 * form.A_true, form.B_true, form.P_true, cq);
  CHECK_FALSE(res.member);
  CHECK(res.min_eig < -1.0);
}

TEST_CASE("membership agrees with reconstructed-disturbance admissibility") {
  auto form = model::clear_denominators(bench_rational());
  auto cfg = bench_config();
  cfg.d = 10;
  auto ds = generate_data(form, cfg, 77);
  auto nb = pointwise_bound(cfg.wbar, ds.N(), 2);
  auto cq = assemble_consistency(ds, form.basis, nb);

  // The true parameters reconstruct exactly the generated disturbance.
  const Eigen::MatrixXd Wrec =
      reconstruct_disturbance(form.A_true, form.B_true, form.P_true, cq);
  CHECK((Wrec - ds.Wtrue).cwiseAbs().maxCoeff() <= 1e-9);
  CHECK(noise_bound_eig(Wrec, nb) >= -1e-6);

  // With square invertible Bw, G = Bw (W Qw W' + W Sw + Sw' W' + Rw) Bw',
  // so membership must agree in sign with the disturbance bound for any
  // parameter perturbation (both Theorem directions at once).
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  int checked = 0;
  for (double scale : {1e-6, 1e-4, 1e-3, 1e-2, 1e-1, 1.0}) {
    for (int trial = 0; trial < 5; ++trial) {
      Eigen::MatrixXd dA(form.A_true.rows(), form.A_true.cols());
      for (int i = 0; i < dA.rows(); ++i) {
        for (int j = 0; j < dA.cols(); ++j) dA(i, j) = scale * unit(rng);
      }
      const Eigen::MatrixXd A = form.A_true + dA;
      auto res = membership_test(A, form.B_true, form.P_true, cq);
      const Eigen::MatrixXd W =
          reconstruct_disturbance(A, form.B_true, form.P_true, cq);
      const double weig = noise_bound_eig(W, nb);
      CHECK(std::abs(res.min_eig - weig) <=
            1e-8 * (1.0 + std::abs(res.min_eig)));
      if (std::abs(weig) > 1e-9) {
        CHECK(res.member == (weig >= 0.0));
        ++checked;
      }
    }
  }
  CHECK(checked >= 20);  // the scan must actually exercise both outcomes
}

TEST_CASE("rank-deficient data is flagged and rich data gives Qbar <= 0") {
  auto form = model::clear_denominators(bench_rational());
  auto cfg = bench_config();

  cfg.d = 1;  // N = 5 < N_v = 11
  auto small = generate_data(form, cfg, 8);
  auto nb_small = pointwise_bound(cfg.wbar, small.N(), 2);
  auto cq_small = assemble_consistency(small, form.basis, nb_small);
  CHECK(cq_small.rank_deficient);

  cfg.d = 6;  // N = 30 > 11, generic data
  auto rich = generate_data(form, cfg, 8);
  auto nb_rich = pointwise_bound(cfg.wbar, rich.N(), 2);
  auto cq_rich = assemble_consistency(rich, form.basis, nb_rich);
  CHECK_FALSE(cq_rich.rank_deficient);
  CHECK(cq_rich.data_rank == cq_rich.nv());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(cq_rich.Qbar);
  CHECK(es.eigenvalues().maxCoeff() <=
        1e-9 * (1.0 + cq_rich.Qbar.cwiseAbs().maxCoeff()));
}

TEST_CASE("lifted plants generate on the embedded manifold") {
  auto lifted = lift::polynomialize(pendulum());
  GenConfig cfg;
  cfg.d = 3;
  cfg.Nd = 5;
  cfg.Ts = 1e-3;
  cfg.x0_lo = Eigen::Vector2d(-2.0, -2.0);  // original coordinates
  cfg.x0_hi = Eigen::Vector2d(2.0, 2.0);
  cfg.u_lo = Eigen::VectorXd::Constant(1, -10.0);
  cfg.u_hi = Eigen::VectorXd::Constant(1, 10.0);
  cfg.wbar = 1e-4;
  auto ds = generate_data(lifted, cfg, 6);

  CHECK(ds.X.rows() == 4);  // extended coordinates
  CHECK(ds.N() == 15);
  for (int k = 0; k < ds.N(); ++k) {
    // sin^2 + cos^2 stays near 1 along the extended flow.
    const double s = ds.X(2, k), c = ds.X(3, k);
    CHECK(std::abs(s * s + c * c - 1.0) <= 1e-8);
  }
  // First sample of each trajectory lies exactly on the manifold.
  for (int traj = 0; traj < cfg.d; ++traj) {
    const int k0 = traj * cfg.Nd;
    CHECK(ds.X(2, k0) ==
          doctest::Approx(std::sin(ds.X(0, k0))).epsilon(1e-14));
    CHECK(ds.X(3, k0) ==
          doctest::Approx(std::cos(ds.X(0, k0))).epsilon(1e-14));
  }
  CHECK(max_eq4_residual(lifted.dynamics, ds,
                         Eigen::MatrixXd::Identity(4, 4)) < 1e-10);
}

TEST_CASE("dataset files round trip") {
  auto form = model::clear_denominators(bench_rational());
  auto cfg = bench_config();
  auto ds = generate_data(form, cfg, 31);
  DatasetMeta meta;
  meta.seed = 31;
  meta.wbar = cfg.wbar;
  meta.Ts = cfg.Ts;
  meta.d = cfg.d;
  meta.Nd = cfg.Nd;

  const std::string path = "test_dataset_roundtrip.csv";
  save_dataset(ds, meta, path);
  DatasetMeta back_meta;
  auto back = load_dataset(path, &back_meta);

  CHECK(back.N() == ds.N());
  CHECK(back.n() == 2);
  CHECK(back.m() == 2);
  CHECK((back.X - ds.X).cwiseAbs().maxCoeff() <= 1e-9);
  CHECK((back.Xdot - ds.Xdot).cwiseAbs().maxCoeff() <= 1e-9);
  CHECK((back.U - ds.U).cwiseAbs().maxCoeff() <= 1e-9);
  CHECK((back.times - ds.times).cwiseAbs().maxCoeff() <= 1e-9);
  CHECK(back.Wtrue.size() == 0);  // ground truth is not persisted
  CHECK(back_meta.seed == 31);
  CHECK(back_meta.wbar == doctest::Approx(cfg.wbar));
  CHECK(back_meta.d == 4);
  CHECK(back_meta.Nd == 5);
  std::remove(path.c_str());
  std::remove((path + ".meta.json").c_str());
}

TEST_CASE("configuration errors are rejected") {
  auto form = model::clear_denominators(bench_rational());
  auto cfg = bench_config();
  cfg.Ts = 0.0;
  CHECK_THROWS_AS(generate_data(form, cfg, 1), std::invalid_argument);

  cfg = bench_config();
  cfg.x0_lo = Eigen::VectorXd::Zero(3);  // wrong dimension
  CHECK_THROWS_AS(generate_data(form, cfg, 1), std::invalid_argument);

  cfg = bench_config();
  cfg.u_hi = -cfg.u_lo.array().abs().matrix() -
             Eigen::Vector2d::Ones();  // hi < lo
  CHECK_THROWS_AS(generate_data(form, cfg, 1), std::invalid_argument);

  auto ds = generate_data(form, bench_config(), 1);
  auto nb = pointwise_bound(1e-2, ds.N() + 1, 2);  // wrong sample count
  CHECK_THROWS_AS(assemble_consistency(ds, form.basis, nb),
                  std::invalid_argument);
}

}  // TEST_SUITE
