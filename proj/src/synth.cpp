#include "ratsyn/synth.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "nlohmann/json.hpp"

namespace ratsyn::synth {
namespace {

using poly::Monomial;
using poly::MonomialVector;
using poly::Polynomial;
using poly::PolyMatrix;

// Upper-triangle (i, j) pairs in row-major svec order.
std::vector<std::pair<int, int>> upper_pairs(int dim) {
  std::vector<std::pair<int, int>> out;
  out.reserve(static_cast<std::size_t>(dim * (dim + 1) / 2));
  for (int i = 0; i < dim; ++i)
    for (int j = i; j < dim; ++j) out.emplace_back(i, j);
  return out;
}

void add_block(PolyMatrix& big, int r0, int c0, const PolyMatrix& small) {
  for (int r = 0; r < small.rows(); ++r)
    for (int c = 0; c < small.cols(); ++c)
      big(r0 + r, c0 + c) = big(r0 + r, c0 + c) + small(r, c);
}

Eigen::MatrixXd sym(const Eigen::MatrixXd& m) {
  return 0.5 * (m + m.transpose());
}

double min_eig(const Eigen::MatrixXd& m) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(sym(m));
  return es.eigenvalues().minCoeff();
}

// Everything the block assembly needs, shared between the stability and
// performance families (perf == nullptr for stability).
struct Pieces {
  int n = 0, m = 0, nz = 0, nu = 0, np = 0, nv = 0;
  int mwp = 0, pz = 0;  // performance tail block sizes
  int size = 0;         // full family block size
  PolyMatrix Y;         // N_z x n, Z = Y x
  PolyMatrix YK;        // N_K x n, Z_K = YK x
  PolyMatrix H;         // N_u x m
  PolyMatrix q2;        // N_v x n
  Eigen::MatrixXd Emb;  // (n+nv) x (n+nv): [[Rbar, Sbar'], [Sbar, Qbar]]
  MonomialVector ZK;
  const PerformanceIndex* perf = nullptr;
  Eigen::MatrixXd Rp_inv, Qp_script;
};

Pieces make_pieces(const data::ConsistencyQuadratic& cq,
                   const model::BasisSpec& basis,
                   const SynthesisOptions& opts,
                   const PerformanceIndex* perf) {
  if (cq.n <= 0) throw std::invalid_argument("synth: empty consistency data");
  if (basis.nz() != cq.nz || basis.nu() != cq.nu || basis.np() != cq.np)
    throw std::invalid_argument(
        "synth: basis dimensions do not match the consistency quadratic");
  Pieces pc;
  pc.n = cq.n;
  pc.m = basis.H.cols();
  pc.nz = cq.nz;
  pc.nu = cq.nu;
  pc.np = cq.np;
  pc.nv = cq.nv();
  pc.H = basis.H;
  pc.ZK = opts.Z_K.mons.empty() ? basis.Z : opts.Z_K;
  if (pc.ZK.mons.empty())
    throw std::invalid_argument("synth: missing Z_K (controller basis)");
  if (pc.ZK.nvars != pc.n)
    throw std::invalid_argument("synth: Z_K variable count mismatch");
  pc.Y = poly::decompose_linear_factor(basis.Z);
  pc.YK = poly::decompose_linear_factor(pc.ZK);

  pc.q2 = PolyMatrix::zero(pc.nv, pc.n, pc.n);
  if (pc.np > 0)
    add_block(pc.q2, pc.nz + pc.nu, 0, poly::kron_identity(pc.n, basis.Zp));

  pc.Emb.resize(pc.n + pc.nv, pc.n + pc.nv);
  pc.Emb.topLeftCorner(pc.n, pc.n) = cq.Rbar;
  pc.Emb.topRightCorner(pc.n, pc.nv) = cq.Sbar.transpose();
  pc.Emb.bottomLeftCorner(pc.nv, pc.n) = cq.Sbar;
  pc.Emb.bottomRightCorner(pc.nv, pc.nv) = cq.Qbar;
  pc.Emb = sym(pc.Emb);

  pc.size = pc.n + pc.nv;
  if (perf != nullptr) {
    perf->validate(pc.n, pc.nz, pc.m);
    pc.perf = perf;
    pc.mwp = perf->mwp();
    pc.pz = perf->pz();
    pc.size += pc.mwp + pc.pz;
    Eigen::LLT<Eigen::MatrixXd> llt(sym(perf->Rp));
    if (llt.info() != Eigen::Success)
      throw std::invalid_argument("synth: R_p is not positive definite");
    pc.Rp_inv = llt.solve(Eigen::MatrixXd::Identity(pc.pz, pc.pz));
    pc.Rp_inv = sym(pc.Rp_inv);
    pc.Qp_script = perf->Qp_script();
  }
  return pc;
}

// -[[0, M'], [M, q2 M' + M q2']] embedded at the top-left of a size x size
// matrix: the sensitivity of the family to a W-direction M (N_v x n).
PolyMatrix w_sensitivity(const Pieces& pc, const PolyMatrix& M) {
  PolyMatrix out = PolyMatrix::zero(pc.size, pc.size, pc.n);
  const PolyMatrix Mt = M.transpose();
  add_block(out, 0, pc.n, -Mt);
  add_block(out, pc.n, 0, -M);
  const PolyMatrix cross = pc.q2 * Mt;
  add_block(out, pc.n, pc.n, -(cross + cross.transpose()));
  return out;
}

// Performance coupling of a q3-direction N = dq3/dtheta (p_z x n): q3
// enters rows (4,1), (4,2) and -Sp q3 enters row (3,1), plus transposes.
void add_perf_sensitivity(const Pieces& pc, const PolyMatrix& N,
                          PolyMatrix* gen) {
  const int r3 = pc.n + pc.nv;
  const int r4 = r3 + pc.mwp;
  const PolyMatrix Nt = N.transpose();
  add_block(*gen, r4, 0, N);
  add_block(*gen, 0, r4, Nt);
  const PolyMatrix nq2 = N * pc.q2.transpose();
  add_block(*gen, r4, pc.n, nq2);
  add_block(*gen, pc.n, r4, nq2.transpose());
  const PolyMatrix spn = N.left_mul(pc.perf->Sp).scaled(-1.0);
  add_block(*gen, r3, 0, spn);
  add_block(*gen, 0, r3, spn.transpose());
}

// Entry-wise max degree over the tau-free part of the family (base plus all
// Ycal / L generator directions), used by the multiplier degree scan.
struct DegreeProfile {
  Eigen::MatrixXi deg;       // -1 when structurally zero
  int topleft = 0;           // n + nv: where tau enters
};

void absorb_degrees(const PolyMatrix& m, Eigen::MatrixXi* deg) {
  for (int r = 0; r < m.rows(); ++r)
    for (int c = 0; c < m.cols(); ++c)
      (*deg)(r, c) = std::max((*deg)(r, c), m(r, c).degree());
}

int scan_multiplier_degree(const DegreeProfile& prof) {
  const int size = static_cast<int>(prof.deg.rows());
  constexpr int kCap = 12;
  for (int t = 0; t <= kCap; t += 2) {
    auto entry_deg = [&](int i, int j) {
      const bool masked = i < prof.topleft && j < prof.topleft;
      int d = prof.deg(i, j);
      if (masked) d = std::max(d, t);
      return d;
    };
    bool ok = true;
    for (int i = 0; i < size && ok; ++i) {
      for (int j = i + 1; j < size && ok; ++j) {
        const int off = entry_deg(i, j);
        if (off < 0) continue;  // structurally zero entry
        const int dii = std::max(entry_deg(i, i), 0);
        const int djj = std::max(entry_deg(j, j), 0);
        if (2 * off > dii + djj) ok = false;
      }
    }
    if (ok) return t;
  }
  return kCap;
}

struct LVarSpec {
  // Sensitivity dL/dtheta for one scalar L variable.
  PolyMatrix dL;  // m x n
  std::string name;
};

std::vector<LVarSpec> l_variable_specs(const Pieces& pc,
                                       const SynthesisOptions& opts,
                                       MonomialVector* l_monos) {
  std::vector<LVarSpec> out;
  if (opts.deg_L < 0) {
    // Structured span L = Theta * Y_K, one variable per (input, Z_K row).
    for (int j = 0; j < pc.m; ++j) {
      for (int k = 0; k < pc.YK.rows(); ++k) {
        PolyMatrix dL = PolyMatrix::zero(pc.m, pc.n, pc.n);
        for (int c = 0; c < pc.n; ++c) dL(j, c) = pc.YK(k, c);
        out.push_back({std::move(dL), "L[" + std::to_string(j) + "," +
                                          std::to_string(k) + "]"});
      }
    }
  } else {
    *l_monos = poly::monomials_up_to(pc.n, opts.deg_L);
    for (int j = 0; j < pc.m; ++j) {
      for (int c = 0; c < pc.n; ++c) {
        for (int q = 0; q < l_monos->size(); ++q) {
          PolyMatrix dL = PolyMatrix::zero(pc.m, pc.n, pc.n);
          dL(j, c) = Polynomial::monomial(l_monos->mons[static_cast<std::size_t>(q)]);
          out.push_back({std::move(dL), "L[" + std::to_string(j) + "," +
                                            std::to_string(c) + "]m" +
                                            std::to_string(q)});
        }
      }
    }
  }
  return out;
}

// Base (theta-independent) part of the family.
PolyMatrix family_base(const Pieces& pc, double eps) {
  PolyMatrix base = PolyMatrix::zero(pc.size, pc.size, pc.n);
  // -eps [I; q2][I; q2]'.
  add_block(base, 0, 0,
            PolyMatrix::constant(
                -eps * Eigen::MatrixXd::Identity(pc.n, pc.n), pc.n));
  add_block(base, 0, pc.n, pc.q2.transpose().scaled(-eps));
  add_block(base, pc.n, 0, pc.q2.scaled(-eps));
  add_block(base, pc.n, pc.n, (pc.q2 * pc.q2.transpose()).scaled(-eps));
  if (pc.perf != nullptr) {
    const int r3 = pc.n + pc.nv;
    const int r4 = r3 + pc.mwp;
    const PolyMatrix mBpT =
        PolyMatrix::constant((-pc.perf->Bp.transpose()).eval(), pc.n);
    add_block(base, r3, 0, mBpT);
    add_block(base, 0, r3, mBpT.transpose());
    // -Bp' q2' = (q2 * (-Bp))' is m_wp x nv.
    const PolyMatrix mBpTq2t = pc.q2.right_mul(-pc.perf->Bp).transpose();
    add_block(base, r3, pc.n, mBpTq2t);
    add_block(base, pc.n, r3, mBpTq2t.transpose());
    add_block(base, r3, r3, PolyMatrix::constant(-pc.Qp_script, pc.n));
    add_block(base, r4, r3, PolyMatrix::constant(pc.perf->Dp, pc.n));
    add_block(base, r3, r4, PolyMatrix::constant(pc.perf->Dp.transpose(), pc.n));
    add_block(base, r4, r4, PolyMatrix::constant(pc.Rp_inv, pc.n));
  }
  return base;
}

StabilityFamily assemble_family(const data::ConsistencyQuadratic& cq,
                                const model::BasisSpec& basis,
                                const SynthesisOptions& opts,
                                const PerformanceIndex* perf) {
  Pieces pc = make_pieces(cq, basis, opts, perf);

  MonomialVector l_monos;
  std::vector<LVarSpec> lvars = l_variable_specs(pc, opts, &l_monos);

  // Resolve the multiplier degree from the tau-free degree profile.
  int deg_tau = opts.deg_tau;
  if (deg_tau < 0) {
    DegreeProfile prof;
    prof.deg = Eigen::MatrixXi::Constant(pc.size, pc.size, -1);
    prof.topleft = pc.n + pc.nv;
    absorb_degrees(family_base(pc, opts.eps), &prof.deg);
    const auto ypairs = upper_pairs(pc.n);
    for (const auto& [a, b] : ypairs) {
      Eigen::MatrixXd S = Eigen::MatrixXd::Zero(pc.n, pc.n);
      S(a, b) = 1.0;
      S(b, a) = 1.0;
      PolyMatrix M = PolyMatrix::zero(pc.nv, pc.n, pc.n);
      add_block(M, 0, 0, pc.Y.right_mul(S));
      PolyMatrix gen = w_sensitivity(pc, M);
      if (pc.perf != nullptr)
        add_perf_sensitivity(pc, pc.Y.right_mul(S).left_mul(pc.perf->C), &gen);
      absorb_degrees(gen, &prof.deg);
    }
    for (const auto& lv : lvars) {
      PolyMatrix M = PolyMatrix::zero(pc.nv, pc.n, pc.n);
      add_block(M, pc.nz, 0, pc.H * lv.dL);
      PolyMatrix gen = w_sensitivity(pc, M);
      if (pc.perf != nullptr)
        add_perf_sensitivity(pc, lv.dL.left_mul(pc.perf->D), &gen);
      absorb_degrees(gen, &prof.deg);
    }
    deg_tau = scan_multiplier_degree(prof);
  }
  if (deg_tau % 2 != 0)
    throw std::invalid_argument("synth: deg_tau must be even");

  FamilyLayout layout;
  layout.n = pc.n;
  layout.m = pc.m;
  layout.nv = pc.nv;
  layout.size = pc.size;
  layout.deg_tau = deg_tau;
  layout.tau_basis = poly::monomials_up_to(pc.n, deg_tau / 2);
  layout.structured_L = opts.deg_L < 0;
  layout.YK = pc.YK;
  layout.L_monos = l_monos;

  const int lt = layout.tau_basis.size();
  const int tsv = lt * (lt + 1) / 2;
  const int ysv = pc.n * (pc.n + 1) / 2;
  layout.tau_vid0 = 0;
  layout.y_vid0 = tsv;
  layout.l_vid0 = tsv + ysv;
  layout.num_l_vars = static_cast<int>(lvars.size());

  sosc::AffinePolyFamily fam;
  fam.nvars = pc.n;
  fam.size = pc.size;
  fam.base = family_base(pc, opts.eps);

  // Lambda_tau block.
  {
    sosc::PsdVarBlock blk;
    blk.name = "tau";
    blk.dim = lt;
    blk.shift = 0.0;
    const auto pairs = upper_pairs(lt);
    for (const auto& [a, b] : pairs) {
      const int vid = static_cast<int>(fam.vars.size());
      fam.vars.push_back({"tau[" + std::to_string(a) + "," +
                              std::to_string(b) + "]",
                          false});
      blk.vids.push_back(vid);
      const double c = (a == b) ? 1.0 : 2.0;
      const Polynomial zz =
          Polynomial::monomial(layout.tau_basis.mons[static_cast<std::size_t>(a)]) *
          Polynomial::monomial(layout.tau_basis.mons[static_cast<std::size_t>(b)]);
      PolyMatrix gen = PolyMatrix::zero(pc.size, pc.size, pc.n);
      add_block(gen, 0, 0, PolyMatrix::constant(pc.Emb, pc.n).scaled(zz).scaled(-c));
      fam.gens.emplace_back(vid, std::move(gen));
    }
    fam.psd_blocks.push_back(std::move(blk));
  }

  // Ycal block.
  {
    sosc::PsdVarBlock blk;
    blk.name = "Ycal";
    blk.dim = pc.n;
    blk.shift = opts.mu;
    const auto pairs = upper_pairs(pc.n);
    for (const auto& [a, b] : pairs) {
      const int vid = static_cast<int>(fam.vars.size());
      fam.vars.push_back({"Y[" + std::to_string(a) + "," +
                              std::to_string(b) + "]",
                          false});
      blk.vids.push_back(vid);
      Eigen::MatrixXd S = Eigen::MatrixXd::Zero(pc.n, pc.n);
      S(a, b) = 1.0;
      S(b, a) = 1.0;
      PolyMatrix M = PolyMatrix::zero(pc.nv, pc.n, pc.n);
      add_block(M, 0, 0, pc.Y.right_mul(S));
      PolyMatrix gen = w_sensitivity(pc, M);
      if (pc.perf != nullptr)
        add_perf_sensitivity(pc, pc.Y.right_mul(S).left_mul(pc.perf->C), &gen);
      fam.gens.emplace_back(vid, std::move(gen));
    }
    fam.psd_blocks.push_back(std::move(blk));
  }

  // L variables.
  for (const auto& lv : lvars) {
    const int vid = static_cast<int>(fam.vars.size());
    fam.vars.push_back({lv.name, false});
    PolyMatrix M = PolyMatrix::zero(pc.nv, pc.n, pc.n);
    add_block(M, pc.nz, 0, pc.H * lv.dL);
    PolyMatrix gen = w_sensitivity(pc, M);
    if (pc.perf != nullptr)
      add_perf_sensitivity(pc, lv.dL.left_mul(pc.perf->D), &gen);
    fam.gens.emplace_back(vid, std::move(gen));
  }

  fam.validate();  // asserts symmetry of the base and every generator
  return {std::move(fam), std::move(layout)};
}

sosc::GramTemplate make_template(const StabilityFamily& sf,
                                 const SynthesisOptions& opts) {
  const int fdeg = std::max(sf.family.degree(), 0);
  const int half = opts.gram_half_degree >= 0 ? opts.gram_half_degree
                                              : (fdeg + 1) / 2;
  if (2 * half < fdeg)
    throw std::invalid_argument(
        "synth: gram_half_degree override too small for the family degree");
  return sosc::gram_parametrize(sf.layout.n, sf.family.size, 2 * half);
}

double data_frobenius(const data::ConsistencyQuadratic& cq) {
  const double q = cq.Qbar.norm();
  const double s = cq.Sbar.norm();
  const double r = cq.Rbar.norm();
  return std::sqrt(q * q + 2.0 * s * s + r * r);
}

// SplitMix64; deterministic across platforms (mirrors data.cpp).
struct SplitMix64 {
  std::uint64_t state;
  explicit SplitMix64(std::uint64_t seed) : state(seed) {}
  std::uint64_t next() {
    state += 0x9E3779B97F4A7C15ULL;
    std::uint64_t z = state;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }
  double uniform() {
    return static_cast<double>(next() >> 11) * 0x1.0p-53;
  }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
};

SynthResult run_synthesis(const data::ConsistencyQuadratic& cq,
                          const model::BasisSpec& basis,
                          const SynthesisOptions& opts,
                          const PerformanceIndex* perf) {
  SynthResult res;
  const int max_attempts = opts.rescale_retry ? 2 : 1;
  for (int attempt = 0; attempt < max_attempts; ++attempt) {
    data::ConsistencyQuadratic use = cq;
    double scale = 1.0;
    if (attempt == 1) {
      scale = data_frobenius(cq);
      if (!(scale > 0.0) || !std::isfinite(scale)) scale = 1.0;
      use.Qbar /= scale;
      use.Sbar /= scale;
      use.Rbar /= scale;
    }

    StabilityFamily sf = assemble_family(use, basis, opts, perf);
    const sosc::GramTemplate tmpl = make_template(sf, opts);
    sosc::CompiledSos compiled =
        sosc::compile_sos(sf.family, tmpl, opts.compile);
    sdp::IpmOptions iopt = opts.solver;
    iopt.eq_slack = opts.eq_slack;
    const sdp::Solution sol = sdp::solve_ipm(compiled.problem, iopt);

    AttemptReport rep;
    rep.rescaled = attempt == 1;
    rep.data_scale = scale;
    rep.solve = sol.report;

    if (sol.report.status == sdp::SolveStatus::kInfeasible) {
      res.attempts.push_back(rep);
      res.status = SynthStatus::kInfeasible;
      res.message =
          "Farkas infeasibility certificate (residual " +
          std::to_string(sol.report.infeas_cert_residual) +
          "): the data admits no robust certificate at this noise level";
      return res;
    }

    const Eigen::VectorXd theta = compiled.extract_theta(sol.x);
    const Eigen::MatrixXd lambda = compiled.extract_lambda(sol.x);
    rep.verify = sosc::verify_certificate(sf.family.value(theta), lambda, tmpl);
    const Eigen::MatrixXd Ycal = sf.layout.Ycal_of(theta);
    rep.ycal_min_eig = min_eig(Ycal);
    res.attempts.push_back(rep);

    const bool ok = rep.verify.max_coeff_residual < opts.accept_residual &&
                    rep.verify.lambda_min_eig >= -1e-8 &&
                    rep.ycal_min_eig >= opts.mu * (1.0 - 1e-6);
    if (ok) {
      Controller ctrl;
      ctrl.n = sf.layout.n;
      ctrl.m = sf.layout.m;
      ctrl.Ycal = Ycal;
      Eigen::LLT<Eigen::MatrixXd> llt(sym(ctrl.Ycal));
      if (llt.info() != Eigen::Success) {
        res.status = SynthStatus::kInaccurate;
        res.message = "Ycal failed Cholesky despite eigenvalue check";
        return res;
      }
      ctrl.Xcal = sym(llt.solve(Eigen::MatrixXd::Identity(ctrl.n, ctrl.n)));
      ctrl.Lpoly = sf.layout.L_of(theta);
      // tau certified for the scaled data equals scale * tau for the raw
      // data blocks; report the raw-data multiplier.
      ctrl.tau_poly = sf.layout.tau_of(theta).scaled(1.0 / scale);
      ctrl.tau0 = ctrl.tau_poly.eval(Eigen::VectorXd::Zero(ctrl.n));
      ctrl.eps = opts.eps;
      ctrl.certificate = rep.verify;
      res.status = SynthStatus::kFeasible;
      res.controller = std::move(ctrl);
      res.message = rep.rescaled
                        ? "verified after unit-Frobenius data rescaling"
                        : "verified on first attempt";
      return res;
    }
  }
  res.status = SynthStatus::kInaccurate;
  std::ostringstream msg;
  msg << "no verifiable certificate within the iteration budget;";
  for (const auto& a : res.attempts)
    msg << (a.rescaled ? " rescaled" : " raw") << " attempt: solver "
        << sdp::to_string(a.solve.status) << ", coeff residual "
        << a.verify.max_coeff_residual << ", lambda min eig "
        << a.verify.lambda_min_eig << ";";
  res.message = msg.str();
  return res;
}

}  // namespace

Eigen::MatrixXd PerformanceIndex::Qp_script() const {
  return Qp + Sp * Dp + Dp.transpose() * Sp.transpose();
}

void PerformanceIndex::validate(int n, int nz, int m) const {
  const int w = mwp();
  const int z = pz();
  if (Qp.rows() != w || Qp.cols() != w || !Qp.isApprox(Qp.transpose(), 1e-12))
    throw std::invalid_argument("PerformanceIndex: Qp must be symmetric");
  if (Rp.rows() != z || Rp.cols() != z || !Rp.isApprox(Rp.transpose(), 1e-12))
    throw std::invalid_argument("PerformanceIndex: Rp must be symmetric");
  if (Sp.rows() != w || Sp.cols() != z)
    throw std::invalid_argument("PerformanceIndex: Sp shape mismatch");
  if (Bp.rows() != n || Bp.cols() != w)
    throw std::invalid_argument("PerformanceIndex: Bp shape mismatch");
  if (C.rows() != z || C.cols() != nz)
    throw std::invalid_argument("PerformanceIndex: C shape mismatch");
  if (D.rows() != z || D.cols() != m)
    throw std::invalid_argument("PerformanceIndex: D shape mismatch");
  if (Dp.rows() != z || Dp.cols() != w)
    throw std::invalid_argument("PerformanceIndex: Dp shape mismatch");
  Eigen::LLT<Eigen::MatrixXd> llt(0.5 * (Rp + Rp.transpose()));
  if (llt.info() != Eigen::Success)
    throw std::invalid_argument("PerformanceIndex: Rp must be SPD");
}

PerformanceIndex l2_gain_index(double gamma, int n, int m,
                               const model::BasisSpec& basis) {
  if (!(gamma > 0.0))
    throw std::invalid_argument("l2_gain_index: gamma must be positive");
  PerformanceIndex perf;
  perf.Qp = -gamma * gamma * Eigen::MatrixXd::Identity(n, n);
  perf.Sp = Eigen::MatrixXd::Zero(n, n);
  perf.Rp = Eigen::MatrixXd::Identity(n, n);
  perf.Bp = Eigen::MatrixXd::Identity(n, n);
  perf.C = Eigen::MatrixXd::Zero(n, basis.nz());
  for (int i = 0; i < n; ++i) {
    const int idx = basis.Z.index_of(Monomial::var(n, i));
    if (idx < 0)
      throw std::invalid_argument(
          "l2_gain_index: Z must contain the state monomials");
    perf.C(i, idx) = 1.0;
  }
  perf.D = Eigen::MatrixXd::Zero(n, m);
  perf.Dp = Eigen::MatrixXd::Zero(n, n);
  return perf;
}

Eigen::MatrixXd FamilyLayout::Ycal_of(const Eigen::VectorXd& theta) const {
  Eigen::MatrixXd Y(n, n);
  int k = y_vid0;
  for (int i = 0; i < n; ++i)
    for (int j = i; j < n; ++j) {
      Y(i, j) = theta[k];
      Y(j, i) = theta[k];
      ++k;
    }
  return Y;
}

poly::PolyMatrix FamilyLayout::L_of(const Eigen::VectorXd& theta) const {
  PolyMatrix L = PolyMatrix::zero(m, n, n);
  if (structured_L) {
    Eigen::MatrixXd Theta(m, YK.rows());
    int k = l_vid0;
    for (int j = 0; j < m; ++j)
      for (int r = 0; r < YK.rows(); ++r) Theta(j, r) = theta[k++];
    L = YK.left_mul(Theta);
  } else {
    int k = l_vid0;
    for (int j = 0; j < m; ++j)
      for (int c = 0; c < n; ++c)
        for (int q = 0; q < L_monos.size(); ++q) {
          L(j, c) = L(j, c) +
                    Polynomial::monomial(
                        L_monos.mons[static_cast<std::size_t>(q)], theta[k]);
          ++k;
        }
  }
  return L;
}

poly::Polynomial FamilyLayout::tau_of(const Eigen::VectorXd& theta) const {
  Polynomial tau = Polynomial::constant(n, 0.0);
  int k = tau_vid0;
  const int lt = tau_basis.size();
  for (int a = 0; a < lt; ++a)
    for (int b = a; b < lt; ++b) {
      const double c = (a == b) ? 1.0 : 2.0;
      tau = tau + Polynomial::monomial(
                      tau_basis.mons[static_cast<std::size_t>(a)], 1.0) *
                      Polynomial::monomial(
                          tau_basis.mons[static_cast<std::size_t>(b)],
                          c * theta[k]);
      ++k;
    }
  return tau;
}

int multiplier_degree(const data::ConsistencyQuadratic& cq,
                      const model::BasisSpec& basis,
                      const SynthesisOptions& opts) {
  SynthesisOptions probe = opts;
  probe.deg_tau = -1;
  const StabilityFamily sf = assemble_family(cq, basis, probe, nullptr);
  return sf.layout.deg_tau;
}

StabilityFamily build_stability_family(const data::ConsistencyQuadratic& cq,
                                       const model::BasisSpec& basis,
                                       const SynthesisOptions& opts) {
  return assemble_family(cq, basis, opts, nullptr);
}

StabilityFamily build_performance_family(const data::ConsistencyQuadratic& cq,
                                         const model::BasisSpec& basis,
                                         const PerformanceIndex& perf,
                                         const SynthesisOptions& opts) {
  return assemble_family(cq, basis, opts, &perf);
}

Eigen::VectorXd Controller::feedback(const Eigen::VectorXd& x) const {
  return Lpoly.eval(x) * (Xcal * x);
}

const char* to_string(SynthStatus s) {
  switch (s) {
    case SynthStatus::kFeasible:
      return "feasible";
    case SynthStatus::kInfeasible:
      return "infeasible";
    case SynthStatus::kInaccurate:
      return "inaccurate";
  }
  return "unknown";
}

SynthResult synthesize_stabilizing(const data::ConsistencyQuadratic& cq,
                                   const model::BasisSpec& basis,
                                   const SynthesisOptions& opts) {
  return run_synthesis(cq, basis, opts, nullptr);
}

SynthResult synthesize_performance(const data::ConsistencyQuadratic& cq,
                                   const model::BasisSpec& basis,
                                   const PerformanceIndex& perf,
                                   const SynthesisOptions& opts) {
  return run_synthesis(cq, basis, opts, &perf);
}

sim::Controller recover_gain(const Controller& ctrl) {
  return [ctrl](const Eigen::VectorXd& x) { return ctrl.feedback(x); };
}

ClosedLoopReport certify_closed_loop(const Controller& ctrl,
                                     const model::PolyForm& truth,
                                     const CertifyOptions& copts) {
  const int n = ctrl.n;
  Eigen::VectorXd lo = copts.x0_lo.size() == n
                           ? copts.x0_lo
                           : Eigen::VectorXd::Constant(n, -1.0);
  Eigen::VectorXd hi = copts.x0_hi.size() == n
                           ? copts.x0_hi
                           : Eigen::VectorXd::Constant(n, 1.0);

  const sim::Controller u = recover_gain(ctrl);
  sim::ControlledDynamics f = [&truth](const Eigen::VectorXd& x,
                                       const Eigen::VectorXd& uin) {
    const double p = truth.p.eval(x);
    if (std::abs(p) <= 1e-9)
      throw std::domain_error("denominator vanished along trajectory");
    return ((truth.A_true * truth.basis.Z.eval(x) +
             truth.B_true * truth.basis.H.eval(x) * uin) /
            p)
        .eval();
  };

  ClosedLoopReport rep;
  rep.trials = copts.trials;
  SplitMix64 rng(copts.seed);
  for (int t = 0; t < copts.trials; ++t) {
    Eigen::VectorXd x0(n);
    for (int i = 0; i < n; ++i) x0[i] = rng.uniform(lo[i], hi[i]);
    const sim::Trajectory traj = sim::simulate(f, u, x0, copts.T, copts.dt);
    if (traj.completed()) ++rep.completed;

    bool monotone = true;
    double vprev = 0.0;
    for (int k = 0; k < traj.size(); ++k) {
      const double v = traj.states[static_cast<std::size_t>(k)].dot(
          ctrl.Xcal * traj.states[static_cast<std::size_t>(k)]);
      if (k > 0) {
        const double rel = (v - vprev) / std::max(vprev, 1e-300);
        rep.max_v_increase = std::max(rep.max_v_increase, rel);
        if (rel > copts.v_rel_tol) monotone = false;
      }
      vprev = v;
    }
    if (monotone && traj.completed()) ++rep.v_monotone;

    if (traj.completed()) {
      const Eigen::VectorXd xf = traj.states.back();
      rep.finals.push_back(xf);
      rep.max_final_norm = std::max(rep.max_final_norm, xf.norm());
      if (xf.norm() < copts.conv_tol) ++rep.converged;
    } else {
      rep.finals.push_back(traj.states.back());
      rep.max_final_norm = std::numeric_limits<double>::infinity();
    }
  }
  return rep;
}

void save_controller(const std::string& path, const Controller& ctrl) {
  nlohmann::json j;
  j["n"] = ctrl.n;
  j["m"] = ctrl.m;
  j["eps"] = ctrl.eps;
  j["tau0"] = ctrl.tau0;
  j["tau"] = poly::to_string(ctrl.tau_poly);
  std::vector<std::vector<double>> y(static_cast<std::size_t>(ctrl.n));
  for (int i = 0; i < ctrl.n; ++i) {
    y[static_cast<std::size_t>(i)].resize(static_cast<std::size_t>(ctrl.n));
    for (int c = 0; c < ctrl.n; ++c)
      y[static_cast<std::size_t>(i)][static_cast<std::size_t>(c)] =
          ctrl.Ycal(i, c);
  }
  j["Ycal"] = y;
  std::vector<std::vector<std::string>> l(static_cast<std::size_t>(ctrl.m));
  for (int r = 0; r < ctrl.m; ++r) {
    l[static_cast<std::size_t>(r)].resize(static_cast<std::size_t>(ctrl.n));
    for (int c = 0; c < ctrl.n; ++c)
      l[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)] =
          poly::to_string(ctrl.Lpoly(r, c));
  }
  j["L"] = l;
  j["certificate"] = {
      {"max_coeff_residual", ctrl.certificate.max_coeff_residual},
      {"lambda_min_eig", ctrl.certificate.lambda_min_eig}};
  std::ofstream out(path);
  if (!out) throw std::runtime_error("save_controller: cannot open " + path);
  out << j.dump(2) << "\n";
}

Controller load_controller(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("load_controller: cannot open " + path);
  nlohmann::json j;
  in >> j;
  Controller ctrl;
  ctrl.n = j.at("n").get<int>();
  ctrl.m = j.at("m").get<int>();
  ctrl.eps = j.at("eps").get<double>();
  ctrl.tau0 = j.at("tau0").get<double>();
  ctrl.tau_poly = poly::parse_poly(j.at("tau").get<std::string>(), ctrl.n);
  ctrl.Ycal.resize(ctrl.n, ctrl.n);
  const auto& y = j.at("Ycal");
  for (int i = 0; i < ctrl.n; ++i)
    for (int c = 0; c < ctrl.n; ++c)
      ctrl.Ycal(i, c) = y.at(static_cast<std::size_t>(i))
                            .at(static_cast<std::size_t>(c))
                            .get<double>();
  Eigen::LLT<Eigen::MatrixXd> llt(sym(ctrl.Ycal));
  if (llt.info() != Eigen::Success)
    throw std::runtime_error("load_controller: Ycal is not SPD");
  ctrl.Xcal =
      sym(llt.solve(Eigen::MatrixXd::Identity(ctrl.n, ctrl.n)));
  ctrl.Lpoly = PolyMatrix::zero(ctrl.m, ctrl.n, ctrl.n);
  const auto& l = j.at("L");
  for (int r = 0; r < ctrl.m; ++r)
    for (int c = 0; c < ctrl.n; ++c)
      ctrl.Lpoly(r, c) = poly::parse_poly(
          l.at(static_cast<std::size_t>(r))
              .at(static_cast<std::size_t>(c))
              .get<std::string>(),
          ctrl.n);
  const auto& cert = j.at("certificate");
  ctrl.certificate.max_coeff_residual =
      cert.at("max_coeff_residual").get<double>();
  ctrl.certificate.lambda_min_eig = cert.at("lambda_min_eig").get<double>();
  return ctrl;
}

}  // namespace ratsyn::synth
