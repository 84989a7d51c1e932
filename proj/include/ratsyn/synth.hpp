#pragma once

// Controller synthesis from the data-consistency quadratic.
//
// Assembles the robust closed-loop stability condition and its quadratic-
// performance extension as affine SOS families in the decision variables
// (Ycal, L(x), tau), compiles them with sosc, solves the resulting conic
// feasibility problem and recovers the state feedback u(x) = L(x) Ycal^-1 x.
//
// The S-procedure multiplier tau is a nonnegative polynomial
// tau(x) = z_t(x)' Lambda_tau z_t(x) with Lambda_tau >= 0; degree 0
// recovers a constant multiplier.  A constant multiplier is structurally
// infeasible whenever the family couples constant diagonal entries with
// polynomially growing off-diagonal entries (any Z monomial of degree >= 2
// does this: positive semidefiniteness of Q(x) for all x then forces the
// corresponding rows of Ycal and L to vanish, contradicting Ycal > 0), so
// the default degree comes from a structural degree-balance scan; see
// multiplier_degree.

#include <Eigen/Dense>

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "ratsyn/data.hpp"
#include "ratsyn/model.hpp"
#include "ratsyn/poly.hpp"
#include "ratsyn/sdp.hpp"
#include "ratsyn/sim.hpp"
#include "ratsyn/sosc.hpp"

namespace ratsyn::synth {

struct SynthesisOptions {
  double eps = 1e-7;  // decay margin; > 0 requests asymptotic stability
  // Degree of the multiplier polynomial tau(x); must be even.  -1 selects
  // the smallest even degree passing the structural balance scan; 0 is the
  // constant multiplier.
  int deg_tau = -1;
  // L(x) parametrization: -1 (default) uses the structured span
  // L = Theta * Y_K(x) with Theta in R^{m x N_K} (one variable per entry,
  // matching the dimension count 1 + n(n+1)/2 + m N_K at deg_tau = 0);
  // >= 0 uses a dense polynomial matrix with all monomials up to deg_L.
  int deg_L = -1;
  // Controller basis Z_K; empty means basis.Z.
  poly::MonomialVector Z_K;
  // Gram template half-degree; -1 means smallest covering the family.
  int gram_half_degree = -1;
  // Ycal >= mu I encodes strict positive definiteness in a closed cone.
  // The certificate family is homogeneous of degree one in
  // (Ycal, L, tau, Lambda) up to the constant -eps [I;q2][I;q2]' term,
  // which is itself a negated sum of squares, so any feasible certificate
  // scales up losslessly and mu is a pure normalization (no feasibility
  // lost).  It must sit far above the equality slack so certificates carry
  // content (tiny mu invites vacuous Ycal ~ mu I answers drowning in the
  // slack), yet small enough that the slack absorbs the margin deficits the
  // slack is there for; those deficits scale linearly with mu.
  double mu = 1e-2;
  // Bounded per-row slack on the coefficient-matching equalities, handled
  // natively by the interior-point solver.  The strict-margin condition is
  // epsilon-deep infeasible by construction for plants whose input matrix
  // vanishes at the origin (Example 1's second channel) or whose lifted
  // dynamics carry a conserved quadratic (sin/cos lifts), while
  // certificates with residual below the 1e-6 verification gate exist; the
  // slack makes those programs exactly feasible.  Macroscopically
  // infeasible data stays certified infeasible: its depth far exceeds the
  // slack, and the solver then produces a Farkas ray for the relaxed
  // program.  0 disables.
  double eq_slack = 3e-7;
  // Acceptance gate on the certified tuple: max absolute coefficient
  // residual of the assembled identity.  The interior-point solve meets
  // the equality rows to ~1e-9 relative, so the verified residual is
  // bounded by eq_slack plus solver noise, comfortably under the gate.
  double accept_residual = 1e-6;
  sdp::IpmOptions solver;
  sosc::CompileOptions compile;
  // On an unverifiable first attempt, retry once with the data blocks
  // rescaled to unit Frobenius norm (tau rescales accordingly).
  bool rescale_retry = true;
};

// Quadratic performance index on the channel w_p -> z_p with
// z_p = C Z(x) + D u + D_p w_p and disturbance input matrix B_p.
struct PerformanceIndex {
  Eigen::MatrixXd Qp;  // m_wp x m_wp
  Eigen::MatrixXd Sp;  // m_wp x p_z
  Eigen::MatrixXd Rp;  // p_z x p_z, SPD
  Eigen::MatrixXd Bp;  // n x m_wp
  Eigen::MatrixXd C;   // p_z x N_z
  Eigen::MatrixXd D;   // p_z x m
  Eigen::MatrixXd Dp;  // p_z x m_wp

  int mwp() const { return static_cast<int>(Qp.rows()); }
  int pz() const { return static_cast<int>(Rp.rows()); }
  // script-Q_p = Q_p + S_p D_p + D_p' S_p'.
  Eigen::MatrixXd Qp_script() const;
  // Shape and definiteness checks; throws std::invalid_argument.
  void validate(int n, int nz, int m) const;
};

// L2-gain bound gamma on w_p -> x: Q_p = -gamma^2 I, S_p = 0, R_p = I,
// B_p = I_n, z_p = x (C selects the state monomials from Z, D = Dp = 0).
PerformanceIndex l2_gain_index(double gamma, int n, int m,
                               const model::BasisSpec& basis);

// How the scalar decision vector theta maps into the family.
struct FamilyLayout {
  int n = 0;   // state dimension
  int m = 0;   // input dimension
  int nv = 0;  // N_z + N_u + n N_p
  int size = 0;
  int deg_tau = 0;
  poly::MonomialVector tau_basis;  // z_{deg_tau/2}
  int tau_vid0 = 0;                // svec(Lambda_tau), row-major upper tri
  int y_vid0 = 0;                  // svec(Ycal)
  int l_vid0 = 0;
  int num_l_vars = 0;
  bool structured_L = true;
  poly::PolyMatrix YK;       // N_K x n, Z_K(x) = YK(x) x
  poly::MonomialVector L_monos;  // dense mode entry monomials

  Eigen::MatrixXd Ycal_of(const Eigen::VectorXd& theta) const;
  poly::PolyMatrix L_of(const Eigen::VectorXd& theta) const;
  poly::Polynomial tau_of(const Eigen::VectorXd& theta) const;
};

struct StabilityFamily {
  sosc::AffinePolyFamily family;
  FamilyLayout layout;
};

// Smallest even multiplier degree (capped at 12) for which every
// off-diagonal entry degree of the assembled family is balanced by the
// geometric mean of its diagonal degrees; 0 whenever the constant
// multiplier already balances (e.g. linear Z with constant H).
int multiplier_degree(const data::ConsistencyQuadratic& cq,
                      const model::BasisSpec& basis,
                      const SynthesisOptions& opts = {});

// Eq. 8: Q(x) = -R' M R, M = blkdiag([[eps I, Ycal], [Ycal, 0]],
// tau(x) [[Qbar, Sbar], [Sbar', Rbar]]), right factor rows
// [I q2'; 0 q1'; 0 I; I 0] with q1 = [[Y(x); H(x)K(x)Y_K(x)]; 0],
// q2 = [0; I_n (x) Z_p(x)], after the substitution L(x) = K(x)Y_K(x)Ycal.
// The result is symmetric (n+N_v) x (n+N_v), affine in
// (Ycal, L coefficients, Lambda_tau); affinity holds by construction and
// is asserted on the assembled generators.
StabilityFamily build_stability_family(const data::ConsistencyQuadratic& cq,
                                       const model::BasisSpec& basis,
                                       const SynthesisOptions& opts = {});

// Eq. 9: embeds Q(x) as the leading block of the
// (n + N_v + m_wp + p_z)-size family with rows
// [-Bp' - Sp q3(x), -Bp' q2(x)', -scriptQp, *; q3(x), q3(x) q2(x)', Dp,
// Rp^-1], q3(x) = C Y(x) Ycal + D L(x).
StabilityFamily build_performance_family(const data::ConsistencyQuadratic& cq,
                                         const model::BasisSpec& basis,
                                         const PerformanceIndex& perf,
                                         const SynthesisOptions& opts = {});

struct Controller {
  int n = 0;
  int m = 0;
  Eigen::MatrixXd Ycal;      // SPD, min eigenvalue >= mu
  Eigen::MatrixXd Xcal;      // Ycal^-1, Lyapunov matrix of V(x) = x'Xcal x
  poly::PolyMatrix Lpoly;    // m x n
  poly::Polynomial tau_poly; // nonnegative multiplier
  double tau0 = 0.0;         // tau(0)
  double eps = 0.0;
  sosc::VerifyResult certificate;

  // u(x) = L(x) Ycal^-1 x; u(0) = 0.
  Eigen::VectorXd feedback(const Eigen::VectorXd& x) const;
};

enum class SynthStatus { kFeasible = 0, kInfeasible, kInaccurate };
const char* to_string(SynthStatus s);

struct AttemptReport {
  bool rescaled = false;
  double data_scale = 1.0;  // Frobenius norm divided out of the data blocks
  sdp::SolveReport solve;
  sosc::VerifyResult verify;  // certificate residuals (when not infeasible)
  double ycal_min_eig = 0.0;
};

// Typed outcome: kInfeasible carries a Farkas-certified rejection (data too
// poor or too noisy), kInaccurate means no verifiable certificate was found
// within the iteration budget.  Never throws for solver outcomes.
struct SynthResult {
  SynthStatus status = SynthStatus::kInaccurate;
  std::optional<Controller> controller;
  std::vector<AttemptReport> attempts;
  std::string message;

  bool ok() const { return status == SynthStatus::kFeasible; }
};

// Compiles and solves the stability family; a returned controller has a
// verified certificate (coefficient residual < 1e-6, Lambda PSD,
// Ycal >= mu I within tolerance).
SynthResult synthesize_stabilizing(const data::ConsistencyQuadratic& cq,
                                   const model::BasisSpec& basis,
                                   const SynthesisOptions& opts = {});

// Same pipeline for the quadratic-performance family.
SynthResult synthesize_performance(const data::ConsistencyQuadratic& cq,
                                   const model::BasisSpec& basis,
                                   const PerformanceIndex& perf,
                                   const SynthesisOptions& opts = {});

// Evaluable control law u(x) = L(x) Ycal^-1 x.  K(x) is never extracted:
// Eq. 10's final form is exactly L(x) Ycal^-1 x and the Z_K division is
// generally non-unique.
sim::Controller recover_gain(const Controller& ctrl);

struct CertifyOptions {
  int trials = 20;
  double T = 10.0;
  double dt = 1e-3;
  Eigen::VectorXd x0_lo;  // defaults to -1
  Eigen::VectorXd x0_hi;  // defaults to +1
  double conv_tol = 1e-3;           // final-state norm for convergence
  double v_rel_tol = 1e-6;          // relative per-step V increase allowed
  std::uint64_t seed = 1;
};

struct ClosedLoopReport {
  int trials = 0;
  int completed = 0;   // integration ran to the horizon
  int v_monotone = 0;  // V(x(t)) non-increasing within v_rel_tol per step
  int converged = 0;   // ||x(T)|| < conv_tol
  double max_v_increase = 0.0;  // worst observed relative V increase
  double max_final_norm = 0.0;
  std::vector<Eigen::VectorXd> finals;
};

// Simulates the closed loop on the true plant from random initial states
// and checks V(x) = x' Xcal x monotonicity and convergence (diagnostic).
ClosedLoopReport certify_closed_loop(const Controller& ctrl,
                                     const model::PolyForm& truth,
                                     const CertifyOptions& copts = {});

// JSON persistence: Ycal, L entries in textual polynomial syntax, tau
// polynomial, eps, certificate residuals.  Round-trip exact.
void save_controller(const std::string& path, const Controller& ctrl);
Controller load_controller(const std::string& path);

}  // namespace ratsyn::synth
