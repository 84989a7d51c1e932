#pragma once

// Rational plant models and their denominator-cleared polynomial form.
//
// A plant xdot = f(x) + g(x)u with rational entries f_i = a_i/d_i and
// g_ij = b_ij/e_ij is rewritten, after multiplying through by the product
// p(x) of all denominators, as the linearly parametrized identity
//
//   p(x) xdot = A Z(x) + B H(x) u,      [P 1] [Z_p(x); 1] = p(x),
//
// with constant matrices A, B, P and monomial bases Z, Z_p, H.  The whole
// identity is normalized by p(0) so that p(0) = 1, which is what the
// [P 1][Z_p; 1] parametrization requires.  Downstream synthesis only ever
// sees the cleared form; the rational model is kept for simulation and for
// consistency oracles.

#include <Eigen/Dense>

#include <optional>
#include <string>
#include <vector>

#include "ratsyn/poly.hpp"

namespace ratsyn::model {

// One rational entry num/den.
struct RationalEntry {
  poly::Polynomial num;
  poly::Polynomial den;
};

// Plant with rational drift f and input matrix g, xdot = f(x) + g(x)u.
struct RationalSystem {
  int n = 0;  // states
  int m = 0;  // inputs
  std::vector<RationalEntry> drift;               // n entries a_i/d_i
  std::vector<std::vector<RationalEntry>> input;  // n x m entries b_ij/e_ij

  // Shape checks, nonzero denominators, denominators nonzero at the origin
  // and a_i(0) = 0 (the origin must be a steady state).  Throws
  // std::invalid_argument.
  void validate() const;
};

// Monomial bases of the cleared form.  Z and Z_p hold degree >= 1 monomials;
// H rows are monomial rows (one monomial in one input column each).  Z_K is
// the controller basis and defaults to Z.
struct BasisSpec {
  poly::MonomialVector Z;
  poly::MonomialVector Zp;
  poly::MonomialVector ZK;
  poly::PolyMatrix H;  // N_u x m

  int nz() const { return Z.size(); }
  int np() const { return Zp.size(); }
  int nu() const { return H.rows(); }
  int nk() const { return ZK.size(); }
};

// Cleared form p(x) xdot = A Z(x) + B H(x) u with p(0) = 1.
struct PolyForm {
  poly::Polynomial p;      // normalized denominator product
  Eigen::MatrixXd A_true;  // n x N_z
  Eigen::MatrixXd B_true;  // n x N_u
  Eigen::MatrixXd P_true;  // 1 x N_p, [P 1][Z_p; 1] = p
  BasisSpec basis;
};

// Multiplies the dynamics through by the denominator product, divides the
// result exactly by each entry's own denominator, normalizes by p(0) and
// extracts bases and coefficient matrices.  Z always includes the plain
// state monomials x1..xn so that Z(x) = 0 only at x = 0 and linear feedback
// stays expressible even when the drift needs no linear terms.
PolyForm clear_denominators(const RationalSystem& sys);

// True dynamics f(x) + g(x)u evaluated entrywise as num/den.  Throws
// std::domain_error when any denominator magnitude is <= 1e-9 at x.
Eigen::VectorXd eval_dynamics(const RationalSystem& sys,
                              const Eigen::VectorXd& x,
                              const Eigen::VectorXd& u);

// Axis-aligned box, one [lo, hi] interval per state.
struct Box {
  Eigen::VectorXd lo;
  Eigen::VectorXd hi;
};

struct DenominatorReport {
  // true only when provable from structure (constant p), false when the
  // sampled denominator product changes sign or touches zero, otherwise
  // unset (sampling cannot prove positivity).
  std::optional<bool> global_claim;
  double box_min = 0.0;       // min |p(x)| over the grid
  bool sign_change = false;   // p takes both signs on the grid
  Eigen::VectorXd argmin;     // grid point attaining box_min
};

// Dense grid sampling of the (unnormalized) denominator product over the
// box; an empirical check of the standing assumption p(x) != 0, not a proof.
DenominatorReport validate_denominators(const RationalSystem& sys,
                                        const Box& box,
                                        int points_per_axis = 50);

// Over-approximation: widens Z with extra monomials (deduplicated, reordered)
// and zero-pads/permutes A accordingly.  Z_K follows when it previously
// equalled Z.  The cleared identity is unchanged.
PolyForm augment_basis(const PolyForm& form,
                       const std::vector<poly::Monomial>& extra_z);

// Structured-text system files (JSON with polynomial strings):
//   { "n": 2, "m": 1,
//     "drift_num": ["-x1", ...], "drift_den": ["5 + x1", ...],
//     "input_num": [["1"], ...],  "input_den": [["1"], ...] }
// Denominator arrays may be omitted (all entries default to 1).  Unknown
// keys are rejected.
RationalSystem parse_system(const std::string& json_text);
std::string format_system(const RationalSystem& sys);
RationalSystem load_system(const std::string& path);
void save_system(const RationalSystem& sys, const std::string& path);

}  // namespace ratsyn::model
