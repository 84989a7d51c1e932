#pragma once

// SOS-to-SDP compilation.
//
// A symmetric polynomial matrix S(x) of size p and degree <= 2d is an SOS
// matrix iff S(x) = [z_d(x) (x) I_p]' Lambda [z_d(x) (x) I_p] for some
// Lambda >= 0.  compile_sos turns "affine family of such S is SOS for some
// parameter theta" into a conic feasibility problem by matching coefficients
// per (monomial, matrix entry).
//
// An exactness-preserving presolve drops Gram rows whose diagonal
// coefficient is structurally forced to zero (any certificate has zeros
// there), which shrinks Lambda without changing feasibility; extracted
// certificates are re-embedded into the full template.

#include <Eigen/Dense>

#include <string>
#include <utility>
#include <vector>

#include "ratsyn/poly.hpp"
#include "ratsyn/sdp.hpp"

namespace ratsyn::sosc {

struct GramTemplate {
  int nvars = 0;
  int block = 1;       // p
  int half_degree = 0; // d
  poly::MonomialVector basis;  // z_d, length l(n, d)

  int gram_dim() const { return basis.size() * block; }
  // Row index of (basis monomial m, block column i) in z_d (x) I_p.
  int row_index(int m, int i) const { return m * block + i; }

  // S(x) = [z_d (x) I_p]' Lambda [z_d (x) I_p] as a polynomial matrix.
  poly::PolyMatrix gram_poly(const Eigen::MatrixXd& lambda) const;
  // Same quadratic form evaluated at a point (numerically PSD whenever
  // Lambda is).
  Eigen::MatrixXd gram_eval(const Eigen::MatrixXd& lambda,
                            const Eigen::VectorXd& x) const;
};

// Template covering all symmetric polynomial matrices of size `block` and
// degree <= deg.  deg must be even (deg = 2d).
GramTemplate gram_parametrize(int nvars, int block, int deg);

// Scalar decision variable; nonneg adds a cone tag used by compile_sos.
struct ScalarVar {
  std::string name;
  bool nonneg = false;
};

// Ties a set of scalar variables together as a symmetric matrix variable
// M = shift * I + X with X >= 0.  vids lists the variable ids entry by
// entry in svec order (row-major upper triangle), so vids.size() must be
// dim*(dim+1)/2 and each id appears exactly once across the family.
struct PsdVarBlock {
  std::string name;
  int dim = 0;
  double shift = 0.0;
  std::vector<int> vids;
};

// S(x; theta) = base(x) + sum_k theta_k * gen_k(x), all symmetric.
struct AffinePolyFamily {
  int nvars = 0;
  int size = 0;
  poly::PolyMatrix base;
  std::vector<ScalarVar> vars;
  std::vector<PsdVarBlock> psd_blocks;
  std::vector<std::pair<int, poly::PolyMatrix>> gens;  // (var id, sensitivity)

  int num_vars() const { return static_cast<int>(vars.size()); }
  poly::PolyMatrix value(const Eigen::VectorXd& theta) const;
  int degree() const;
  // Shape/symmetry checks; throws std::invalid_argument.
  void validate() const;
};

struct CompileOptions {
  bool prune = true;  // forced-zero Gram row elimination (lossless)
};

struct CompiledSos {
  sdp::ConicProblem problem;
  GramTemplate tmpl;

  // Decision-variable layout bookkeeping (see compile_sos).
  std::vector<int> theta_kind;      // 0 free, 1 nonneg, 2 psd entry
  std::vector<int> theta_slot;      // index into problem x
  std::vector<double> theta_scale;  // svec de-scaling for psd entries
  std::vector<double> theta_shift;  // psd diagonal shift
  std::vector<int> alive_rows;      // kept Gram rows (full template indices)
  int lambda_offset = 0;            // svec(Lambda) start in problem x
  int lambda_dim = 0;               // pruned Gram dimension

  Eigen::VectorXd extract_theta(const Eigen::VectorXd& x) const;
  // Full-template-sized Lambda (pruned rows come back as zeros).
  Eigen::MatrixXd extract_lambda(const Eigen::VectorXd& x) const;
};

// Coefficient-matching compilation: find theta, Lambda >= 0 with
// family(theta) = Gram(Lambda).  Fails loudly when the family degree
// exceeds the template (never silently drops coefficients).
CompiledSos compile_sos(const AffinePolyFamily& family,
                        const GramTemplate& tmpl,
                        const CompileOptions& opts = {});

struct VerifyResult {
  double max_coeff_residual = 0.0;
  double lambda_min_eig = 0.0;
};

// Independent certificate check: max |coeff(S) - coeff(Gram(Lambda))| over
// all (monomial, entry) pairs plus the smallest eigenvalue of Lambda.
VerifyResult verify_certificate(const poly::PolyMatrix& s,
                                const Eigen::MatrixXd& lambda,
                                const GramTemplate& tmpl);

// Convenience: the family with no decision variables holding a single
// scalar polynomial (SOS membership test).
AffinePolyFamily scalar_family(const poly::Polynomial& p);

}  // namespace ratsyn::sosc
