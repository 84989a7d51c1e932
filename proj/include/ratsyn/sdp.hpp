#pragma once

// Sparse conic linear programming over free, nonnegative and PSD variables:
//
//   minimize    c' x
//   subject to  G x = h,   x_cone in K = R+^l  x  PSD(p1) x ... x PSD(pk)
//
// PSD blocks are stored in scaled upper-triangular vectorization (svec):
// off-diagonal entries carry a factor sqrt(2) so the embedding is an
// isometry and the cone stays self-dual in vector coordinates.
//
// The solver runs ADMM on the homogeneous self-dual embedding (one sparse
// LDLT factorization of I + A'A per problem, eigenvalue-based cone
// projections per iteration, Ruiz equilibration up front).  Feasible
// reports are re-verified by independent residual evaluation on the
// original data; infeasibility is declared only with a Farkas certificate
// y (h'y = -1, G'y vanishing against the dual cone within tolerance).

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include <limits>
#include <string>
#include <vector>

namespace ratsyn::sdp {

// Variable layout: [free | nonneg | svec(psd_1) | ... | svec(psd_k)].
struct ConeLayout {
  int num_free = 0;
  int num_nonneg = 0;
  std::vector<int> psd_dims;

  int dim() const;
  int num_cone() const { return dim() - num_free; }
  // Offset of PSD block b in the full variable vector.
  int psd_offset(int b) const;
};

// Length of svec for a p x p symmetric matrix.
int svec_dim(int p);
// Scaled upper-triangular vectorization and its inverse.
Eigen::VectorXd svec(const Eigen::MatrixXd& m);
Eigen::MatrixXd smat(const Eigen::VectorXd& v);
// svec index of entry (i, j), i <= j, for dimension p.
int svec_index(int p, int i, int j);
// Coefficient such that entry (i,j) of the matrix equals coeff * svec value.
double svec_entry_scale(int i, int j);

// Nearest (Frobenius) PSD matrix by eigenvalue clipping.  Throws if the
// input is not symmetric within sym_tol (relative to its largest entry).
Eigen::MatrixXd psd_project(const Eigen::MatrixXd& m, double sym_tol = 1e-12);

enum class SolveStatus { kFeasible, kInfeasible, kInaccurate, kIterationLimit };
const char* to_string(SolveStatus s);

struct SolverOptions {
  int max_iter = 50000;
  double tol_feas = 1e-7;    // relative primal/dual residual and gap
  double tol_infeas = 1e-6;  // certificate residual (inf-norm)
  int check_interval = 25;
  double over_relax = 1.5;   // ADMM relaxation parameter in (0, 2)
  int ruiz_iters = 10;
  bool verbose = false;
};

struct SolveReport {
  SolveStatus status = SolveStatus::kIterationLimit;
  int iterations = 0;
  double solve_seconds = 0.0;
  double objective = std::numeric_limits<double>::quiet_NaN();
  // Residuals of the returned point, measured on the original (unscaled)
  // problem data; the primal point has exactly cone-feasible cone blocks.
  double primal_residual = std::numeric_limits<double>::infinity();
  double dual_residual = std::numeric_limits<double>::infinity();
  double gap = std::numeric_limits<double>::infinity();
  double cone_violation = 0.0;
  // Farkas certificate quality (only meaningful for kInfeasible).
  double infeas_cert_residual = std::numeric_limits<double>::infinity();
  std::string message;
};

struct Solution {
  SolveReport report;
  Eigen::VectorXd x;  // primal point (cone blocks projected feasible)
  Eigen::VectorXd y;  // equality multipliers; Farkas certificate when
                      // status == kInfeasible (normalized h'y = -1)
};

struct ConicProblem {
  ConeLayout cones;
  Eigen::SparseMatrix<double> G;  // m x cones.dim()
  Eigen::VectorXd h;              // length m
  Eigen::VectorXd c;              // length cones.dim(); empty => feasibility

  int num_constraints() const { return static_cast<int>(G.rows()); }
  bool is_feasibility() const { return c.size() == 0; }
  // Shape consistency; throws std::invalid_argument on violation.
  void validate() const;
};

Solution solve(const ConicProblem& prob, const SolverOptions& opts = {});

// Interior-point solve: primal-dual Mehrotra predictor-corrector with
// Nesterov-Todd scaling and a dense Schur complement over the equality
// rows.  Splitting methods converge at a rate set by the geometry between
// the affine set and the cone, which on ill-conditioned certificate
// problems stalls orders of magnitude above the residuals needed to
// separate feasible programs from shallowly infeasible ones; the
// interior-point iteration reaches ~1e-9 relative accuracy in a few dozen
// factorizations and produces a Farkas ray when the program is infeasible.
//
// eq_slack > 0 relaxes every equality row to |(G x - h)_i| <= eq_slack
// with a bounded range variable handled inside the iteration (diagonal
// Schur contribution; no extra rows).  Infeasibility is then certified
// against the relaxed program: y with  h'y - eq_slack*|y|_1 = 1  and
// G'y within tol_infeas of the polar cone.
//
// Intended for moderate row counts (dense m x m factorization per
// iteration) and a small free block (dense m x num_free reduction).
struct IpmOptions {
  int max_iter = 100;
  double eq_slack = 0.0;     // per-row equality slack bound (0 = exact)
  double tol_feas = 1e-9;    // relative primal residual
  double tol_dual = 1e-8;    // relative dual residual (optimization mode)
  double tol_gap = 1e-8;     // relative complementarity (optimization mode)
  double tol_infeas = 1e-7;  // Farkas certificate residual ratio
  double time_limit = 0.0;   // wall-clock budget in seconds (0 = none)
  bool verbose = false;
};

// Feasibility problems (empty c) return as soon as the primal residual
// meets tol_feas; the returned cone blocks are strictly interior.
Solution solve_ipm(const ConicProblem& prob, const IpmOptions& opts = {});

// Plain-text serialization (round-trip safe) for cross-checking against
// external tools.
std::string to_text(const ConicProblem& prob);
ConicProblem from_text(const std::string& text);

std::string report_to_json(const SolveReport& report);
void save_report_json(const std::string& path, const SolveReport& report);

}  // namespace ratsyn::sdp
