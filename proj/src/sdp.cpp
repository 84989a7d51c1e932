#include "ratsyn/sdp.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/SparseCholesky>

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "nlohmann/json.hpp"

namespace ratsyn::sdp {

namespace {

constexpr double kSqrt2 = 1.4142135623730950488;

void require(bool cond, const std::string& msg) {
  if (!cond) throw std::invalid_argument("sdp: " + msg);
}

// Hexfloat keeps the text format byte-exact under round trips.
std::string format_hex(double v) {
  char buf[48];
  auto res = std::to_chars(buf, buf + sizeof(buf), v, std::chars_format::hex);
  return std::string(buf, res.ptr);
}

double parse_hex(const std::string& s) {
  double v = 0.0;
  auto res =
      std::from_chars(s.data(), s.data() + s.size(), v, std::chars_format::hex);
  require(res.ec == std::errc(), "bad hexfloat: " + s);
  return v;
}

}  // namespace

// ---------------------------------------------------------------------------
// Cone layout and svec helpers

int ConeLayout::dim() const {
  int d = num_free + num_nonneg;
  for (int p : psd_dims) d += svec_dim(p);
  return d;
}

int ConeLayout::psd_offset(int b) const {
  int off = num_free + num_nonneg;
  for (int i = 0; i < b; ++i) off += svec_dim(psd_dims[static_cast<std::size_t>(i)]);
  return off;
}

int svec_dim(int p) { return p * (p + 1) / 2; }

int svec_index(int p, int i, int j) {
  require(0 <= i && i <= j && j < p, "svec index out of range");
  // Row-major upper triangle: row i starts after i rows of lengths p, p-1, ...
  return i * p - i * (i - 1) / 2 + (j - i);
}

double svec_entry_scale(int i, int j) { return i == j ? 1.0 : 1.0 / kSqrt2; }

Eigen::VectorXd svec(const Eigen::MatrixXd& m) {
  const int p = static_cast<int>(m.rows());
  require(m.cols() == p, "svec expects a square matrix");
  Eigen::VectorXd v(svec_dim(p));
  int k = 0;
  for (int i = 0; i < p; ++i) {
    v[k++] = m(i, i);
    for (int j = i + 1; j < p; ++j) v[k++] = kSqrt2 * m(i, j);
  }
  return v;
}

Eigen::MatrixXd smat(const Eigen::VectorXd& v) {
  // Invert p (p + 1) / 2 = len.
  const int len = static_cast<int>(v.size());
  const int p = static_cast<int>(std::llround((std::sqrt(8.0 * len + 1.0) - 1.0) / 2.0));
  require(svec_dim(p) == len, "svec length is not triangular");
  Eigen::MatrixXd m(p, p);
  int k = 0;
  for (int i = 0; i < p; ++i) {
    m(i, i) = v[k++];
    for (int j = i + 1; j < p; ++j) {
      m(i, j) = m(j, i) = v[k++] / kSqrt2;
    }
  }
  return m;
}

Eigen::MatrixXd psd_project(const Eigen::MatrixXd& m, double sym_tol) {
  require(m.rows() == m.cols(), "psd_project expects a square matrix");
  const double scale = std::max(1.0, m.cwiseAbs().maxCoeff());
  require((m - m.transpose()).cwiseAbs().maxCoeff() <= sym_tol * scale,
          "psd_project expects a symmetric matrix");
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(m);
  Eigen::VectorXd d = eig.eigenvalues().cwiseMax(0.0);
  Eigen::MatrixXd r =
      eig.eigenvectors() * d.asDiagonal() * eig.eigenvectors().transpose();
  return 0.5 * (r + r.transpose());
}

const char* to_string(SolveStatus s) {
  switch (s) {
    case SolveStatus::kFeasible: return "feasible";
    case SolveStatus::kInfeasible: return "infeasible";
    case SolveStatus::kInaccurate: return "inaccurate";
    case SolveStatus::kIterationLimit: return "iteration_limit";
  }
  return "unknown";
}

void ConicProblem::validate() const {
  require(cones.num_free >= 0 && cones.num_nonneg >= 0, "negative cone sizes");
  for (int p : cones.psd_dims) require(p >= 1, "empty PSD block");
  require(static_cast<int>(G.cols()) == cones.dim(),
          "G column count does not match cone layout");
  require(static_cast<int>(h.size()) == G.rows(), "h length mismatch");
  require(c.size() == 0 || static_cast<int>(c.size()) == cones.dim(),
          "c length mismatch");
}

// ---------------------------------------------------------------------------
// Homogeneous self-dual embedding ADMM

namespace {

// Projects the cone coordinates of a variable-layout vector onto K in place
// and returns the worst violation seen before projection (most negative
// eigenvalue / entry).
double project_layout(const ConeLayout& L, Eigen::VectorXd& v,
                      std::vector<Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>>& eigs,
                      std::vector<Eigen::MatrixXd>& work) {
  double worst = 0.0;
  int off = L.num_free;
  for (int i = 0; i < L.num_nonneg; ++i) {
    worst = std::min(worst, v[off + i]);
    v[off + i] = std::max(0.0, v[off + i]);
  }
  off += L.num_nonneg;
  for (std::size_t b = 0; b < L.psd_dims.size(); ++b) {
    const int p = L.psd_dims[b];
    const int sd = svec_dim(p);
    Eigen::MatrixXd& m = work[b];
    // Unpack svec into the preallocated matrix.
    int k = off;
    for (int i = 0; i < p; ++i) {
      m(i, i) = v[k++];
      for (int j = i + 1; j < p; ++j) {
        const double e = v[k++] / kSqrt2;
        m(i, j) = e;
        m(j, i) = e;
      }
    }
    eigs[b].compute(m);
    const Eigen::VectorXd& ev = eigs[b].eigenvalues();
    worst = std::min(worst, ev[0]);
    if (ev[0] >= 0.0) {
      off += sd;
      continue;
    }
    Eigen::VectorXd d = ev.cwiseMax(0.0);
    m = eigs[b].eigenvectors() * d.asDiagonal() *
        eigs[b].eigenvectors().transpose();
    k = off;
    for (int i = 0; i < p; ++i) {
      v[k++] = m(i, i);
      for (int j = i + 1; j < p; ++j) v[k++] = kSqrt2 * 0.5 * (m(i, j) + m(j, i));
    }
    off += sd;
  }
  return worst;
}

struct Scaling {
  Eigen::VectorXd row;  // D, length m
  Eigen::VectorXd col;  // E, length n
  double sigma_b = 1.0;
  double sigma_c = 1.0;
};

// Ruiz equilibration with uniform scaling inside each PSD row group of the
// embedded constraint matrix (so cone rows stay cone-consistent).
Scaling equilibrate(Eigen::SparseMatrix<double>& A, Eigen::VectorXd& b,
                    Eigen::VectorXd& c, const std::vector<int>& row_group,
                    int num_groups, int iters) {
  const int m = static_cast<int>(A.rows());
  const int n = static_cast<int>(A.cols());
  Scaling s;
  s.row = Eigen::VectorXd::Ones(m);
  s.col = Eigen::VectorXd::Ones(n);
  for (int it = 0; it < iters; ++it) {
    Eigen::VectorXd gmax = Eigen::VectorXd::Zero(num_groups);
    Eigen::VectorXd cmax = Eigen::VectorXd::Zero(n);
    for (int j = 0; j < A.outerSize(); ++j) {
      for (Eigen::SparseMatrix<double>::InnerIterator itr(A, j); itr; ++itr) {
        const double a = std::abs(itr.value());
        gmax[row_group[static_cast<std::size_t>(itr.row())]] =
            std::max(gmax[row_group[static_cast<std::size_t>(itr.row())]], a);
        cmax[j] = std::max(cmax[j], a);
      }
    }
    Eigen::VectorXd rs(m), cs(n);
    for (int i = 0; i < m; ++i) {
      const double g = gmax[row_group[static_cast<std::size_t>(i)]];
      rs[i] = g > 1e-12 ? 1.0 / std::sqrt(g) : 1.0;
    }
    for (int j = 0; j < n; ++j) {
      cs[j] = cmax[j] > 1e-12 ? 1.0 / std::sqrt(cmax[j]) : 1.0;
    }
    for (int j = 0; j < A.outerSize(); ++j) {
      for (Eigen::SparseMatrix<double>::InnerIterator itr(A, j); itr; ++itr) {
        itr.valueRef() *= rs[itr.row()] * cs[j];
      }
    }
    s.row.array() *= rs.array();
    s.col.array() *= cs.array();
  }
  b.array() *= s.row.array();
  c.array() *= s.col.array();
  const double nb = b.norm();
  if (nb > 1e-12) {
    s.sigma_b = 1.0 / nb;
    b *= s.sigma_b;
  }
  const double nc = c.norm();
  if (nc > 1e-12) {
    s.sigma_c = 1.0 / nc;
    c *= s.sigma_c;
  }
  return s;
}

struct Candidate {
  Eigen::VectorXd x;  // original coordinates, cone blocks projected
  Eigen::VectorXd y;  // equality multipliers, original coordinates
  double primal = std::numeric_limits<double>::infinity();
  double dual = std::numeric_limits<double>::infinity();
  double gap = std::numeric_limits<double>::infinity();
  double score = std::numeric_limits<double>::infinity();
  double objective = std::numeric_limits<double>::quiet_NaN();
  double cone_violation = 0.0;
};

}  // namespace

Solution solve(const ConicProblem& prob, const SolverOptions& opts) {
  const auto t0 = std::chrono::steady_clock::now();
  prob.validate();

  const ConeLayout& L = prob.cones;
  const int n = L.dim();
  const int m_eq = prob.num_constraints();
  const int n_cone = L.num_cone();
  const int m = m_eq + n_cone;

  const bool feas_only = prob.is_feasibility();
  Eigen::VectorXd c_orig =
      feas_only ? Eigen::VectorXd::Zero(n) : Eigen::VectorXd(prob.c);

  // Embedded data: A = [G; -E], b = [h; 0] with E selecting cone coords.
  Eigen::SparseMatrix<double> A(m, n);
  {
    std::vector<Eigen::Triplet<double>> trips;
    trips.reserve(static_cast<std::size_t>(prob.G.nonZeros()) +
                  static_cast<std::size_t>(n_cone));
    for (int j = 0; j < prob.G.outerSize(); ++j) {
      for (Eigen::SparseMatrix<double>::InnerIterator it(prob.G, j); it; ++it) {
        trips.emplace_back(static_cast<int>(it.row()), j, it.value());
      }
    }
    for (int k = 0; k < n_cone; ++k) {
      trips.emplace_back(m_eq + k, L.num_free + k, -1.0);
    }
    A.setFromTriplets(trips.begin(), trips.end());
  }
  Eigen::VectorXd b = Eigen::VectorXd::Zero(m);
  b.head(m_eq) = prob.h;
  Eigen::VectorXd c = c_orig;

  // Row groups for equilibration: each equality / nonneg row alone, each PSD
  // block as one group.
  std::vector<int> row_group(static_cast<std::size_t>(m));
  int ng = 0;
  for (int i = 0; i < m_eq + L.num_nonneg; ++i) row_group[static_cast<std::size_t>(i)] = ng++;
  {
    int r = m_eq + L.num_nonneg;
    for (int p : L.psd_dims) {
      for (int k = 0; k < svec_dim(p); ++k) row_group[static_cast<std::size_t>(r++)] = ng;
      ++ng;
    }
  }
  Scaling sc = equilibrate(A, b, c, row_group, ng, opts.ruiz_iters);

  // Cone structure on the y-part of the embedding (dual cone per row block):
  // equality rows are free, the rest projects like the primal cone.
  ConeLayout ydual;
  ydual.num_free = m_eq;
  ydual.num_nonneg = L.num_nonneg;
  ydual.psd_dims = L.psd_dims;

  std::vector<Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>> eig_work;
  std::vector<Eigen::MatrixXd> mat_work;
  for (int p : L.psd_dims) {
    eig_work.emplace_back();
    mat_work.emplace_back(Eigen::MatrixXd(p, p));
  }

  // Pre-factor K = I + A'A.
  Eigen::SparseMatrix<double> K(n, n);
  {
    Eigen::SparseMatrix<double> AtA = Eigen::SparseMatrix<double>(A.transpose()) * A;
    Eigen::SparseMatrix<double> I(n, n);
    I.setIdentity();
    K = AtA + I;
  }
  Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> ldlt;
  ldlt.compute(K);
  require(ldlt.info() == Eigen::Success, "LDLT factorization failed");

  auto msolve = [&](const Eigen::VectorXd& w1, const Eigen::VectorXd& w2,
                    Eigen::VectorXd& z1, Eigen::VectorXd& z2) {
    z1 = ldlt.solve(w1 - A.transpose() * w2);
    z2 = w2 + A * z1;
  };

  Eigen::VectorXd gp(n), gq(m);
  msolve(c, b, gp, gq);
  const double gden = 1.0 + c.dot(gp) + b.dot(gq);

  // HSDE variables u = (x, y, tau), v = (0, s, kappa).
  Eigen::VectorXd ux = Eigen::VectorXd::Zero(n);
  Eigen::VectorXd uy = Eigen::VectorXd::Zero(m);
  double utau = 1.0;
  Eigen::VectorXd vy = Eigen::VectorXd::Zero(m);
  double vkappa = 1.0;

  Eigen::VectorXd w1(n), w2(m), r1(n), r2(m), tx(n), ty(m);

  const double alpha = opts.over_relax;
  Candidate best;
  SolveReport report;
  report.status = SolveStatus::kIterationLimit;

  const double hnorm = prob.h.norm();
  const double cnorm = c_orig.norm();

  // Evaluates a candidate on the original data; cone blocks of x are
  // projected feasible first so reported points satisfy K exactly.
  auto evaluate = [&](Candidate& cand) {
    cand.cone_violation = project_layout(L, cand.x, eig_work, mat_work);
    Eigen::VectorXd rp = prob.G * cand.x - prob.h;
    cand.primal = rp.norm() / (1.0 + hnorm);
    if (feas_only) {
      cand.dual = 0.0;
      cand.gap = 0.0;
      cand.objective = 0.0;
    } else {
      // Dual residual: G'y + c matched against cone multipliers.  The cone
      // multiplier is implied: for optimality the cone part of (G'y + c)
      // must lie in K* and complement x; we measure distance to K*.
      Eigen::VectorXd dres = prob.G.transpose() * cand.y + c_orig;
      Eigen::VectorXd conepart = dres.tail(n_cone);
      Eigen::VectorXd proj = conepart;
      ConeLayout conly;
      conly.num_nonneg = L.num_nonneg;
      conly.psd_dims = L.psd_dims;
      project_layout(conly, proj, eig_work, mat_work);
      dres.tail(n_cone) = conepart - proj;
      cand.dual = dres.norm() / (1.0 + cnorm);
      cand.objective = c_orig.dot(cand.x);
      const double dobj = -prob.h.dot(cand.y);
      cand.gap = std::abs(cand.objective - dobj) /
                 (1.0 + std::abs(cand.objective) + std::abs(dobj));
    }
    cand.score = std::max({cand.primal, cand.dual, cand.gap});
  };

  // Farkas certificate test for primal infeasibility.
  auto try_infeasibility = [&](const Eigen::VectorXd& uy_now, Candidate& cert,
                               double& cert_res) -> bool {
    Eigen::VectorXd yfull = sc.row.asDiagonal() * uy_now;  // unscale direction
    Eigen::VectorXd yeq = yfull.head(m_eq);
    const double nu = -prob.h.dot(yeq);
    if (nu <= 1e-12 * (1.0 + yeq.norm() * hnorm)) return false;
    // Dual-cone distance of the raw direction, judged against nu: after
    // normalizing h'y = -1 the residual must be small in absolute terms,
    // never relative to ||y|| (a noise direction with tiny nu would blow
    // up under normalization and pass a ||y||-relative test).
    Eigen::VectorXd gty = prob.G.transpose() * yeq;
    Eigen::VectorXd res = gty;
    Eigen::VectorXd conepart = gty.tail(n_cone);
    Eigen::VectorXd proj = conepart;
    ConeLayout conly;
    conly.num_nonneg = L.num_nonneg;
    conly.psd_dims = L.psd_dims;
    project_layout(conly, proj, eig_work, mat_work);
    res.tail(n_cone) = conepart - proj;
    cert_res = res.cwiseAbs().maxCoeff() * (1.0 + hnorm) / nu;
    if (cert_res <= opts.tol_infeas) {
      cert.y = yeq / nu;
      return true;
    }
    return false;
  };

  // Tiny-instance consistency pre-check: an inconsistent equality system is
  // infeasible regardless of the cones and admits a least-squares Farkas
  // certificate.
  if (m_eq <= 400 && n <= 400 && m_eq > 0) {
    Eigen::MatrixXd Gd(prob.G);
    // Minimum-norm y with h'y = -1 within the left null space of G.
    Eigen::MatrixXd GGt = Gd * Gd.transpose();
    Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> codg(GGt);
    Eigen::VectorXd hp = codg.solve(prob.h);
    Eigen::VectorXd resid = prob.h - GGt * hp;  // h component off range(G)
    const double rn2 = resid.squaredNorm();
    if (rn2 > 1e-18 * (1.0 + prob.h.squaredNorm())) {
      Eigen::VectorXd ycand = -resid / rn2;  // h'ycand = -1 + O(eps)
      const double hy = prob.h.dot(ycand);
      if (std::abs(hy + 1.0) < 1e-6) {
        Eigen::VectorXd gty = Gd.transpose() * ycand;
        const double cert_res = gty.cwiseAbs().maxCoeff() * (1.0 + hnorm);
        if (cert_res <= opts.tol_infeas) {
          report.status = SolveStatus::kInfeasible;
          report.infeas_cert_residual = cert_res;
          report.message = "equality system inconsistent";
          report.solve_seconds =
              std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
                  .count();
          Solution sol;
          sol.report = report;
          sol.x = Eigen::VectorXd::Zero(n);
          sol.y = ycand;
          return sol;
        }
      }
    }
  }

  int iter = 0;
  for (iter = 1; iter <= opts.max_iter; ++iter) {
    // Linear step: (I + Q) utilde = u + v.
    w1 = ux;
    w2 = uy + vy;
    const double w3 = utau + vkappa;
    msolve(w1, w2, r1, r2);
    const double zeta = (w3 + c.dot(r1) + b.dot(r2)) / gden;
    tx = r1 - zeta * gp;
    ty = r2 - zeta * gq;
    const double ttau = zeta;

    // Over-relaxation, cone projection, dual update.
    Eigen::VectorXd px = alpha * tx + (1.0 - alpha) * ux;
    Eigen::VectorXd py = alpha * ty + (1.0 - alpha) * uy - vy;
    double ptau = alpha * ttau + (1.0 - alpha) * utau - vkappa;

    ux = px;  // x block unconstrained
    uy = py;
    project_layout(ydual, uy, eig_work, mat_work);
    utau = std::max(0.0, ptau);

    // v = u - w is the projection residual (Moreau decomposition).
    vy = uy - py;
    vkappa = utau - ptau;

    if (iter % opts.check_interval != 0 && iter != opts.max_iter) continue;

    if (opts.verbose && (iter % (opts.check_interval * 40) == 0 ||
                         iter == opts.max_iter)) {
      std::printf(
          "[sdp] iter %7d  utau=%.3e  vkappa=%.3e  |ux|=%.3e  |uy|=%.3e  "
          "best=%.3e\n",
          iter, utau, vkappa, ux.norm(), uy.norm(), best.score);
      std::fflush(stdout);
    }

    // Candidate extraction.
    if (utau > 1e-9) {
      Candidate cand;
      cand.x = (sc.col.asDiagonal() * (ux / utau)) / sc.sigma_b;
      cand.y = (sc.row.asDiagonal() * (uy / utau)).head(m_eq) / sc.sigma_c;
      evaluate(cand);
      if (cand.score < best.score) best = cand;
      if (cand.primal <= opts.tol_feas &&
          (feas_only || (cand.dual <= opts.tol_feas && cand.gap <= opts.tol_feas))) {
        report.status = SolveStatus::kFeasible;
        best = cand;
        break;
      }
    }
    // Infeasibility certificate.
    {
      Candidate cert;
      double cert_res = std::numeric_limits<double>::infinity();
      if (try_infeasibility(uy, cert, cert_res)) {
        report.status = SolveStatus::kInfeasible;
        report.infeas_cert_residual = cert_res;
        report.solve_seconds =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
                .count();
        report.iterations = iter;
        report.message = "Farkas certificate found";
        Solution sol;
        sol.report = report;
        sol.x = Eigen::VectorXd::Zero(n);
        sol.y = cert.y;
        return sol;
      }
    }
  }

  report.iterations = std::min(iter, opts.max_iter);
  report.solve_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  if (best.x.size() == 0) {
    best.x = Eigen::VectorXd::Zero(n);
    best.y = Eigen::VectorXd::Zero(m_eq);
  }
  report.primal_residual = best.primal;
  report.dual_residual = best.dual;
  report.gap = best.gap;
  report.objective = best.objective;
  report.cone_violation = 0.0;  // returned cone blocks are projected feasible

  if (report.status != SolveStatus::kFeasible) {
    const double loose = 100.0 * opts.tol_feas;
    if (best.score <= loose) {
      report.status = SolveStatus::kInaccurate;
      report.message = "stopped at iteration limit near feasibility";
    } else {
      report.status = SolveStatus::kIterationLimit;
      report.message = "no conclusion within iteration budget";
    }
  } else {
    report.message = "converged";
  }

  Solution sol;
  sol.report = report;
  sol.x = best.x;
  sol.y = best.y;
  return sol;
}

// ---------------------------------------------------------------------------
// Interior point

namespace {

// One equality row's action on a PSD block, as sparse symmetric-matrix
// entries: <M_i, X> = sum over entries of  v * X(a,b) * (a == b ? 1 : 2).
struct PsdRowEntry {
  int a = 0;
  int b = 0;  // a <= b
  double v = 0.0;
};

struct PsdBlockMap {
  int dim = 0;
  int col0 = 0;  // first svec column of the block
  std::vector<std::vector<PsdRowEntry>> rows;
  std::vector<int> active;  // rows with at least one entry
};

// Per-block iterate and Nesterov-Todd scaling state.
struct PsdBlockState {
  Eigen::MatrixXd X, Z, C;
  Eigen::MatrixXd R, Rinv, W;  // W = R R', R' Z R = R^-1 X R^-T = diag(lam)
  Eigen::VectorXd lam;
  Eigen::MatrixXd Rd;   // dual residual  C - smat((G'y)_k) - Z
  Eigen::MatrixXd V;    // elimination constant of the current direction
  Eigen::MatrixXd dX, dZ, dXa, dZa;
  Eigen::LLT<Eigen::MatrixXd> lltX, lltZ;
};

double vec_step(const Eigen::VectorXd& v, const Eigen::VectorXd& dv) {
  double a = std::numeric_limits<double>::infinity();
  for (int i = 0; i < v.size(); ++i)
    if (dv[i] < 0.0) a = std::min(a, -v[i] / dv[i]);
  return a;
}

// Largest a with X + a dX >= 0, given the Cholesky factor of X.
double psd_step(const Eigen::LLT<Eigen::MatrixXd>& lltX,
                const Eigen::MatrixXd& dX) {
  Eigen::MatrixXd tmp = lltX.matrixL().solve(dX);
  Eigen::MatrixXd b = lltX.matrixL().solve(tmp.transpose());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(
      0.5 * (b + b.transpose()), Eigen::EigenvaluesOnly);
  const double lo = eig.eigenvalues().minCoeff();
  return lo < 0.0 ? -1.0 / lo : std::numeric_limits<double>::infinity();
}

// Cholesky with an eigenvalue-floor rebuild fallback for iterates driven
// numerically to the cone boundary.
void safe_llt(Eigen::MatrixXd& m, Eigen::LLT<Eigen::MatrixXd>& llt) {
  llt.compute(m);
  if (llt.info() == Eigen::Success) return;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(m);
  const double floor =
      std::max(1e-14 * std::max(eig.eigenvalues().maxCoeff(), 0.0), 1e-300);
  Eigen::VectorXd d = eig.eigenvalues().cwiseMax(floor);
  m = eig.eigenvectors() * d.asDiagonal() * eig.eigenvectors().transpose();
  m = 0.5 * (m + m.transpose()).eval();
  llt.compute(m);
  if (llt.info() != Eigen::Success)
    throw std::runtime_error("sdp: interior iterate lost positive definiteness");
}

}  // namespace

Solution solve_ipm(const ConicProblem& prob, const IpmOptions& opts) {
  prob.validate();
  const auto t_start = std::chrono::steady_clock::now();
  const ConeLayout& L = prob.cones;
  const int m = prob.num_constraints();
  const int nf = L.num_free;
  const int nn = L.num_nonneg;
  const int nb = static_cast<int>(L.psd_dims.size());
  const double rho = opts.eq_slack;
  const bool box = rho > 0.0;
  const bool feas_only = prob.is_feasibility();
  require(m > 0, "solve_ipm expects at least one equality row");
  require(rho >= 0.0, "eq_slack must be nonnegative");
  require(nn > 0 || !L.psd_dims.empty() || box,
          "solve_ipm needs a nonneg, PSD, or slack block");

  const int dim = L.dim();

  // Ruiz equilibration: alternately scale rows and columns of G toward unit
  // infinity norms. Columns belonging to a PSD block must scale as a
  // diagonal congruence X -> D X D to preserve semidefiniteness, so within a
  // block the per-index factors d_a are fitted to the column maxima (the
  // svec column (a,b) scales by d_a*d_b). The per-row slack bound scales
  // with its row, so the feasible set is unchanged, and all exit tests and
  // reported residuals are measured in the original coordinates.
  Eigen::VectorXd rowsc = Eigen::VectorXd::Ones(m);
  Eigen::VectorXd colsc = Eigen::VectorXd::Ones(dim);
  std::vector<Eigen::VectorXd> bdiag(static_cast<std::size_t>(nb));
  for (int k = 0; k < nb; ++k)
    bdiag[static_cast<std::size_t>(k)] = Eigen::VectorXd::Ones(
        L.psd_dims[static_cast<std::size_t>(k)]);
  {
    Eigen::VectorXd rmax(m), cmax(dim);
    for (int round = 0; round < 10; ++round) {
      rmax.setZero();
      for (int j = 0; j < prob.G.outerSize(); ++j)
        for (Eigen::SparseMatrix<double>::InnerIterator it(prob.G, j); it;
             ++it)
          rmax[it.row()] = std::max(
              rmax[it.row()], std::abs(it.value()) * rowsc[it.row()] * colsc[j]);
      double spread = 0.0;
      for (int i = 0; i < m; ++i) {
        const double v = std::max(rmax[i], 1e-12);
        spread = std::max(spread, std::abs(std::log2(v)));
        rowsc[i] = std::clamp(rowsc[i] / std::sqrt(v), 1e-8, 1e8);
      }
      cmax.setZero();
      for (int j = 0; j < prob.G.outerSize(); ++j)
        for (Eigen::SparseMatrix<double>::InnerIterator it(prob.G, j); it;
             ++it)
          cmax[j] = std::max(cmax[j],
                             std::abs(it.value()) * rowsc[it.row()] * colsc[j]);
      for (int j = 0; j < nf + nn; ++j) {
        const double v = std::max(cmax[j], 1e-12);
        spread = std::max(spread, std::abs(std::log2(v)));
        colsc[j] = std::clamp(colsc[j] / std::sqrt(v), 1e-8, 1e8);
      }
      for (int k = 0; k < nb; ++k) {
        Eigen::VectorXd& d = bdiag[static_cast<std::size_t>(k)];
        const int p = static_cast<int>(d.size());
        const int off = L.psd_offset(k);
        Eigen::VectorXd im = Eigen::VectorXd::Zero(p);
        for (int a = 0; a < p; ++a)
          for (int b = a; b < p; ++b) {
            const double v = cmax[off + svec_index(p, a, b)];
            im[a] = std::max(im[a], v);
            im[b] = std::max(im[b], v);
          }
        for (int a = 0; a < p; ++a) {
          const double v = std::max(im[a], 1e-12);
          spread = std::max(spread, std::abs(std::log2(v)));
          d[a] = std::clamp(d[a] * std::pow(v, -0.25), 1e-8, 1e8);
        }
        for (int a = 0; a < p; ++a)
          for (int b = a; b < p; ++b)
            colsc[off + svec_index(p, a, b)] = d[a] * d[b];
      }
      if (spread < 1.0) break;  // all row/col maxima within [1/2, 2]
    }
  }
  Eigen::SparseMatrix<double> Gs = prob.G;
  for (int j = 0; j < Gs.outerSize(); ++j)
    for (Eigen::SparseMatrix<double>::InnerIterator it(Gs, j); it; ++it)
      it.valueRef() *= rowsc[it.row()] * colsc[j];
  const Eigen::VectorXd hs = rowsc.cwiseProduct(prob.h);
  Eigen::VectorXd cs = Eigen::VectorXd::Zero(dim);
  if (!feas_only) cs = colsc.cwiseProduct(prob.c);
  Eigen::VectorXd rhov;
  if (box) rhov = rho * rowsc;

  const Eigen::SparseMatrix<double> GT = Gs.transpose();

  // Objective split.
  Eigen::VectorXd cf = Eigen::VectorXd::Zero(nf);
  Eigen::VectorXd cn = Eigen::VectorXd::Zero(nn);
  std::vector<PsdBlockState> st(static_cast<std::size_t>(nb));
  for (int k = 0; k < nb; ++k) {
    const int p = L.psd_dims[static_cast<std::size_t>(k)];
    st[static_cast<std::size_t>(k)].C = Eigen::MatrixXd::Zero(p, p);
  }
  if (!feas_only) {
    cf = prob.c.head(nf);
    cn = prob.c.segment(nf, nn);
    for (int k = 0; k < nb; ++k)
      st[static_cast<std::size_t>(k)].C = smat(prob.c.segment(
          L.psd_offset(k), svec_dim(L.psd_dims[static_cast<std::size_t>(k)])));
  }

  // Column structure: dense free block, per-row PSD entry lists.
  Eigen::MatrixXd Gf = Eigen::MatrixXd::Zero(m, nf);
  for (int j = 0; j < nf; ++j)
    for (Eigen::SparseMatrix<double>::InnerIterator it(Gs, j); it; ++it)
      Gf(it.row(), j) = it.value();

  std::vector<PsdBlockMap> maps(static_cast<std::size_t>(nb));
  for (int k = 0; k < nb; ++k) {
    PsdBlockMap& bm = maps[static_cast<std::size_t>(k)];
    bm.dim = L.psd_dims[static_cast<std::size_t>(k)];
    bm.col0 = L.psd_offset(k);
    bm.rows.assign(static_cast<std::size_t>(m), {});
    std::vector<std::pair<int, int>> slot(
        static_cast<std::size_t>(svec_dim(bm.dim)));
    for (int a = 0, idx = 0; a < bm.dim; ++a)
      for (int b = a; b < bm.dim; ++b)
        slot[static_cast<std::size_t>(idx++)] = {a, b};
    for (int cc = 0; cc < svec_dim(bm.dim); ++cc) {
      const auto [a, b] = slot[static_cast<std::size_t>(cc)];
      const double sc = svec_entry_scale(a, b);
      for (Eigen::SparseMatrix<double>::InnerIterator it(Gs, bm.col0 + cc);
           it; ++it)
        bm.rows[static_cast<std::size_t>(it.row())].push_back(
            {a, b, it.value() * sc});
    }
    for (int i = 0; i < m; ++i)
      if (!bm.rows[static_cast<std::size_t>(i)].empty()) bm.active.push_back(i);
  }

  // Iterates: strictly interior cone blocks, scaled box variable
  // e = rho * et with et in [-1, 1] (f = 1 - et, g = 1 + et).
  Eigen::VectorXd xf = Eigen::VectorXd::Zero(nf);
  Eigen::VectorXd xn = Eigen::VectorXd::Ones(nn);
  Eigen::VectorXd zn = Eigen::VectorXd::Ones(nn);
  Eigen::VectorXd y = Eigen::VectorXd::Zero(m);
  for (int k = 0; k < nb; ++k) {
    const int p = maps[static_cast<std::size_t>(k)].dim;
    st[static_cast<std::size_t>(k)].X = Eigen::MatrixXd::Identity(p, p);
    st[static_cast<std::size_t>(k)].Z = Eigen::MatrixXd::Identity(p, p);
  }
  Eigen::VectorXd et, fv, gv, zf, zg;
  if (box) {
    et = Eigen::VectorXd::Zero(m);
    fv = Eigen::VectorXd::Ones(m);
    gv = Eigen::VectorXd::Ones(m);
    zf = Eigen::VectorXd::Ones(m);
    zg = Eigen::VectorXd::Ones(m);
  }

  const double hnorm = prob.h.lpNorm<Eigen::Infinity>();
  const double cnorm = feas_only ? 0.0 : prob.c.lpNorm<Eigen::Infinity>();
  double nu = nn + (box ? 2.0 * m : 0.0);
  for (int k = 0; k < nb; ++k) nu += maps[static_cast<std::size_t>(k)].dim;

  // Assembled primal vector (cone coordinates).
  const int dim = L.dim();
  Eigen::VectorXd xfull(dim);
  const auto assemble = [&]() {
    xfull.head(nf) = xf;
    xfull.segment(nf, nn) = xn;
    for (int k = 0; k < nb; ++k)
      xfull.segment(L.psd_offset(k),
                    svec_dim(maps[static_cast<std::size_t>(k)].dim)) =
          svec(st[static_cast<std::size_t>(k)].X);
  };

  Solution sol;
  SolveReport& rep = sol.report;
  rep.status = SolveStatus::kIterationLimit;

  // Iteration state.
  Eigen::MatrixXd Schur(m, m);
  Eigen::MatrixXd T;  // S^-1 Gf
  Eigen::MatrixXd Kf;
  Eigen::LLT<Eigen::MatrixXd> lltS;
  Eigen::LLT<Eigen::MatrixXd> lltK;
  Eigen::VectorXd Dn, De;
  Eigen::VectorXd rp(m), rdf(nf), rdn(nn), res_e;
  Eigen::VectorXd vn(nn), dxf(nf), dy(m), dxn(nn), dzn(nn);
  Eigen::VectorXd det_, dzf, dzg, dxn_a, dzn_a, det_a, dzf_a, dzg_a, dxf_a,
      dy_a;
  if (box) {
    res_e.resize(m);
    det_.resize(m);
    dzf.resize(m);
    dzg.resize(m);
  }
  double mu = 0.0;
  int stall = 0;
  double last_ap = 0.0, last_ad = 0.0, last_sigma = 0.0;

  // Solves the Newton system for given complementarity right-hand sides:
  // vectors rc satisfy  z . dv + v . dz = rc  per nonneg/box pair, and RC is
  // the NT-scaled PSD target with the (lam_i + lam_j)/2 division applied.
  const auto solve_dir = [&](const Eigen::VectorXd& rc_n,
                             const Eigen::VectorXd& rcf,
                             const Eigen::VectorXd& rcg) {
    Eigen::VectorXd r1 = rp;
    if (nn > 0) {
      vn = (rc_n - xn.cwiseProduct(rdn)).cwiseQuotient(zn);
      r1 -= Gs.middleCols(nf, nn) * vn;
    }
    for (int k = 0; k < nb; ++k) {
      PsdBlockState& s = st[static_cast<std::size_t>(k)];
      const PsdBlockMap& bm = maps[static_cast<std::size_t>(k)];
      // V = R RC R' - W Rd W  (RC prepared by the caller in s.V as the
      // scaled complementarity matrix).
      s.V = s.R * s.V * s.R.transpose() - s.W * s.Rd * s.W;
      s.V = 0.5 * (s.V + s.V.transpose()).eval();
      r1 -= Gs.middleCols(bm.col0, svec_dim(bm.dim)) * svec(s.V);
    }
    Eigen::VectorXd w_e;
    if (box) {
      w_e = res_e + rcf.cwiseQuotient(fv) - rcg.cwiseQuotient(gv);
      r1 += rhov.cwiseProduct(De.cwiseProduct(w_e));
    }
    // Two-step elimination for (dy, dxf), then iterative refinement against
    // the unregularized Schur system: cancellation and the regularization
    // shift otherwise degrade the directions once mu is small, which shows
    // up as a stalling or regressing primal residual.
    const auto solve_aug = [&](const Eigen::VectorXd& b1,
                               const Eigen::VectorXd& b2, Eigen::VectorXd& oy,
                               Eigen::VectorXd& oxf) {
      if (nf > 0) {
        oxf = lltK.solve(T.transpose() * b1 - b2);
        oy = lltS.solve(b1 - Gf * oxf);
      } else {
        oxf.resize(0);
        oy = lltS.solve(b1);
      }
    };
    solve_aug(r1, rdf, dy, dxf);
    const double r1n = 1.0 + r1.lpNorm<Eigen::Infinity>();
    for (int pass = 0; pass < 3; ++pass) {
      Eigen::VectorXd e1 = r1 - Schur * dy;
      if (nf > 0) e1 -= Gf * dxf;
      double rr = e1.lpNorm<Eigen::Infinity>() / r1n;
      Eigen::VectorXd e2;
      if (nf > 0) {
        e2 = rdf - Gf.transpose() * dy;
        rr = std::max(rr, e2.lpNorm<Eigen::Infinity>() /
                              (1.0 + rdf.lpNorm<Eigen::Infinity>()));
      }
      if (rr < 1e-13) break;
      Eigen::VectorXd cy, cxf;
      solve_aug(e1, e2, cy, cxf);
      dy += cy;
      if (nf > 0) dxf += cxf;
    }
    const Eigen::VectorXd qd = GT * dy;
    if (nn > 0) {
      dzn = rdn - qd.segment(nf, nn);
      dxn = vn + Dn.cwiseProduct(qd.segment(nf, nn));
    }
    for (int k = 0; k < nb; ++k) {
      PsdBlockState& s = st[static_cast<std::size_t>(k)];
      const PsdBlockMap& bm = maps[static_cast<std::size_t>(k)];
      const Eigen::MatrixXd Q =
          smat(qd.segment(bm.col0, svec_dim(bm.dim)));
      s.dZ = s.Rd - Q;
      s.dX = s.V + s.W * Q * s.W;
      s.dX = 0.5 * (s.dX + s.dX.transpose()).eval();
      s.dZ = 0.5 * (s.dZ + s.dZ.transpose()).eval();
    }
    if (box) {
      det_ = De.cwiseProduct(rhov.cwiseProduct(dy) - w_e);
      dzf = (rcf + zf.cwiseProduct(det_)).cwiseQuotient(fv);
      dzg = (rcg - zg.cwiseProduct(det_)).cwiseQuotient(gv);
    }
  };

  int p_lim = -9, d_lim = -9;  // step-limiting block (verbose diagnostics):
                               // -1 nonneg, k>=0 psd k, -2/-3 box f/g
  const auto primal_step = [&]() {
    double a = std::numeric_limits<double>::infinity();
    p_lim = -9;
    const auto upd = [&](double s, int tag) {
      if (s < a) {
        a = s;
        p_lim = tag;
      }
    };
    if (nn > 0) upd(vec_step(xn, dxn), -1);
    for (int k = 0; k < nb; ++k)
      upd(psd_step(st[static_cast<std::size_t>(k)].lltX,
                   st[static_cast<std::size_t>(k)].dX),
          k);
    if (box) {
      upd(vec_step(fv, -det_), -2);
      upd(vec_step(gv, det_), -3);
    }
    return a;
  };
  const auto dual_step = [&]() {
    double a = std::numeric_limits<double>::infinity();
    d_lim = -9;
    const auto upd = [&](double s, int tag) {
      if (s < a) {
        a = s;
        d_lim = tag;
      }
    };
    if (nn > 0) upd(vec_step(zn, dzn), -1);
    for (int k = 0; k < nb; ++k)
      upd(psd_step(st[static_cast<std::size_t>(k)].lltZ,
                   st[static_cast<std::size_t>(k)].dZ),
          k);
    if (box) {
      upd(vec_step(zf, dzf), -2);
      upd(vec_step(zg, dzg), -3);
    }
    return a;
  };

  int iter = 0;
  for (;; ++iter) {
    // ----- residuals and complementarity
    assemble();
    rp = hs - Gs * xfull;
    if (box) rp -= rhov.cwiseProduct(et);
    const Eigen::VectorXd q = GT * y;
    rdf = cf - q.head(nf);
    if (nn > 0) rdn = cn - q.segment(nf, nn) - zn;
    double rd_inf = rdf.size() > 0 ? rdf.lpNorm<Eigen::Infinity>() : 0.0;
    if (nn > 0) rd_inf = std::max(rd_inf, rdn.lpNorm<Eigen::Infinity>());
    for (int k = 0; k < nb; ++k) {
      PsdBlockState& s = st[static_cast<std::size_t>(k)];
      const PsdBlockMap& bm = maps[static_cast<std::size_t>(k)];
      s.Rd = s.C - smat(q.segment(bm.col0, svec_dim(bm.dim))) - s.Z;
      rd_inf = std::max(rd_inf, s.Rd.cwiseAbs().maxCoeff());
    }
    if (box) {
      res_e = zf - zg - rhov.cwiseProduct(y);
      rd_inf = std::max(rd_inf, res_e.lpNorm<Eigen::Infinity>());
    }

    double compl_sum = box ? fv.dot(zf) + gv.dot(zg) : 0.0;
    if (nn > 0) compl_sum += xn.dot(zn);
    for (int k = 0; k < nb; ++k)
      compl_sum += st[static_cast<std::size_t>(k)].X.cwiseProduct(
          st[static_cast<std::size_t>(k)].Z).sum();
    mu = compl_sum / nu;

    const double rel_p =
        rp.cwiseQuotient(rowsc).lpNorm<Eigen::Infinity>() / (1.0 + hnorm);
    const double rel_d = rd_inf / (1.0 + cnorm);
    const double pobj = feas_only ? 0.0 : prob.c.dot(xfull);
    double dobj = hs.dot(y);
    if (box) dobj -= zf.sum() + zg.sum();
    const double gap_rel =
        std::abs(pobj - dobj) / (1.0 + std::abs(pobj) + std::abs(dobj));

    // ----- Farkas certificate of (slack-relaxed) infeasibility
    const double farkas_val =
        hs.dot(y) - (box ? rhov.dot(y.cwiseAbs()) : 0.0);
    double farkas_dist = std::numeric_limits<double>::infinity();
    if (farkas_val > 0.0) {
      double d2 = q.head(nf).squaredNorm();
      if (nn > 0) d2 += q.segment(nf, nn).cwiseMax(0.0).squaredNorm();
      for (int k = 0; k < nb; ++k) {
        const PsdBlockMap& bm = maps[static_cast<std::size_t>(k)];
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(
            smat(q.segment(bm.col0, svec_dim(bm.dim))), Eigen::EigenvaluesOnly);
        d2 += eig.eigenvalues().cwiseMax(0.0).squaredNorm();
      }
      farkas_dist = std::sqrt(d2);
    }

    if (opts.verbose)
      std::printf(
          "[ipm] it %3d  mu=%9.2e  rp=%9.2e  rd=%9.2e  gap=%9.2e  "
          "farkas=%9.2e  ap=%5.3f(%d) ad=%5.3f(%d) sg=%8.1e\n",
          iter, mu, rel_p, rel_d, gap_rel,
          farkas_val > 0.0 ? farkas_dist / farkas_val : -1.0, last_ap, p_lim,
          last_ad, d_lim, last_sigma);

    // ----- exits
    rep.iterations = iter;
    rep.objective = pobj;
    rep.primal_residual = rel_p;
    rep.dual_residual = rel_d;
    rep.gap = feas_only ? mu : gap_rel;
    const auto record_cone_margin = [&]() {
      double cv = 0.0;
      if (nn > 0) cv = std::min(cv, xn.minCoeff());
      for (int k = 0; k < nb; ++k) {
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(
            st[static_cast<std::size_t>(k)].X, Eigen::EigenvaluesOnly);
        cv = std::min(cv, eig.eigenvalues().minCoeff());
      }
      rep.cone_violation = std::min(cv, 0.0);
    };
    if (feas_only && rel_p <= opts.tol_feas) {
      rep.status = SolveStatus::kFeasible;
      rep.message = "primal feasible (interior)";
      record_cone_margin();
      break;
    }
    if (!feas_only && rel_p <= opts.tol_feas && rel_d <= opts.tol_dual &&
        gap_rel <= opts.tol_gap) {
      rep.status = SolveStatus::kFeasible;
      rep.message = "optimal";
      record_cone_margin();
      break;
    }
    if (farkas_val > 0.0 && farkas_dist <= opts.tol_infeas * farkas_val) {
      rep.status = SolveStatus::kInfeasible;
      rep.infeas_cert_residual = farkas_dist / farkas_val;
      rep.message = "Farkas certificate";
      y /= farkas_val;  // h'y - rho |y|_1 = 1 after normalization
      break;
    }
    if (box && mu <= 1e-14 && rel_p > 1e3 * opts.tol_feas) {
      rep.status = SolveStatus::kInaccurate;
      rep.message = "complementarity exhausted without certificate";
      break;
    }
    if (iter >= opts.max_iter) {
      rep.message = "iteration limit";
      break;
    }
    if (opts.time_limit > 0.0) {
      const double elapsed =
          std::chrono::duration<double>(std::chrono::steady_clock::now() -
                                        t_start)
              .count();
      if (elapsed > opts.time_limit) {
        rep.message = "time limit";
        break;
      }
    }

    // ----- Nesterov-Todd scaling per PSD block
    for (int k = 0; k < nb; ++k) {
      PsdBlockState& s = st[static_cast<std::size_t>(k)];
      safe_llt(s.X, s.lltX);
      safe_llt(s.Z, s.lltZ);
      const int p = maps[static_cast<std::size_t>(k)].dim;
      const Eigen::MatrixXd Lx = s.lltX.matrixL();
      // Lx' Z Lx = V diag(lam^2) V'  gives the NT factor R = Lx V lam^-1/2
      // with R' Z R = R^-1 X R^-T = diag(lam) and W = R R' (W Z W = X).
      Eigen::MatrixXd A = Lx.transpose() * s.Z * Lx;
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(
          0.5 * (A + A.transpose()));
      s.lam = eig.eigenvalues().cwiseMax(1e-300).cwiseSqrt();
      const Eigen::VectorXd isq = s.lam.cwiseSqrt().cwiseInverse();
      s.R = Lx * eig.eigenvectors() * isq.asDiagonal();
      s.Rinv = (s.lam.cwiseSqrt().asDiagonal() *
                eig.eigenvectors().transpose()) *
               Lx.triangularView<Eigen::Lower>().solve(
                   Eigen::MatrixXd::Identity(p, p));
      s.W = s.R * s.R.transpose();
    }
    if (nn > 0) Dn = xn.cwiseQuotient(zn);
    if (box)
      De = (zf.cwiseQuotient(fv) + zg.cwiseQuotient(gv)).cwiseInverse();

    // ----- Schur complement and factorizations (once per iteration)
    Schur.setZero();
    for (int k = 0; k < nb; ++k) {
      const PsdBlockMap& bm = maps[static_cast<std::size_t>(k)];
      const PsdBlockState& s = st[static_cast<std::size_t>(k)];
      Eigen::MatrixXd U(bm.dim, bm.dim);
      for (const int i : bm.active) {
        U.setZero();
        auto uv = U.selfadjointView<Eigen::Upper>();
        for (const PsdRowEntry& e : bm.rows[static_cast<std::size_t>(i)]) {
          if (e.a == e.b)
            uv.rankUpdate(s.W.col(e.a), e.v);
          else
            uv.rankUpdate(s.W.col(e.a), s.W.col(e.b), e.v);
        }
        for (const int j : bm.active) {
          double dot = 0.0;
          for (const PsdRowEntry& e : bm.rows[static_cast<std::size_t>(j)])
            dot += (e.a == e.b ? U(e.a, e.a) : 2.0 * U(e.a, e.b)) * e.v;
          Schur(i, j) += dot;
        }
      }
    }
    for (int j = 0; j < nn; ++j) {
      for (Eigen::SparseMatrix<double>::InnerIterator it1(Gs, nf + j); it1;
           ++it1)
        for (Eigen::SparseMatrix<double>::InnerIterator it2(Gs, nf + j); it2;
             ++it2)
          Schur(it1.row(), it2.row()) += Dn[j] * it1.value() * it2.value();
    }
    if (box) Schur.diagonal() += rhov.cwiseProduct(rhov).cwiseProduct(De);
    // Factor a lightly shifted copy, then restore the true matrix: the
    // refinement loop in solve_dir needs the unregularized Schur action.
    const double sreg =
        1e-13 * (1.0 + Schur.diagonal().cwiseAbs().maxCoeff());
    double sreg_used = sreg;
    Schur.diagonal().array() += sreg;
    lltS.compute(Schur);
    if (lltS.info() != Eigen::Success) {
      Schur.diagonal().array() += 1e6 * sreg;
      sreg_used += 1e6 * sreg;
      lltS.compute(Schur);
      if (lltS.info() != Eigen::Success) {
        rep.status = SolveStatus::kInaccurate;
        rep.message = "Schur factorization failed";
        break;
      }
    }
    Schur.diagonal().array() -= sreg_used;
    if (nf > 0) {
      T = lltS.solve(Gf);
      Kf = Gf.transpose() * T;
      Kf.diagonal().array() +=
          1e-13 * (1.0 + Kf.diagonal().cwiseAbs().maxCoeff());
      lltK.compute(Kf);
      if (lltK.info() != Eigen::Success) {
        rep.status = SolveStatus::kInaccurate;
        rep.message = "free-block reduction factorization failed";
        break;
      }
    }

    // ----- predictor (affine scaling direction)
    for (int k = 0; k < nb; ++k) {
      PsdBlockState& s = st[static_cast<std::size_t>(k)];
      s.V = Eigen::MatrixXd((-s.lam).asDiagonal());
    }
    Eigen::VectorXd rc_n, rcf, rcg;
    if (nn > 0) rc_n = -xn.cwiseProduct(zn);
    if (box) {
      rcf = -fv.cwiseProduct(zf);
      rcg = -gv.cwiseProduct(zg);
    }
    solve_dir(rc_n, rcf, rcg);
    const double ap_aff = std::min(1.0, 0.99 * primal_step());
    const double ad_aff = std::min(1.0, 0.99 * dual_step());

    // Complementarity after the affine step.
    double ca = 0.0;
    if (nn > 0)
      ca += (xn + ap_aff * dxn).dot(zn + ad_aff * dzn);
    for (int k = 0; k < nb; ++k) {
      PsdBlockState& s = st[static_cast<std::size_t>(k)];
      ca += (s.X + ap_aff * s.dX).cwiseProduct(s.Z + ad_aff * s.dZ).sum();
      s.dXa = s.dX;
      s.dZa = s.dZ;
    }
    if (box) {
      ca += (fv - ap_aff * det_).dot(zf + ad_aff * dzf);
      ca += (gv + ap_aff * det_).dot(zg + ad_aff * dzg);
      det_a = det_;
      dzf_a = dzf;
      dzg_a = dzg;
    }
    if (nn > 0) {
      dxn_a = dxn;
      dzn_a = dzn;
    }
    const double mu_aff = ca / nu;
    const double sigma =
        std::clamp(std::pow(mu_aff / std::max(mu, 1e-300), 3.0), 1e-10, 1.0);

    // ----- corrector (centering + second-order term)
    for (int k = 0; k < nb; ++k) {
      PsdBlockState& s = st[static_cast<std::size_t>(k)];
      const Eigen::MatrixXd Dxh = s.Rinv * s.dXa * s.Rinv.transpose();
      const Eigen::MatrixXd Dzh = s.R.transpose() * s.dZa * s.R;
      Eigen::MatrixXd cross = Dxh * Dzh;
      cross = 0.5 * (cross + cross.transpose()).eval();
      Eigen::MatrixXd rc = -cross;
      rc.diagonal().array() += sigma * mu;
      rc.diagonal() -= s.lam.cwiseProduct(s.lam);
      for (int a = 0; a < rc.rows(); ++a)
        for (int b = 0; b < rc.cols(); ++b)
          rc(a, b) *= 2.0 / (s.lam[a] + s.lam[b]);
      s.V = rc;
    }
    if (nn > 0)
      rc_n = Eigen::VectorXd::Constant(nn, sigma * mu) -
             xn.cwiseProduct(zn) - dxn_a.cwiseProduct(dzn_a);
    if (box) {
      rcf = Eigen::VectorXd::Constant(m, sigma * mu) - fv.cwiseProduct(zf) +
            det_a.cwiseProduct(dzf_a);
      rcg = Eigen::VectorXd::Constant(m, sigma * mu) - gv.cwiseProduct(zg) -
            det_a.cwiseProduct(dzg_a);
    }
    solve_dir(rc_n, rcf, rcg);
    const double ap = std::min(1.0, 0.99 * primal_step());
    const double ad = std::min(1.0, 0.99 * dual_step());
    last_ap = ap;
    last_ad = ad;
    last_sigma = sigma;

    // ----- update
    if (nf > 0) xf += ap * dxf;
    if (nn > 0) {
      xn += ap * dxn;
      zn += ad * dzn;
    }
    for (int k = 0; k < nb; ++k) {
      PsdBlockState& s = st[static_cast<std::size_t>(k)];
      s.X += ap * s.dX;
      s.Z += ad * s.dZ;
      s.X = 0.5 * (s.X + s.X.transpose()).eval();
      s.Z = 0.5 * (s.Z + s.Z.transpose()).eval();
    }
    y += ad * dy;
    if (box) {
      et += ap * det_;
      fv = Eigen::VectorXd::Ones(m) - et;
      gv = Eigen::VectorXd::Ones(m) + et;
      zf += ad * dzf;
      zg += ad * dzg;
    }

    stall = (ap < 1e-3 && ad < 1e-3) ? stall + 1 : 0;
    if (stall >= 5) {
      rep.status = SolveStatus::kInaccurate;
      rep.message = "step lengths collapsed";
      ++iter;
      break;
    }
  }

  assemble();
  sol.x = xfull;
  sol.y = rowsc.cwiseProduct(y);  // dual for the original (unequilibrated) rows
  rep.solve_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start)
          .count();
  if (rep.message.empty()) rep.message = "iteration limit";
  return sol;
}

// ---------------------------------------------------------------------------
// Serialization

std::string to_text(const ConicProblem& prob) {
  prob.validate();
  std::ostringstream os;
  os << "ratsyn-conic 1\n";
  os << "cones free " << prob.cones.num_free << " nonneg "
     << prob.cones.num_nonneg << " psd";
  for (int p : prob.cones.psd_dims) os << " " << p;
  os << "\n";
  os << "objective " << (prob.is_feasibility() ? 0 : prob.c.size()) << "\n";
  if (!prob.is_feasibility()) {
    for (int j = 0; j < prob.c.size(); ++j) {
      os << j << " " << format_hex(prob.c[j]) << "\n";
    }
  }
  os << "matrix " << prob.G.rows() << " " << prob.G.cols() << " "
     << prob.G.nonZeros() << "\n";
  for (int j = 0; j < prob.G.outerSize(); ++j) {
    for (Eigen::SparseMatrix<double>::InnerIterator it(prob.G, j); it; ++it) {
      os << it.row() << " " << j << " " << format_hex(it.value()) << "\n";
    }
  }
  os << "rhs " << prob.h.size() << "\n";
  for (int i = 0; i < prob.h.size(); ++i) {
    os << i << " " << format_hex(prob.h[i]) << "\n";
  }
  os << "end\n";
  return os.str();
}

ConicProblem from_text(const std::string& text) {
  std::istringstream is(text);
  std::string tok;
  ConicProblem prob;
  is >> tok;
  require(tok == "ratsyn-conic", "bad magic");
  int version;
  is >> version;
  require(version == 1, "unsupported version");
  is >> tok;
  require(tok == "cones", "expected cones");
  is >> tok >> prob.cones.num_free >> tok >> prob.cones.num_nonneg >> tok;
  require(tok == "psd", "expected psd");
  // PSD dims run until the "objective" keyword.
  while (is >> tok && tok != "objective") {
    prob.cones.psd_dims.push_back(std::stoi(tok));
  }
  int nobj;
  is >> nobj;
  if (nobj > 0) {
    prob.c = Eigen::VectorXd::Zero(prob.cones.dim());
    for (int k = 0; k < nobj; ++k) {
      int j;
      std::string val;
      is >> j >> val;
      prob.c[j] = parse_hex(val);
    }
  }
  is >> tok;
  require(tok == "matrix", "expected matrix");
  int rows, cols;
  long long nnz;
  is >> rows >> cols >> nnz;
  std::vector<Eigen::Triplet<double>> trips;
  trips.reserve(static_cast<std::size_t>(nnz));
  for (long long k = 0; k < nnz; ++k) {
    int i, j;
    std::string val;
    is >> i >> j >> val;
    trips.emplace_back(i, j, parse_hex(val));
  }
  prob.G.resize(rows, cols);
  prob.G.setFromTriplets(trips.begin(), trips.end());
  is >> tok;
  require(tok == "rhs", "expected rhs");
  int hn;
  is >> hn;
  prob.h = Eigen::VectorXd::Zero(hn);
  for (int k = 0; k < hn; ++k) {
    int i;
    std::string val;
    is >> i >> val;
    prob.h[i] = parse_hex(val);
  }
  is >> tok;
  require(tok == "end", "expected end");
  prob.validate();
  return prob;
}

std::string report_to_json(const SolveReport& report) {
  nlohmann::json j;
  j["status"] = to_string(report.status);
  j["iterations"] = report.iterations;
  j["solve_seconds"] = report.solve_seconds;
  j["objective"] = report.objective;
  j["primal_residual"] = report.primal_residual;
  j["dual_residual"] = report.dual_residual;
  j["gap"] = report.gap;
  j["cone_violation"] = report.cone_violation;
  j["infeas_cert_residual"] = report.infeas_cert_residual;
  j["message"] = report.message;
  return j.dump(2);
}

void save_report_json(const std::string& path, const SolveReport& report) {
  std::ofstream f(path);
  require(f.good(), "cannot open " + path);
  f << report_to_json(report) << "\n";
}

}  // namespace ratsyn::sdp
