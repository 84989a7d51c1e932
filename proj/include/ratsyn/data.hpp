#pragma once

// Experiment data handling: noise bounds (quadratic matrix bound on the
// stacked disturbance), trajectory-data generation from the true plant, and
// assembly of the consistency-set quadratic matrix inequality
//
//   G(A,B,P) = V' Qbar V + V' Sbar + Sbar' V + Rbar >= 0,
//   V = [A'; B'; (I_n x P)'],
//
// whose solution set equals the set of parameter matrices consistent with
// the data and the noise bound (both inclusions are exercised in tests).

#include <Eigen/Dense>

#include <cstdint>
#include <string>

#include "ratsyn/lift.hpp"
#include "ratsyn/model.hpp"

namespace ratsyn::data {

// Quadratic disturbance bound: W is admissible iff
// W Qw W' + W Sw + Sw' W' + Rw >= 0, with Qw negative definite.
struct NoiseBound {
  Eigen::MatrixXd Qw;  // N x N
  Eigen::MatrixXd Sw;  // N x m_w
  Eigen::MatrixXd Rw;  // m_w x m_w
  Eigen::MatrixXd Bw;  // n x m_w, full column rank

  int N() const { return static_cast<int>(Qw.rows()); }
  int mw() const { return static_cast<int>(Rw.rows()); }
  // Qw < 0 (Cholesky of -Qw), Bw column rank (singular values > 1e-10),
  // symmetry and shape checks.  Throws std::invalid_argument.
  void validate() const;
};

// Pointwise ball bound ||w(t_k)||_2 <= wbar lumped over N samples:
// Qw = -I_N, Sw = 0, Rw = wbar^2 N I.  Bw defaults to I_{mw}; callers with
// n != m_w assign their own.
NoiseBound pointwise_bound(double wbar, int N, int mw);

// Smallest eigenvalue of the bound expression for a concrete W; >= 0 means
// W is admissible.
double noise_bound_eig(const Eigen::MatrixXd& W, const NoiseBound& nb);

struct Dataset {
  Eigen::MatrixXd X;      // n x N states
  Eigen::MatrixXd Xdot;   // n x N measured derivatives
  Eigen::MatrixXd U;      // m x N inputs
  Eigen::VectorXd times;  // N sampling times (restart at each trajectory)
  Eigen::MatrixXd Wtrue;  // m_w x N ground-truth disturbance (generation
                          // only; empty when ingested from files)

  int n() const { return static_cast<int>(X.rows()); }
  int m() const { return static_cast<int>(U.rows()); }
  int N() const { return static_cast<int>(X.cols()); }
};

// How measured derivatives are produced.  kExact records the model
// derivative plus the sampled disturbance (the data equation holds exactly
// and Wtrue is stored); kFiniteDifference records forward differences of
// the simulated states, leaving the disturbance bound to the caller (Wtrue
// stays empty).
enum class DerivativeMode { kExact, kFiniteDifference };

struct GenConfig {
  int d = 1;            // number of trajectories
  int Nd = 5;           // samples per trajectory, N = d * Nd
  double Ts = 1e-3;     // sampling rate; one RK4 step per interval
  Eigen::VectorXd x0_lo, x0_hi;  // initial-state box
  Eigen::VectorXd u_lo, u_hi;    // input box (zero-order hold per sample)
  double wbar = 0.0;             // disturbance ball radius
  Eigen::MatrixXd Bw;            // n x m_w; empty means I_n
  int max_retries = 50;          // per-trajectory resampling budget
  DerivativeMode deriv = DerivativeMode::kExact;
};

// Simulates the plant px = A Z + B H u trajectory by trajectory with fresh
// uniform inputs at every sample and a disturbance drawn uniformly from the
// ball ||w|| <= wbar; the recorded derivative is
//   xdot(t_k) = (A Z(x_k) + B H(x_k) u_k + Bw w_k) / p(x_k),
// so the perturbed polynomial data equation holds exactly by construction.
// Trajectories that diverge (norm > 1e6) or approach a denominator zero are
// resampled up to cfg.max_retries times.  Each trajectory draws from its
// own seed-derived stream, so results are reproducible and trajectories
// are independent.
Dataset generate_data(const model::PolyForm& form, const GenConfig& cfg,
                      std::uint64_t seed);

// Lifted plants: the initial-state box is in original coordinates, which
// are embedded before simulating the extended polynomial plant.
Dataset generate_data(const lift::LiftedSystem& sys, const GenConfig& cfg,
                      std::uint64_t seed);

// The data-dependent blocks of the consistency inequality.
struct ConsistencyQuadratic {
  Eigen::MatrixXd Qbar;  // N_v x N_v
  Eigen::MatrixXd Sbar;  // N_v x n
  Eigen::MatrixXd Rbar;  // n x n

  // Cached data matrices (N_v = N_z + N_u + n N_p rows in T order).
  Eigen::MatrixXd ZX;     // N_z x N
  Eigen::MatrixXd HXU;    // N_u x N
  Eigen::MatrixXd Zphat;  // n N_p x N
  Eigen::MatrixXd Xdot;   // n x N
  Eigen::MatrixXd Bw;     // n x m_w

  int n = 0, nz = 0, nu = 0, np = 0;
  int data_rank = 0;          // rank of the stacked [Z; H; Zphat]
  bool rank_deficient = false;

  int nv() const { return nz + nu + n * np; }
};

// Builds Z(X), H(X,U), Zphat(X, Xdot) and the congruence
// [Qbar Sbar; Sbar' Rbar] = [T 0; Xdot Bw] [Qw Sw; Sw' Rw] [T 0; Xdot Bw]'
// with T = [-Z(X); -H(X,U); Zphat].  Symmetric blocks are symmetrized.
ConsistencyQuadratic assemble_consistency(const Dataset& ds,
                                          const model::BasisSpec& basis,
                                          const NoiseBound& nb);

struct MembershipResult {
  bool member = false;
  double min_eig = 0.0;
};

// Evaluates the consistency inequality for concrete (A, B, P); membership
// uses the tolerance min_eig >= -1e-8.
MembershipResult membership_test(const Eigen::MatrixXd& A,
                                 const Eigen::MatrixXd& B,
                                 const Eigen::MatrixXd& P,
                                 const ConsistencyQuadratic& cq);

// Least-squares disturbance explaining (A, B, P):
// W = pinv(Bw) (Zp(P,X,Xdot) - A Z(X) - B H(X,U)).
Eigen::MatrixXd reconstruct_disturbance(const Eigen::MatrixXd& A,
                                        const Eigen::MatrixXd& B,
                                        const Eigen::MatrixXd& P,
                                        const ConsistencyQuadratic& cq);

// CSV persistence: columns t, x1..xn, xdot1..xdotn, u1..um with 12
// significant digits, plus a JSON sidecar `<path>.meta.json` holding
// seed, wbar, Ts, d, Nd.  The ground-truth disturbance is not persisted.
struct DatasetMeta {
  std::uint64_t seed = 0;
  double wbar = 0.0;
  double Ts = 1e-3;
  int d = 0;
  int Nd = 0;
};
void save_dataset(const Dataset& ds, const DatasetMeta& meta,
                  const std::string& path);
Dataset load_dataset(const std::string& path, DatasetMeta* meta = nullptr);

}  // namespace ratsyn::data
