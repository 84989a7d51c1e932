#pragma once

// Fixed-step RK4 integration with typed abort outcomes, trajectory metrics
// and CSV export.  No adaptive stepping: runs must be reproducible bit for
// bit across machines, and the data-generation sampling rate is fixed
// anyway.

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

namespace ratsyn::sim {

enum class SimOutcome {
  kCompleted = 0,
  kDiverged,     // state norm exceeded the divergence threshold
  kDomainError,  // dynamics threw std::domain_error (denominator guard)
};

std::string to_string(SimOutcome o);

struct Trajectory {
  Eigen::VectorXd times;                 // uniform grid, times[0] = 0
  std::vector<Eigen::VectorXd> states;   // one per time
  std::vector<Eigen::VectorXd> inputs;   // one per time when closed-loop
  SimOutcome outcome = SimOutcome::kCompleted;
  std::string note;  // human-readable abort reason, empty when completed

  // Metadata for exported artifacts.
  std::string system_id;
  std::string controller_id;
  std::uint64_t seed = 0;

  int size() const { return static_cast<int>(states.size()); }
  bool completed() const { return outcome == SimOutcome::kCompleted; }
};

using Dynamics = std::function<Eigen::VectorXd(const Eigen::VectorXd&)>;
using ControlledDynamics = std::function<Eigen::VectorXd(
    const Eigen::VectorXd&, const Eigen::VectorXd&)>;
using Controller = std::function<Eigen::VectorXd(const Eigen::VectorXd&)>;

// Classical RK4 from x0 over [0, T] with step dt.  On divergence
// (norm > 1e6 or non-finite state) or a std::domain_error from the
// dynamics, integration stops and the outcome/note say why; the states
// recorded so far are kept.
Trajectory simulate(const Dynamics& f, const Eigen::VectorXd& x0, double T,
                    double dt);

// Closed loop xdot = f(x, u(x)); u is sampled at every stage evaluation and
// recorded at the trajectory grid points.
Trajectory simulate(const ControlledDynamics& f, const Controller& u,
                    const Eigen::VectorXd& x0, double T, double dt);

// Trapezoidal (integral ||z||^2 dt)^(1/2) over the recorded horizon, with
// z the selected state channels (all channels when empty).
double l2_norm(const Trajectory& traj, const std::vector<int>& channels = {});

// CSV with header t,x1,..,xn[,u1,..,um]; 12 significant digits.
void export_csv(const Trajectory& traj, const std::string& path);

// Vector field of f on an nx x ny grid over [lo1,hi1] x [lo2,hi2] for
// 2-state dynamics; columns x1,x2,dx1,dx2 (points where the dynamics throw
// are skipped).
void export_vector_field(const Dynamics& f, double lo1, double hi1,
                         double lo2, double hi2, int nx, int ny,
                         const std::string& path);

}  // namespace ratsyn::sim
