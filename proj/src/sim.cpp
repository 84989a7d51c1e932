#include "ratsyn/sim.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <stdexcept>

namespace ratsyn::sim {

namespace {

constexpr double kDivergenceNorm = 1e6;

std::string fmt12(double v) {
  char buf[40];
  auto res = std::to_chars(buf, buf + sizeof(buf), v,
                           std::chars_format::general, 12);
  return std::string(buf, res.ptr);
}

}  // namespace

std::string to_string(SimOutcome o) {
  switch (o) {
    case SimOutcome::kCompleted:
      return "completed";
    case SimOutcome::kDiverged:
      return "diverged";
    case SimOutcome::kDomainError:
      return "domain_error";
  }
  return "unknown";
}

Trajectory simulate(const ControlledDynamics& f, const Controller& u,
                    const Eigen::VectorXd& x0, double T, double dt) {
  if (!(dt > 0.0) || !(T >= dt)) {
    throw std::invalid_argument("sim: need dt > 0 and T >= dt");
  }
  const int steps = static_cast<int>(std::llround(T / dt));
  const bool record_u = static_cast<bool>(u);

  Trajectory traj;
  traj.states.reserve(static_cast<std::size_t>(steps) + 1);
  Eigen::VectorXd x = x0;
  std::vector<double> times;
  times.reserve(static_cast<std::size_t>(steps) + 1);

  auto stage = [&](const Eigen::VectorXd& s) {
    return record_u ? f(s, u(s)) : f(s, Eigen::VectorXd());
  };

  for (int k = 0; k <= steps; ++k) {
    times.push_back(static_cast<double>(k) * dt);
    traj.states.push_back(x);
    if (record_u) traj.inputs.push_back(u(x));
    if (k == steps) break;
    try {
      const Eigen::VectorXd k1 = stage(x);
      const Eigen::VectorXd k2 = stage(x + 0.5 * dt * k1);
      const Eigen::VectorXd k3 = stage(x + 0.5 * dt * k2);
      const Eigen::VectorXd k4 = stage(x + dt * k3);
      x += dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    } catch (const std::domain_error& e) {
      traj.outcome = SimOutcome::kDomainError;
      traj.note = e.what();
      break;
    }
    if (!x.allFinite() || x.norm() > kDivergenceNorm) {
      traj.outcome = SimOutcome::kDiverged;
      traj.note = "state norm exceeded 1e6";
      break;
    }
  }
  traj.times = Eigen::Map<Eigen::VectorXd>(times.data(),
                                           static_cast<long>(times.size()));
  return traj;
}

Trajectory simulate(const Dynamics& f, const Eigen::VectorXd& x0, double T,
                    double dt) {
  return simulate(
      [&f](const Eigen::VectorXd& x, const Eigen::VectorXd&) { return f(x); },
      Controller(), x0, T, dt);
}

double l2_norm(const Trajectory& traj, const std::vector<int>& channels) {
  const int len = traj.size();
  if (len < 2) return 0.0;
  auto sq = [&](int k) {
    const auto& s = traj.states[static_cast<std::size_t>(k)];
    if (channels.empty()) return s.squaredNorm();
    double v = 0.0;
    for (int c : channels) v += s[c] * s[c];
    return v;
  };
  double acc = 0.0;
  for (int k = 0; k + 1 < len; ++k) {
    const double dt = traj.times[k + 1] - traj.times[k];
    acc += 0.5 * dt * (sq(k) + sq(k + 1));
  }
  return std::sqrt(acc);
}

void export_csv(const Trajectory& traj, const std::string& path) {
  std::ofstream out(path);
  if (!out.good()) {
    throw std::invalid_argument("sim: cannot open output file: " + path);
  }
  const int n = traj.states.empty() ? 0 : static_cast<int>(traj.states[0].size());
  const int m = traj.inputs.empty() ? 0 : static_cast<int>(traj.inputs[0].size());
  out << "t";
  for (int i = 1; i <= n; ++i) out << ",x" << i;
  for (int j = 1; j <= m; ++j) out << ",u" << j;
  out << "\n";
  for (int k = 0; k < traj.size(); ++k) {
    out << fmt12(traj.times[k]);
    for (int i = 0; i < n; ++i)
      out << ',' << fmt12(traj.states[static_cast<std::size_t>(k)][i]);
    for (int j = 0; j < m; ++j)
      out << ',' << fmt12(traj.inputs[static_cast<std::size_t>(k)][j]);
    out << "\n";
  }
}

void export_vector_field(const Dynamics& f, double lo1, double hi1,
                         double lo2, double hi2, int nx, int ny,
                         const std::string& path) {
  if (nx < 2 || ny < 2) {
    throw std::invalid_argument("sim: vector field grid needs >= 2 points");
  }
  std::ofstream out(path);
  if (!out.good()) {
    throw std::invalid_argument("sim: cannot open output file: " + path);
  }
  out << "x1,x2,dx1,dx2\n";
  Eigen::VectorXd x(2);
  for (int i = 0; i < nx; ++i) {
    for (int j = 0; j < ny; ++j) {
      x[0] = lo1 + (hi1 - lo1) * static_cast<double>(i) /
                       static_cast<double>(nx - 1);
      x[1] = lo2 + (hi2 - lo2) * static_cast<double>(j) /
                       static_cast<double>(ny - 1);
      Eigen::VectorXd dx;
      try {
        dx = f(x);
      } catch (const std::domain_error&) {
        continue;
      }
      out << fmt12(x[0]) << ',' << fmt12(x[1]) << ',' << fmt12(dx[0]) << ','
          << fmt12(dx[1]) << "\n";
    }
  }
}

}  // namespace ratsyn::sim
