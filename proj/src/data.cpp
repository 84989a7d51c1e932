#include "ratsyn/data.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "nlohmann/json.hpp"

namespace ratsyn::data {
namespace {

constexpr double kPi = 3.14159265358979323846;

// Deterministic 64-bit generator (splitmix64); used instead of the standard
// distributions so generated datasets are bit-identical across libstdc++
// versions and platforms.
struct SplitMix64 {
  std::uint64_t state;

  explicit SplitMix64(std::uint64_t seed) : state(seed) {}

  std::uint64_t next() {
    std::uint64_t z = (state += 0x9E3779B97F4A7C15ULL);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  // Uniform in [0, 1).
  double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  Eigen::VectorXd uniform_box(const Eigen::VectorXd& lo,
                              const Eigen::VectorXd& hi) {
    Eigen::VectorXd v(lo.size());
    for (Eigen::Index i = 0; i < lo.size(); ++i) {
      v[i] = uniform(lo[i], hi[i]);
    }
    return v;
  }

  // Standard normal via Box-Muller on the deterministic uniforms.
  double gaussian() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    const double r = std::sqrt(-2.0 * std::log(1.0 - uniform()));
    const double theta = 2.0 * kPi * uniform();
    spare_ = r * std::sin(theta);
    have_spare_ = true;
    return r * std::cos(theta);
  }

  // Uniform draw from the solid L2 ball of given radius.
  Eigen::VectorXd ball(int dim, double radius) {
    Eigen::VectorXd dir(dim);
    for (int i = 0; i < dim; ++i) dir[i] = gaussian();
    const double norm = dir.norm();
    if (norm < 1e-300) return Eigen::VectorXd::Zero(dim);
    const double r =
        radius * std::pow(uniform(), 1.0 / static_cast<double>(dim));
    return dir * (r / norm);
  }

 private:
  bool have_spare_ = false;
  double spare_ = 0.0;
};

// Independent per-trajectory stream: hash the pair (seed, index) through one
// splitmix round so adjacent seeds do not produce overlapping streams.
std::uint64_t stream_seed(std::uint64_t seed, std::uint64_t index) {
  SplitMix64 mixer(seed ^ (0x9E3779B97F4A7C15ULL * (index + 1)));
  return mixer.next();
}

void require(bool ok, const std::string& what) {
  if (!ok) throw std::invalid_argument("data: " + what);
}

Eigen::MatrixXd symmetrized(const Eigen::MatrixXd& m) {
  return 0.5 * (m + m.transpose());
}

// Model derivative (A Z(x) + B H(x) u) / p(x); throws std::domain_error
// when the cleared denominator is near zero.
Eigen::VectorXd form_dynamics(const model::PolyForm& form,
                              const Eigen::VectorXd& x,
                              const Eigen::VectorXd& u) {
  const double px = form.p.eval(x);
  if (std::abs(px) <= 1e-9) {
    throw std::domain_error("data: denominator product near zero");
  }
  return (form.A_true * form.basis.Z.eval(x) +
          form.B_true * form.basis.H.eval(x) * u) /
         px;
}

Eigen::VectorXd rk4_step(const model::PolyForm& form, const Eigen::VectorXd& x,
                         const Eigen::VectorXd& u, double h) {
  const Eigen::VectorXd k1 = form_dynamics(form, x, u);
  const Eigen::VectorXd k2 = form_dynamics(form, x + 0.5 * h * k1, u);
  const Eigen::VectorXd k3 = form_dynamics(form, x + 0.5 * h * k2, u);
  const Eigen::VectorXd k4 = form_dynamics(form, x + h * k3, u);
  return x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
}

std::string fmt12(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v,
                           std::chars_format::general, 12);
  return std::string(buf, res.ptr);
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::stringstream ss(line);
  while (std::getline(ss, cell, ',')) out.push_back(cell);
  return out;
}

}  // namespace

void NoiseBound::validate() const {
  require(Qw.rows() == Qw.cols() && Qw.rows() >= 1, "Qw must be square");
  require(Rw.rows() == Rw.cols() && Rw.rows() >= 1, "Rw must be square");
  require((Qw - Qw.transpose()).cwiseAbs().maxCoeff() <= 1e-12,
          "Qw must be symmetric");
  require((Rw - Rw.transpose()).cwiseAbs().maxCoeff() <= 1e-12,
          "Rw must be symmetric");
  require(Sw.rows() == Qw.rows() && Sw.cols() == Rw.rows(),
          "Sw must be N x m_w");
  require(Bw.cols() == Rw.rows(), "Bw must have m_w columns");
  Eigen::LLT<Eigen::MatrixXd> llt(-Qw);
  require(llt.info() == Eigen::Success,
          "Qw must be negative definite (Cholesky of -Qw failed)");
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(Bw);
  require(svd.singularValues().minCoeff() > 1e-10,
          "Bw must have full column rank");
}

NoiseBound pointwise_bound(double wbar, int N, int mw) {
  require(wbar >= 0.0, "wbar must be nonnegative");
  require(N >= 1, "N must be at least 1");
  require(mw >= 1, "m_w must be at least 1");
  NoiseBound nb;
  nb.Qw = -Eigen::MatrixXd::Identity(N, N);
  nb.Sw = Eigen::MatrixXd::Zero(N, mw);
  nb.Rw = wbar * wbar * static_cast<double>(N) *
          Eigen::MatrixXd::Identity(mw, mw);
  nb.Bw = Eigen::MatrixXd::Identity(mw, mw);
  return nb;
}

double noise_bound_eig(const Eigen::MatrixXd& W, const NoiseBound& nb) {
  require(W.rows() == nb.mw() && W.cols() == nb.N(),
          "W must be m_w x N for this bound");
  const Eigen::MatrixXd expr = symmetrized(
      W * nb.Qw * W.transpose() + W * nb.Sw + nb.Sw.transpose() * W.transpose() +
      nb.Rw);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(expr);
  return es.eigenvalues().minCoeff();
}

namespace {

// Shared trajectory loop; start_sampler draws the (already embedded)
// initial state of one trajectory attempt from the trajectory's stream.
template <typename StartSampler>
Dataset generate_core(const model::PolyForm& form, const GenConfig& cfg,
                      std::uint64_t seed, StartSampler&& start_sampler) {
  const int n = static_cast<int>(form.A_true.rows());
  const int m = static_cast<int>(form.basis.H.cols());
  require(cfg.d >= 1 && cfg.Nd >= 1, "need at least one trajectory/sample");
  require(cfg.Ts > 0.0, "Ts must be positive");
  require(cfg.wbar >= 0.0, "wbar must be nonnegative");
  require(cfg.u_lo.size() == m && cfg.u_hi.size() == m,
          "input box must have one interval per input");
  require((cfg.u_hi - cfg.u_lo).minCoeff() >= 0.0,
          "box bounds must satisfy lo <= hi");
  Eigen::MatrixXd Bw = cfg.Bw;
  if (Bw.size() == 0) Bw = Eigen::MatrixXd::Identity(n, n);
  require(Bw.rows() == n, "Bw must have one row per state");
  const int mw = static_cast<int>(Bw.cols());
  const bool exact = cfg.deriv == DerivativeMode::kExact;

  const int N = cfg.d * cfg.Nd;
  Dataset ds;
  ds.X.resize(n, N);
  ds.Xdot.resize(n, N);
  ds.U.resize(m, N);
  ds.times.resize(N);
  if (exact) ds.Wtrue = Eigen::MatrixXd::Zero(mw, N);

  for (int traj = 0; traj < cfg.d; ++traj) {
    SplitMix64 rng(stream_seed(seed, static_cast<std::uint64_t>(traj)));
    bool done = false;
    for (int attempt = 0; attempt <= cfg.max_retries && !done; ++attempt) {
      try {
        Eigen::VectorXd x = start_sampler(rng);
        require(x.size() == n, "start sampler dimension mismatch");
        for (int k = 0; k < cfg.Nd; ++k) {
          const int col = traj * cfg.Nd + k;
          const Eigen::VectorXd u = rng.uniform_box(cfg.u_lo, cfg.u_hi);
          ds.X.col(col) = x;
          ds.U.col(col) = u;
          ds.times[col] = static_cast<double>(k) * cfg.Ts;
          if (exact) {
            const Eigen::VectorXd w = rng.ball(mw, cfg.wbar);
            ds.Wtrue.col(col) = w;
            ds.Xdot.col(col) =
                form_dynamics(form, x, u) + Bw * w / form.p.eval(x);
            if (k + 1 == cfg.Nd) break;  // state after last sample unused
            x = rk4_step(form, x, u, cfg.Ts);
          } else {
            const Eigen::VectorXd next = rk4_step(form, x, u, cfg.Ts);
            ds.Xdot.col(col) = (next - x) / cfg.Ts;
            x = next;
          }
          if (!x.allFinite() || x.norm() > 1e6) {
            throw std::domain_error("data: trajectory blow-up");
          }
        }
        done = true;
      } catch (const std::domain_error&) {
        // resample this trajectory from its (advanced) stream
      }
    }
    if (!done) {
      throw std::runtime_error(
          "data: trajectory generation failed after " +
          std::to_string(cfg.max_retries + 1) + " attempts");
    }
  }
  return ds;
}

}  // namespace

Dataset generate_data(const model::PolyForm& form, const GenConfig& cfg,
                      std::uint64_t seed) {
  const int n = static_cast<int>(form.A_true.rows());
  require(cfg.x0_lo.size() == n && cfg.x0_hi.size() == n,
          "initial-state box must have one interval per state");
  require((cfg.x0_hi - cfg.x0_lo).minCoeff() >= 0.0,
          "box bounds must satisfy lo <= hi");
  return generate_core(form, cfg, seed, [&cfg](SplitMix64& rng) {
    return rng.uniform_box(cfg.x0_lo, cfg.x0_hi);
  });
}

Dataset generate_data(const lift::LiftedSystem& sys, const GenConfig& cfg,
                      std::uint64_t seed) {
  require(cfg.x0_lo.size() == sys.original_dim &&
              cfg.x0_hi.size() == sys.original_dim,
          "lifted generation: initial box lives in original coordinates");
  require((cfg.x0_hi - cfg.x0_lo).minCoeff() >= 0.0,
          "box bounds must satisfy lo <= hi");
  // The initial box is in original coordinates; each attempt embeds its
  // draw, and embedding domain errors trigger the same resampling path.
  return generate_core(sys.dynamics, cfg, seed, [&](SplitMix64& rng) {
    return lift::embed(sys, rng.uniform_box(cfg.x0_lo, cfg.x0_hi));
  });
}

ConsistencyQuadratic assemble_consistency(const Dataset& ds,
                                          const model::BasisSpec& basis,
                                          const NoiseBound& nb) {
  const int n = ds.n();
  const int N = ds.N();
  require(N >= 1, "dataset is empty");
  require(ds.Xdot.rows() == n && ds.Xdot.cols() == N &&
              ds.U.cols() == N,
          "dataset column counts must agree");
  require(nb.N() == N, "noise bound sized for a different sample count");
  require(nb.Bw.rows() == n, "Bw must have one row per state");
  require(basis.H.cols() == ds.m(), "H must have one column per input");

  ConsistencyQuadratic cq;
  cq.n = n;
  cq.nz = basis.nz();
  cq.nu = basis.nu();
  cq.np = basis.np();
  cq.Bw = nb.Bw;
  cq.Xdot = ds.Xdot;

  cq.ZX.resize(cq.nz, N);
  cq.HXU.resize(cq.nu, N);
  cq.Zphat.resize(n * cq.np, N);
  for (int k = 0; k < N; ++k) {
    const Eigen::VectorXd x = ds.X.col(k);
    cq.ZX.col(k) = basis.Z.eval(x);
    cq.HXU.col(k) = basis.H.eval(x) * ds.U.col(k);
    if (cq.np > 0) {
      const Eigen::VectorXd zp = basis.Zp.eval(x);
      for (int i = 0; i < n; ++i) {
        cq.Zphat.col(k).segment(i * cq.np, cq.np) = zp * ds.Xdot(i, k);
      }
    }
  }

  const int nv = cq.nv();
  Eigen::MatrixXd T(nv, N);
  T.topRows(cq.nz) = -cq.ZX;
  T.middleRows(cq.nz, cq.nu) = -cq.HXU;
  if (cq.np > 0) T.bottomRows(n * cq.np) = cq.Zphat;

  cq.Qbar = symmetrized(T * nb.Qw * T.transpose());
  cq.Sbar = T * nb.Qw * ds.Xdot.transpose() + T * nb.Sw * nb.Bw.transpose();
  cq.Rbar = symmetrized(ds.Xdot * nb.Qw * ds.Xdot.transpose() +
                        ds.Xdot * nb.Sw * nb.Bw.transpose() +
                        nb.Bw * nb.Sw.transpose() * ds.Xdot.transpose() +
                        nb.Bw * nb.Rw * nb.Bw.transpose());

  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(T.transpose());
  cq.data_rank = static_cast<int>(qr.rank());
  cq.rank_deficient = cq.data_rank < nv;
  return cq;
}

namespace {

// V = [[A B]'; (I_n x P)'] stacked to N_v x n.
Eigen::MatrixXd stack_v(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B,
                        const Eigen::MatrixXd& P,
                        const ConsistencyQuadratic& cq) {
  require(A.rows() == cq.n && A.cols() == cq.nz, "A must be n x N_z");
  require(B.rows() == cq.n && B.cols() == cq.nu, "B must be n x N_u");
  require(P.rows() == 1 && P.cols() == cq.np, "P must be 1 x N_p");
  Eigen::MatrixXd V(cq.nv(), cq.n);
  V.topRows(cq.nz) = A.transpose();
  V.middleRows(cq.nz, cq.nu) = B.transpose();
  for (int i = 0; i < cq.n; ++i) {
    V.block(cq.nz + cq.nu, i, cq.n * cq.np, 1).setZero();
    if (cq.np > 0) {
      V.block(cq.nz + cq.nu + i * cq.np, i, cq.np, 1) = P.transpose();
    }
  }
  return V;
}

}  // namespace

MembershipResult membership_test(const Eigen::MatrixXd& A,
                                 const Eigen::MatrixXd& B,
                                 const Eigen::MatrixXd& P,
                                 const ConsistencyQuadratic& cq) {
  const Eigen::MatrixXd V = stack_v(A, B, P, cq);
  const Eigen::MatrixXd G =
      symmetrized(V.transpose() * cq.Qbar * V + V.transpose() * cq.Sbar +
                  cq.Sbar.transpose() * V + cq.Rbar);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(G);
  MembershipResult res;
  res.min_eig = es.eigenvalues().minCoeff();
  res.member = res.min_eig >= -1e-8;
  return res;
}

Eigen::MatrixXd reconstruct_disturbance(const Eigen::MatrixXd& A,
                                        const Eigen::MatrixXd& B,
                                        const Eigen::MatrixXd& P,
                                        const ConsistencyQuadratic& cq) {
  require(A.rows() == cq.n && A.cols() == cq.nz, "A must be n x N_z");
  require(B.rows() == cq.n && B.cols() == cq.nu, "B must be n x N_u");
  require(P.rows() == 1 && P.cols() == cq.np, "P must be 1 x N_p");
  Eigen::MatrixXd F = cq.Xdot - A * cq.ZX - B * cq.HXU;
  if (cq.np > 0) {
    for (int i = 0; i < cq.n; ++i) {
      F.row(i) += P * cq.Zphat.middleRows(i * cq.np, cq.np);
    }
  }
  return cq.Bw.completeOrthogonalDecomposition().solve(F);
}

void save_dataset(const Dataset& ds, const DatasetMeta& meta,
                  const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("data: cannot open " + path);
  const int n = ds.n(), m = ds.m(), N = ds.N();
  out << "t";
  for (int i = 1; i <= n; ++i) out << ",x" << i;
  for (int i = 1; i <= n; ++i) out << ",xdot" << i;
  for (int j = 1; j <= m; ++j) out << ",u" << j;
  out << "\n";
  for (int k = 0; k < N; ++k) {
    out << fmt12(ds.times[k]);
    for (int i = 0; i < n; ++i) out << ',' << fmt12(ds.X(i, k));
    for (int i = 0; i < n; ++i) out << ',' << fmt12(ds.Xdot(i, k));
    for (int j = 0; j < m; ++j) out << ',' << fmt12(ds.U(j, k));
    out << "\n";
  }
  out.flush();
  if (!out) throw std::runtime_error("data: write failed for " + path);

  nlohmann::json j;
  j["seed"] = meta.seed;
  j["wbar"] = meta.wbar;
  j["Ts"] = meta.Ts;
  j["d"] = meta.d;
  j["Nd"] = meta.Nd;
  std::ofstream side(path + ".meta.json");
  if (!side) {
    throw std::runtime_error("data: cannot open " + path + ".meta.json");
  }
  side << j.dump(2) << "\n";
}

Dataset load_dataset(const std::string& path, DatasetMeta* meta) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("data: cannot open " + path);
  std::string line;
  if (!std::getline(in, line)) {
    throw std::runtime_error("data: empty file " + path);
  }
  const auto header = split_csv_line(line);
  require(!header.empty() && header[0] == "t",
          "CSV header must start with t");
  int n = 0, m = 0;
  for (std::size_t i = 1; i < header.size(); ++i) {
    const std::string& h = header[i];
    if (h.rfind("xdot", 0) == 0) {
      continue;  // counted via the x columns
    } else if (h.rfind("x", 0) == 0) {
      ++n;
    } else if (h.rfind("u", 0) == 0) {
      ++m;
    } else {
      throw std::invalid_argument("data: unrecognized CSV column " + h);
    }
  }
  require(header.size() == static_cast<std::size_t>(1 + 2 * n + m),
          "CSV header has inconsistent column counts");

  std::vector<std::vector<double>> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto cells = split_csv_line(line);
    require(cells.size() == header.size(), "CSV row width mismatch");
    std::vector<double> row(cells.size());
    for (std::size_t i = 0; i < cells.size(); ++i) {
      row[i] = std::stod(cells[i]);
    }
    rows.push_back(std::move(row));
  }
  const int N = static_cast<int>(rows.size());
  require(N >= 1, "CSV has no data rows");

  Dataset ds;
  ds.X.resize(n, N);
  ds.Xdot.resize(n, N);
  ds.U.resize(m, N);
  ds.times.resize(N);
  for (int k = 0; k < N; ++k) {
    const auto& row = rows[static_cast<std::size_t>(k)];
    ds.times[k] = row[0];
    for (int i = 0; i < n; ++i) ds.X(i, k) = row[static_cast<std::size_t>(1 + i)];
    for (int i = 0; i < n; ++i) {
      ds.Xdot(i, k) = row[static_cast<std::size_t>(1 + n + i)];
    }
    for (int j = 0; j < m; ++j) {
      ds.U(j, k) = row[static_cast<std::size_t>(1 + 2 * n + j)];
    }
  }

  if (meta != nullptr) {
    std::ifstream side(path + ".meta.json");
    if (side) {
      nlohmann::json j = nlohmann::json::parse(side);
      meta->seed = j.value("seed", std::uint64_t{0});
      meta->wbar = j.value("wbar", 0.0);
      meta->Ts = j.value("Ts", 1e-3);
      meta->d = j.value("d", 0);
      meta->Nd = j.value("Nd", 0);
    }
  }
  return ds;
}

}  // namespace ratsyn::data
