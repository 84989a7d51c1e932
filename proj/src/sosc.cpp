#include "ratsyn/sosc.hpp"

#include <algorithm>
#include <map>
#include <set>
#include <stdexcept>
#include <tuple>

namespace ratsyn::sosc {

namespace {

constexpr double kSqrt2 = 1.4142135623730950488;

void require(bool cond, const std::string& msg) {
  if (!cond) throw std::invalid_argument("sosc: " + msg);
}

using poly::GrlexLess;
using poly::Monomial;
using poly::PolyMatrix;
using poly::Polynomial;

// Constraint key: one coefficient-matching row per (monomial, entry i <= j).
struct Key {
  Monomial mono;
  int i = 0, j = 0;
};

struct KeyLess {
  bool operator()(const Key& a, const Key& b) const {
    GrlexLess less;
    if (less(a.mono, b.mono)) return true;
    if (less(b.mono, a.mono)) return false;
    if (a.i != b.i) return a.i < b.i;
    return a.j < b.j;
  }
};

}  // namespace

// ---------------------------------------------------------------------------
// GramTemplate

poly::PolyMatrix GramTemplate::gram_poly(const Eigen::MatrixXd& lambda) const {
  require(lambda.rows() == gram_dim() && lambda.cols() == gram_dim(),
          "lambda size does not match template");
  const int l = basis.size();
  PolyMatrix s(block, block, nvars);
  for (int a = 0; a < l; ++a) {
    for (int b = 0; b < l; ++b) {
      const Monomial prod =
          basis.mons[static_cast<std::size_t>(a)].times(
              basis.mons[static_cast<std::size_t>(b)]);
      for (int i = 0; i < block; ++i) {
        for (int j = 0; j < block; ++j) {
          const double v = lambda(row_index(a, i), row_index(b, j));
          if (v != 0.0) s(i, j).add_term(prod, v);
        }
      }
    }
  }
  return s;
}

Eigen::MatrixXd GramTemplate::gram_eval(const Eigen::MatrixXd& lambda,
                                        const Eigen::VectorXd& x) const {
  require(lambda.rows() == gram_dim() && lambda.cols() == gram_dim(),
          "lambda size does not match template");
  const Eigen::VectorXd z = basis.eval(x);
  Eigen::MatrixXd t = Eigen::MatrixXd::Zero(gram_dim(), block);
  for (int m = 0; m < basis.size(); ++m) {
    for (int i = 0; i < block; ++i) t(row_index(m, i), i) = z[m];
  }
  return t.transpose() * lambda * t;
}

GramTemplate gram_parametrize(int nvars, int block, int deg) {
  require(nvars >= 1, "nvars must be >= 1");
  require(block >= 1, "block size must be >= 1");
  require(deg >= 0 && deg % 2 == 0, "degree must be even and nonnegative");
  GramTemplate t;
  t.nvars = nvars;
  t.block = block;
  t.half_degree = deg / 2;
  t.basis = poly::monomials_up_to(nvars, t.half_degree, poly::BasisRole::kZd);
  return t;
}

// ---------------------------------------------------------------------------
// AffinePolyFamily

poly::PolyMatrix AffinePolyFamily::value(const Eigen::VectorXd& theta) const {
  require(static_cast<int>(theta.size()) == num_vars(),
          "theta length mismatch");
  PolyMatrix s = base;
  for (const auto& [vid, gen] : gens) {
    const double t = theta[vid];
    if (t != 0.0) s = s + gen.scaled(t);
  }
  return s;
}

int AffinePolyFamily::degree() const {
  int d = base.degree();
  for (const auto& [vid, gen] : gens) d = std::max(d, gen.degree());
  return d;
}

void AffinePolyFamily::validate() const {
  require(size >= 1, "family size must be >= 1");
  require(base.rows() == size && base.cols() == size, "base size mismatch");
  require(base.nvars() == nvars, "base nvars mismatch");
  require(base.is_symmetric(), "family base is not symmetric");
  for (const auto& [vid, gen] : gens) {
    require(vid >= 0 && vid < num_vars(), "generator variable id out of range");
    require(gen.rows() == size && gen.cols() == size, "generator size mismatch");
    require(gen.nvars() == nvars, "generator nvars mismatch");
    require(gen.is_symmetric(), "family generator is not symmetric");
  }
  std::vector<int> bound(static_cast<std::size_t>(num_vars()), 0);
  for (const auto& blk : psd_blocks) {
    require(blk.dim >= 1, "psd block dimension must be >= 1");
    require(static_cast<int>(blk.vids.size()) == sdp::svec_dim(blk.dim),
            "psd block vid count mismatch");
    for (int v : blk.vids) {
      require(v >= 0 && v < num_vars(), "psd block vid out of range");
      require(bound[static_cast<std::size_t>(v)] == 0,
              "variable bound to multiple psd blocks");
      bound[static_cast<std::size_t>(v)] = 1;
    }
  }
}

// ---------------------------------------------------------------------------
// compile_sos

CompiledSos compile_sos(const AffinePolyFamily& family,
                        const GramTemplate& tmpl, const CompileOptions& opts) {
  family.validate();
  require(family.nvars == tmpl.nvars, "family/template nvars mismatch");
  require(family.size == tmpl.block, "family/template block size mismatch");
  require(family.degree() <= 2 * tmpl.half_degree,
          "family degree exceeds template coverage");

  const int l = tmpl.basis.size();
  const int p = tmpl.block;
  const int nv = family.num_vars();

  // Effective base: PSD-block shifts are constants folded into the base.
  PolyMatrix base_eff = family.base;
  {
    std::vector<double> shift(static_cast<std::size_t>(nv), 0.0);
    for (const auto& blk : family.psd_blocks) {
      int k = 0;
      for (int i = 0; i < blk.dim; ++i) {
        for (int j = i; j < blk.dim; ++j) {
          if (i == j) shift[static_cast<std::size_t>(blk.vids[static_cast<std::size_t>(k)])] = blk.shift;
          ++k;
        }
      }
    }
    for (const auto& [vid, gen] : family.gens) {
      const double s = shift[static_cast<std::size_t>(vid)];
      if (s != 0.0) base_eff = base_eff + gen.scaled(s);
    }
  }

  // Structural support of the family: (monomial, entry) pairs where base or
  // any generator coefficient can be nonzero.
  auto base_cm = base_eff.coeff_map();
  std::map<Monomial, Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic>,
           GrlexLess>
      support;
  auto mark = [&](const Monomial& m, int i, int j) {
    auto [it, ins] = support.try_emplace(
        m, Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic>::Constant(
               p, p, false));
    it->second(i, j) = true;
    it->second(j, i) = true;
  };
  for (const auto& [m, mat] : base_cm) {
    for (int i = 0; i < p; ++i)
      for (int j = i; j < p; ++j)
        if (mat(i, j) != 0.0) mark(m, i, j);
  }
  std::vector<std::map<Monomial, Eigen::MatrixXd, GrlexLess>> gen_cms;
  gen_cms.reserve(family.gens.size());
  for (const auto& [vid, gen] : family.gens) {
    gen_cms.push_back(gen.coeff_map());
    for (const auto& [m, mat] : gen_cms.back()) {
      for (int i = 0; i < p; ++i)
        for (int j = i; j < p; ++j)
          if (mat(i, j) != 0.0) mark(m, i, j);
    }
  }

  // Unordered basis products, grouped by the product monomial.
  std::map<Monomial, std::vector<std::pair<int, int>>, GrlexLess> products;
  for (int a = 0; a < l; ++a) {
    for (int b = a; b < l; ++b) {
      products[tmpl.basis.mons[static_cast<std::size_t>(a)].times(
                   tmpl.basis.mons[static_cast<std::size_t>(b)])]
          .emplace_back(a, b);
    }
  }

  // Forced-zero row elimination: kill (m, i) when the diagonal coefficient
  // at (m^2, (i,i)) is structurally zero on the family side and the only
  // alive Gram contribution is Lambda[(m,i),(m,i)] itself.  Any feasible
  // Lambda then has a zero diagonal there, hence (PSD) a zero row.
  std::vector<std::vector<bool>> alive(
      static_cast<std::size_t>(l),
      std::vector<bool>(static_cast<std::size_t>(p), true));
  if (opts.prune) {
    bool changed = true;
    while (changed) {
      changed = false;
      for (int m = 0; m < l; ++m) {
        for (int i = 0; i < p; ++i) {
          if (!alive[static_cast<std::size_t>(m)][static_cast<std::size_t>(i)])
            continue;
          const Monomial sq =
              tmpl.basis.mons[static_cast<std::size_t>(m)].times(
                  tmpl.basis.mons[static_cast<std::size_t>(m)]);
          auto sup = support.find(sq);
          if (sup != support.end() && sup->second(i, i)) continue;
          bool other_pair = false;
          for (const auto& [a, b] : products[sq]) {
            if (a == b && a == m) continue;
            if (alive[static_cast<std::size_t>(a)][static_cast<std::size_t>(i)] &&
                alive[static_cast<std::size_t>(b)][static_cast<std::size_t>(i)]) {
              other_pair = true;
              break;
            }
          }
          if (!other_pair) {
            alive[static_cast<std::size_t>(m)][static_cast<std::size_t>(i)] =
                false;
            changed = true;
          }
        }
      }
    }
  }

  CompiledSos out;
  out.tmpl = tmpl;

  // Pruned Gram row numbering.
  std::vector<int> row_id(static_cast<std::size_t>(l * p), -1);
  for (int m = 0; m < l; ++m) {
    for (int i = 0; i < p; ++i) {
      if (alive[static_cast<std::size_t>(m)][static_cast<std::size_t>(i)]) {
        row_id[static_cast<std::size_t>(tmpl.row_index(m, i))] =
            static_cast<int>(out.alive_rows.size());
        out.alive_rows.push_back(tmpl.row_index(m, i));
      }
    }
  }
  out.lambda_dim = static_cast<int>(out.alive_rows.size());
  require(out.lambda_dim >= 1, "every Gram row was eliminated");

  // Decision-variable layout: [free theta][nonneg theta][theta psd][Lambda].
  out.theta_kind.assign(static_cast<std::size_t>(nv), 0);
  out.theta_slot.assign(static_cast<std::size_t>(nv), -1);
  out.theta_scale.assign(static_cast<std::size_t>(nv), 1.0);
  out.theta_shift.assign(static_cast<std::size_t>(nv), 0.0);

  sdp::ConeLayout cones;
  for (const auto& blk : family.psd_blocks) {
    int k = 0;
    for (int i = 0; i < blk.dim; ++i) {
      for (int j = i; j < blk.dim; ++j) {
        const int v = blk.vids[static_cast<std::size_t>(k)];
        out.theta_kind[static_cast<std::size_t>(v)] = 2;
        out.theta_scale[static_cast<std::size_t>(v)] =
            sdp::svec_entry_scale(i, j);
        out.theta_shift[static_cast<std::size_t>(v)] = i == j ? blk.shift : 0.0;
        ++k;
      }
    }
  }
  int nfree = 0, nnonneg = 0;
  for (int v = 0; v < nv; ++v) {
    if (out.theta_kind[static_cast<std::size_t>(v)] == 2) continue;
    if (family.vars[static_cast<std::size_t>(v)].nonneg) {
      out.theta_kind[static_cast<std::size_t>(v)] = 1;
      ++nnonneg;
    } else {
      ++nfree;
    }
  }
  cones.num_free = nfree;
  cones.num_nonneg = nnonneg;
  // Slots: free then nonneg in declaration order.
  {
    int fpos = 0, npos = nfree;
    for (int v = 0; v < nv; ++v) {
      if (out.theta_kind[static_cast<std::size_t>(v)] == 0) {
        out.theta_slot[static_cast<std::size_t>(v)] = fpos++;
      } else if (out.theta_kind[static_cast<std::size_t>(v)] == 1) {
        out.theta_slot[static_cast<std::size_t>(v)] = npos++;
      }
    }
  }
  int offset = nfree + nnonneg;
  for (const auto& blk : family.psd_blocks) {
    cones.psd_dims.push_back(blk.dim);
    int k = 0;
    for (int i = 0; i < blk.dim; ++i) {
      for (int j = i; j < blk.dim; ++j) {
        out.theta_slot[static_cast<std::size_t>(
            blk.vids[static_cast<std::size_t>(k)])] =
            offset + sdp::svec_index(blk.dim, i, j);
        ++k;
      }
    }
    offset += sdp::svec_dim(blk.dim);
  }
  cones.psd_dims.push_back(out.lambda_dim);
  out.lambda_offset = offset;

  // Constraint keys.
  std::map<Key, int, KeyLess> keys;
  auto ensure_key = [&](const Monomial& m, int i, int j) {
    Key k{m, std::min(i, j), std::max(i, j)};
    keys.try_emplace(k, 0);
  };
  for (const auto& [prod, pairs] : products) {
    for (const auto& [a, b] : pairs) {
      for (int i = 0; i < p; ++i) {
        for (int j = i; j < p; ++j) {
          const bool ab =
              alive[static_cast<std::size_t>(a)][static_cast<std::size_t>(i)] &&
              alive[static_cast<std::size_t>(b)][static_cast<std::size_t>(j)];
          const bool ba =
              alive[static_cast<std::size_t>(b)][static_cast<std::size_t>(i)] &&
              alive[static_cast<std::size_t>(a)][static_cast<std::size_t>(j)];
          if (ab || ba) ensure_key(prod, i, j);
        }
      }
    }
  }
  for (const auto& [m, mask] : support) {
    for (int i = 0; i < p; ++i)
      for (int j = i; j < p; ++j)
        if (mask(i, j)) ensure_key(m, i, j);
  }
  int row = 0;
  for (auto& [k, idx] : keys) idx = row++;
  const int m_eq = row;

  // Assemble triplets and rhs.
  std::vector<Eigen::Triplet<double>> trips;
  Eigen::VectorXd h = Eigen::VectorXd::Zero(m_eq);
  const int lam_off = out.lambda_offset;
  auto lam_svec_slot = [&](int ra, int rb) {
    const int lo = std::min(ra, rb), hi = std::max(ra, rb);
    return lam_off + sdp::svec_index(out.lambda_dim, lo, hi);
  };

  for (const auto& [key, r] : keys) {
    // Gram side.
    std::map<int, double> grow;  // slot -> weight
    auto add_entry = [&](int ra, int rb) {
      const double w = ra == rb ? 1.0 : 1.0 / kSqrt2;
      grow[lam_svec_slot(ra, rb)] += w;
    };
    auto pit = products.find(key.mono);
    if (pit != products.end()) {
      for (const auto& [a, b] : pit->second) {
        const bool ai = alive[static_cast<std::size_t>(a)][static_cast<std::size_t>(key.i)];
        const bool aj = alive[static_cast<std::size_t>(a)][static_cast<std::size_t>(key.j)];
        const bool bi = alive[static_cast<std::size_t>(b)][static_cast<std::size_t>(key.i)];
        const bool bj = alive[static_cast<std::size_t>(b)][static_cast<std::size_t>(key.j)];
        if (a == b) {
          if (ai && aj) {
            add_entry(row_id[static_cast<std::size_t>(tmpl.row_index(a, key.i))],
                      row_id[static_cast<std::size_t>(tmpl.row_index(a, key.j))]);
          }
        } else {
          if (ai && bj) {
            add_entry(row_id[static_cast<std::size_t>(tmpl.row_index(a, key.i))],
                      row_id[static_cast<std::size_t>(tmpl.row_index(b, key.j))]);
          }
          if (bi && aj) {
            add_entry(row_id[static_cast<std::size_t>(tmpl.row_index(b, key.i))],
                      row_id[static_cast<std::size_t>(tmpl.row_index(a, key.j))]);
          }
        }
      }
    }
    for (const auto& [slot, w] : grow) {
      trips.emplace_back(r, slot, w);
    }
    // Family side: Gram(Lambda) - sum theta_v gen_v = base_eff.
    for (std::size_t g = 0; g < family.gens.size(); ++g) {
      const int vid = family.gens[g].first;
      auto it = gen_cms[g].find(key.mono);
      if (it == gen_cms[g].end()) continue;
      const double c = it->second(key.i, key.j);
      if (c == 0.0) continue;
      trips.emplace_back(r, out.theta_slot[static_cast<std::size_t>(vid)],
                         -c * out.theta_scale[static_cast<std::size_t>(vid)]);
    }
    auto bit = base_cm.find(key.mono);
    if (bit != base_cm.end()) h[r] = bit->second(key.i, key.j);
  }

  out.problem.cones = cones;
  out.problem.G.resize(m_eq, cones.dim());
  out.problem.G.setFromTriplets(trips.begin(), trips.end());
  out.problem.h = h;
  out.problem.validate();
  return out;
}

Eigen::VectorXd CompiledSos::extract_theta(const Eigen::VectorXd& x) const {
  Eigen::VectorXd theta(theta_kind.size());
  for (std::size_t v = 0; v < theta_kind.size(); ++v) {
    theta[static_cast<Eigen::Index>(v)] =
        theta_shift[v] + theta_scale[v] * x[theta_slot[v]];
  }
  return theta;
}

Eigen::MatrixXd CompiledSos::extract_lambda(const Eigen::VectorXd& x) const {
  const Eigen::MatrixXd small =
      sdp::smat(x.segment(lambda_offset, sdp::svec_dim(lambda_dim)));
  Eigen::MatrixXd full =
      Eigen::MatrixXd::Zero(tmpl.gram_dim(), tmpl.gram_dim());
  for (int a = 0; a < lambda_dim; ++a) {
    for (int b = 0; b < lambda_dim; ++b) {
      full(alive_rows[static_cast<std::size_t>(a)],
           alive_rows[static_cast<std::size_t>(b)]) = small(a, b);
    }
  }
  return full;
}

// ---------------------------------------------------------------------------
// verify / helpers

VerifyResult verify_certificate(const poly::PolyMatrix& s,
                                const Eigen::MatrixXd& lambda,
                                const GramTemplate& tmpl) {
  require(lambda.rows() == lambda.cols(), "lambda must be square");
  require((lambda - lambda.transpose()).cwiseAbs().maxCoeff() <=
              1e-10 * std::max(1.0, lambda.cwiseAbs().maxCoeff()),
          "lambda must be symmetric");
  VerifyResult r;
  const PolyMatrix diff = s - tmpl.gram_poly(lambda);
  for (const auto& [m, mat] : diff.coeff_map()) {
    r.max_coeff_residual =
        std::max(r.max_coeff_residual, mat.cwiseAbs().maxCoeff());
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(lambda);
  r.lambda_min_eig = eig.eigenvalues().minCoeff();
  return r;
}

AffinePolyFamily scalar_family(const poly::Polynomial& p) {
  AffinePolyFamily fam;
  fam.nvars = p.nvars();
  fam.size = 1;
  fam.base = poly::PolyMatrix(1, 1, p.nvars());
  fam.base(0, 0) = p;
  return fam;
}

}  // namespace ratsyn::sosc
