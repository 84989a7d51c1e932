#include "ratsyn/model.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>
#include <stdexcept>

#include "nlohmann/json.hpp"

namespace ratsyn::model {

namespace {

[[noreturn]] void fail(const std::string& msg) {
  throw std::invalid_argument("model: " + msg);
}

void require(bool ok, const std::string& msg) {
  if (!ok) fail(msg);
}

double eval_entry(const RationalEntry& e, const Eigen::VectorXd& x) {
  const double den = e.den.eval(x);
  if (std::abs(den) <= 1e-9) {
    throw std::domain_error("model: denominator magnitude <= 1e-9 at x");
  }
  return e.num.eval(x) / den;
}

}  // namespace

void RationalSystem::validate() const {
  require(n >= 1 && m >= 0, "need n >= 1 and m >= 0");
  require(static_cast<int>(drift.size()) == n, "drift needs n entries");
  require(static_cast<int>(input.size()) == n, "input needs n rows");
  const Eigen::VectorXd origin = Eigen::VectorXd::Zero(n);
  for (int i = 0; i < n; ++i) {
    const auto& d = drift[static_cast<std::size_t>(i)];
    require(d.num.nvars() == n && d.den.nvars() == n,
            "drift entry over wrong variable count");
    require(!d.den.is_zero(), "drift denominator is the zero polynomial");
    require(std::abs(d.den.eval(origin)) > 1e-9,
            "drift denominator vanishes at the origin");
    require(std::abs(d.num.eval(origin)) == 0.0,
            "drift numerator nonzero at the origin (steady state required)");
    require(static_cast<int>(input[static_cast<std::size_t>(i)].size()) == m,
            "input row needs m entries");
    for (int j = 0; j < m; ++j) {
      const auto& g = input[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
      require(g.num.nvars() == n && g.den.nvars() == n,
              "input entry over wrong variable count");
      require(!g.den.is_zero(), "input denominator is the zero polynomial");
      require(std::abs(g.den.eval(origin)) > 1e-9,
              "input denominator vanishes at the origin");
    }
  }
}

PolyForm clear_denominators(const RationalSystem& sys) {
  sys.validate();
  const int n = sys.n;
  const int m = sys.m;

  // Full denominator product (no common-factor simplification).
  poly::Polynomial praw = poly::Polynomial::constant(n, 1.0);
  for (const auto& d : sys.drift) praw = praw * d.den;
  for (const auto& row : sys.input)
    for (const auto& g : row) praw = praw * g.den;

  const double p0 = praw.eval(Eigen::VectorXd::Zero(n));
  require(std::abs(p0) > 1e-9, "denominator product vanishes at the origin");

  // Cleared numerators, each divided exactly by its own denominator and
  // normalized so the global denominator has p(0) = 1.
  std::vector<poly::Polynomial> fclear;
  fclear.reserve(static_cast<std::size_t>(n));
  for (const auto& d : sys.drift) {
    auto q = praw.divide_exact(d.den);
    require(q.has_value(), "internal: drift denominator division not exact");
    fclear.push_back((d.num * *q).scaled(1.0 / p0));
  }
  std::vector<std::vector<poly::Polynomial>> gclear(
      static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < m; ++j) {
      const auto& g = sys.input[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
      auto q = praw.divide_exact(g.den);
      require(q.has_value(), "internal: input denominator division not exact");
      gclear[static_cast<std::size_t>(i)].push_back(
          (g.num * *q).scaled(1.0 / p0));
    }
  }

  PolyForm form;
  form.p = praw.scaled(1.0 / p0);

  // Z: the state monomials x1..xn plus every monomial of the cleared drift.
  std::set<poly::Monomial, poly::GrlexLess> zset;
  for (int i = 0; i < n; ++i) zset.insert(poly::Monomial::var(n, i));
  for (const auto& f : fclear)
    for (const auto& [mono, c] : f.terms()) zset.insert(mono);
  form.basis.Z.nvars = n;
  form.basis.Z.role = poly::BasisRole::kZ;
  form.basis.Z.mons.assign(zset.begin(), zset.end());
  form.basis.Z.canonicalize();
  require(form.basis.Z.min_degree() >= 1,
          "internal: cleared drift has a constant term");

  form.A_true = Eigen::MatrixXd::Zero(n, form.basis.Z.size());
  for (int i = 0; i < n; ++i) {
    for (const auto& [mono, c] : fclear[static_cast<std::size_t>(i)].terms()) {
      form.A_true(i, form.basis.Z.index_of(mono)) = c;
    }
  }

  // H and B: per input column, the distinct cleared-input monomials each
  // become one H row carrying that monomial in that column.
  std::vector<std::pair<int, poly::Monomial>> hrows;  // (input column, mono)
  for (int j = 0; j < m; ++j) {
    std::set<poly::Monomial, poly::GrlexLess> col;
    for (int i = 0; i < n; ++i)
      for (const auto& [mono, c] :
           gclear[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)].terms())
        col.insert(mono);
    for (const auto& mono : col) hrows.emplace_back(j, mono);
  }
  const int nu = static_cast<int>(hrows.size());
  form.basis.H = poly::PolyMatrix::zero(nu, m, n);
  form.B_true = Eigen::MatrixXd::Zero(n, nu);
  for (int k = 0; k < nu; ++k) {
    const auto& [j, mono] = hrows[static_cast<std::size_t>(k)];
    form.basis.H(k, j) = poly::Polynomial::monomial(mono);
    for (int i = 0; i < n; ++i) {
      form.B_true(i, k) =
          gclear[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)]
              .coefficient(mono);
    }
  }

  // Z_p and P: the nonconstant part of p, so [P 1][Z_p; 1] = p exactly.
  form.basis.Zp.nvars = n;
  form.basis.Zp.role = poly::BasisRole::kZp;
  for (const auto& [mono, c] : form.p.terms()) {
    if (!mono.is_unit()) form.basis.Zp.mons.push_back(mono);
  }
  form.basis.Zp.canonicalize();
  form.P_true = Eigen::MatrixXd::Zero(1, form.basis.Zp.size());
  for (int k = 0; k < form.basis.Zp.size(); ++k) {
    form.P_true(0, k) =
        form.p.coefficient(form.basis.Zp.mons[static_cast<std::size_t>(k)]);
  }

  form.basis.ZK = form.basis.Z;
  form.basis.ZK.role = poly::BasisRole::kZK;
  return form;
}

Eigen::VectorXd eval_dynamics(const RationalSystem& sys,
                              const Eigen::VectorXd& x,
                              const Eigen::VectorXd& u) {
  require(x.size() == sys.n, "state dimension mismatch");
  require(u.size() == sys.m, "input dimension mismatch");
  Eigen::VectorXd xdot(sys.n);
  for (int i = 0; i < sys.n; ++i) {
    double v = eval_entry(sys.drift[static_cast<std::size_t>(i)], x);
    for (int j = 0; j < sys.m; ++j) {
      v += eval_entry(
               sys.input[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)],
               x) *
           u[j];
    }
    xdot[i] = v;
  }
  return xdot;
}

DenominatorReport validate_denominators(const RationalSystem& sys,
                                        const Box& box,
                                        int points_per_axis) {
  sys.validate();
  require(box.lo.size() == sys.n && box.hi.size() == sys.n,
          "box dimension mismatch");
  require(points_per_axis >= 2, "need at least 2 points per axis");

  poly::Polynomial praw = poly::Polynomial::constant(sys.n, 1.0);
  for (const auto& d : sys.drift) praw = praw * d.den;
  for (const auto& row : sys.input)
    for (const auto& g : row) praw = praw * g.den;

  DenominatorReport rep;
  if (praw.is_constant()) {
    rep.global_claim = true;
    rep.box_min = std::abs(praw.eval(Eigen::VectorXd::Zero(sys.n)));
    rep.argmin = box.lo;
    return rep;
  }

  // Odometer walk over the dense grid.
  std::vector<int> idx(static_cast<std::size_t>(sys.n), 0);
  Eigen::VectorXd x(sys.n);
  bool seen_pos = false, seen_neg = false;
  rep.box_min = std::numeric_limits<double>::infinity();
  for (;;) {
    for (int a = 0; a < sys.n; ++a) {
      const double t = static_cast<double>(idx[static_cast<std::size_t>(a)]) /
                       static_cast<double>(points_per_axis - 1);
      x[a] = box.lo[a] + t * (box.hi[a] - box.lo[a]);
    }
    const double v = praw.eval(x);
    if (v > 0.0) seen_pos = true;
    if (v < 0.0) seen_neg = true;
    if (std::abs(v) < rep.box_min) {
      rep.box_min = std::abs(v);
      rep.argmin = x;
    }
    int a = 0;
    while (a < sys.n && ++idx[static_cast<std::size_t>(a)] == points_per_axis) {
      idx[static_cast<std::size_t>(a)] = 0;
      ++a;
    }
    if (a == sys.n) break;
  }
  rep.sign_change = seen_pos && seen_neg;
  if (rep.sign_change || rep.box_min == 0.0) rep.global_claim = false;
  return rep;
}

PolyForm augment_basis(const PolyForm& form,
                       const std::vector<poly::Monomial>& extra_z) {
  const int n = form.basis.Z.nvars;
  std::set<poly::Monomial, poly::GrlexLess> zset(form.basis.Z.mons.begin(),
                                                 form.basis.Z.mons.end());
  for (const auto& mono : extra_z) {
    require(mono.nvars() == n, "extra monomial over wrong variable count");
    require(mono.degree() >= 1, "extra monomial must have degree >= 1");
    zset.insert(mono);
  }
  PolyForm out = form;
  out.basis.Z.mons.assign(zset.begin(), zset.end());
  out.basis.Z.canonicalize();
  out.A_true = Eigen::MatrixXd::Zero(form.A_true.rows(), out.basis.Z.size());
  for (int k = 0; k < form.basis.Z.size(); ++k) {
    out.A_true.col(out.basis.Z.index_of(
        form.basis.Z.mons[static_cast<std::size_t>(k)])) = form.A_true.col(k);
  }
  if (form.basis.ZK.mons == form.basis.Z.mons) {
    out.basis.ZK = out.basis.Z;
    out.basis.ZK.role = poly::BasisRole::kZK;
  }
  return out;
}

namespace {

RationalEntry entry_from(const std::string& num, const std::string& den,
                         int n) {
  return {poly::parse_poly(num, n), poly::parse_poly(den, n)};
}

}  // namespace

RationalSystem parse_system(const std::string& json_text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(json_text);
  } catch (const nlohmann::json::exception& e) {
    fail(std::string("system file is not valid JSON: ") + e.what());
  }
  static const std::set<std::string> known = {
      "n", "m", "drift_num", "drift_den", "input_num", "input_den"};
  for (const auto& [key, val] : j.items()) {
    require(known.count(key) > 0, "unknown key in system file: " + key);
  }
  require(j.contains("n") && j.contains("m"), "system file needs n and m");
  RationalSystem sys;
  sys.n = j.at("n").get<int>();
  sys.m = j.at("m").get<int>();
  require(sys.n >= 1 && sys.m >= 0, "need n >= 1 and m >= 0");
  require(j.contains("drift_num"), "system file needs drift_num");
  const auto& dn = j.at("drift_num");
  require(dn.is_array() && static_cast<int>(dn.size()) == sys.n,
          "drift_num needs n entries");
  for (int i = 0; i < sys.n; ++i) {
    std::string den = "1";
    if (j.contains("drift_den")) {
      const auto& dd = j.at("drift_den");
      require(dd.is_array() && static_cast<int>(dd.size()) == sys.n,
              "drift_den needs n entries");
      den = dd.at(static_cast<std::size_t>(i)).get<std::string>();
    }
    sys.drift.push_back(entry_from(
        dn.at(static_cast<std::size_t>(i)).get<std::string>(), den, sys.n));
  }
  sys.input.resize(static_cast<std::size_t>(sys.n));
  if (sys.m > 0) {
    require(j.contains("input_num"), "system file needs input_num");
  }
  for (int i = 0; i < sys.n; ++i) {
    for (int jj = 0; jj < sys.m; ++jj) {
      const auto& in = j.at("input_num");
      require(in.is_array() && static_cast<int>(in.size()) == sys.n,
              "input_num needs n rows");
      const auto& row = in.at(static_cast<std::size_t>(i));
      require(row.is_array() && static_cast<int>(row.size()) == sys.m,
              "input_num rows need m entries");
      std::string den = "1";
      if (j.contains("input_den")) {
        const auto& ed = j.at("input_den");
        require(ed.is_array() && static_cast<int>(ed.size()) == sys.n,
                "input_den needs n rows");
        const auto& drow = ed.at(static_cast<std::size_t>(i));
        require(drow.is_array() && static_cast<int>(drow.size()) == sys.m,
                "input_den rows need m entries");
        den = drow.at(static_cast<std::size_t>(jj)).get<std::string>();
      }
      sys.input[static_cast<std::size_t>(i)].push_back(entry_from(
          row.at(static_cast<std::size_t>(jj)).get<std::string>(), den,
          sys.n));
    }
  }
  sys.validate();
  return sys;
}

std::string format_system(const RationalSystem& sys) {
  nlohmann::json j;
  j["n"] = sys.n;
  j["m"] = sys.m;
  j["drift_num"] = nlohmann::json::array();
  j["drift_den"] = nlohmann::json::array();
  j["input_num"] = nlohmann::json::array();
  j["input_den"] = nlohmann::json::array();
  for (int i = 0; i < sys.n; ++i) {
    j["drift_num"].push_back(
        poly::to_string(sys.drift[static_cast<std::size_t>(i)].num));
    j["drift_den"].push_back(
        poly::to_string(sys.drift[static_cast<std::size_t>(i)].den));
    nlohmann::json nrow = nlohmann::json::array();
    nlohmann::json drow = nlohmann::json::array();
    for (int jj = 0; jj < sys.m; ++jj) {
      const auto& e =
          sys.input[static_cast<std::size_t>(i)][static_cast<std::size_t>(jj)];
      nrow.push_back(poly::to_string(e.num));
      drow.push_back(poly::to_string(e.den));
    }
    j["input_num"].push_back(nrow);
    j["input_den"].push_back(drow);
  }
  return j.dump(2) + "\n";
}

RationalSystem load_system(const std::string& path) {
  std::ifstream in(path);
  require(in.good(), "cannot open system file: " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_system(ss.str());
}

void save_system(const RationalSystem& sys, const std::string& path) {
  std::ofstream out(path);
  require(out.good(), "cannot open output file: " + path);
  out << format_system(sys);
}

}  // namespace ratsyn::model
