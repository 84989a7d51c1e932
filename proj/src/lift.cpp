#include "ratsyn/lift.hpp"

#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>

#include "nlohmann/json.hpp"

namespace ratsyn::lift {

namespace {

[[noreturn]] void fail(const std::string& msg) {
  throw std::invalid_argument("lift: " + msg);
}

void require(bool ok, const std::string& msg) {
  if (!ok) fail(msg);
}

// Partner required by each function's derivative (derivatives of sin, ln
// and sqrt introduce cos, 1/x and 1/sqrt(x); the rest close over
// themselves).  The paper's table lists the sin derivative with a minus
// sign, but d/dt sin = +cos * xdot, which is also what its own pendulum
// example uses; the implementation follows the chain rule.
const std::map<std::string, std::string>& companion_table() {
  static const std::map<std::string, std::string> t = {
      {"exp", ""},     {"recip", ""},       {"sin", "cos"},
      {"cos", "sin"},  {"ln", "inv"},       {"inv", ""},
      {"sqrt", "invsqrt"}, {"invsqrt", ""}, {"tanh", ""}};
  return t;
}

// Index of the declaration matching (fn, arg), or -1.
int find_decl(const std::vector<LiftDecl>& decls, const std::string& fn,
              int arg) {
  for (std::size_t i = 0; i < decls.size(); ++i) {
    if (decls[i].fn == fn && decls[i].arg == arg)
      return static_cast<int>(i);
  }
  return -1;
}

// Chain-rule factor of coordinate self (extended index), given the partner
// coordinate where one is needed.
poly::Polynomial derivative_factor(const std::string& fn, int self, int comp,
                                   int nvars) {
  using poly::Polynomial;
  auto xs = Polynomial::var(nvars, self);
  if (fn == "exp") return xs;
  if (fn == "recip" || fn == "inv") return -(xs * xs);
  if (fn == "sin") return Polynomial::var(nvars, comp);
  if (fn == "cos") return -Polynomial::var(nvars, comp);
  if (fn == "ln") return Polynomial::var(nvars, comp);
  if (fn == "sqrt") return Polynomial::var(nvars, comp).scaled(0.5);
  if (fn == "invsqrt") return (xs * xs * xs).scaled(-0.5);
  if (fn == "tanh") return Polynomial::constant(nvars, 1.0) - xs * xs;
  fail("unknown basis function: " + fn);
}

double eval_fn(const LiftDecl& d, double v) {
  if (d.fn == "exp") return std::exp(v);
  if (d.fn == "recip") {
    if (std::abs(v + d.param) <= 1e-12)
      throw std::domain_error("lift: recip evaluated at its pole");
    return 1.0 / (v + d.param);
  }
  if (d.fn == "sin") return std::sin(v);
  if (d.fn == "cos") return std::cos(v);
  if (d.fn == "ln") {
    if (v <= 0.0) throw std::domain_error("lift: ln of a nonpositive value");
    return std::log(v);
  }
  if (d.fn == "inv") {
    if (std::abs(v) <= 1e-12)
      throw std::domain_error("lift: inv evaluated at zero");
    return 1.0 / v;
  }
  if (d.fn == "sqrt") {
    if (v < 0.0) throw std::domain_error("lift: sqrt of a negative value");
    return std::sqrt(v);
  }
  if (d.fn == "invsqrt") {
    if (v <= 0.0)
      throw std::domain_error("lift: invsqrt of a nonpositive value");
    return 1.0 / std::sqrt(v);
  }
  if (d.fn == "tanh") return std::tanh(v);
  fail("unknown basis function: " + d.fn);
}

}  // namespace

std::vector<std::string> check_closure(const std::vector<LiftDecl>& decls) {
  std::vector<std::string> missing;
  for (const auto& d : decls) {
    auto it = companion_table().find(d.fn);
    if (it == companion_table().end()) {
      missing.push_back("unknown:" + d.fn);
      continue;
    }
    if (!it->second.empty() && find_decl(decls, it->second, d.arg) < 0) {
      missing.push_back(it->second);
    }
  }
  return missing;
}

void SymbolicSystem::validate() const {
  require(l >= 1 && m >= 0, "need l >= 1 and m >= 0");
  const int n = extended_dim();
  require(f.rows() == l && f.cols() == 1, "f must be l x 1");
  require(f.nvars() == n, "f must be over the extended coordinates");
  if (m > 0) {
    require(g.rows() == l && g.cols() == m, "g must be l x m");
    require(g.nvars() == n, "g must be over the extended coordinates");
  }
  std::set<std::pair<std::string, int>> seen;
  for (const auto& d : lifts) {
    require(companion_table().count(d.fn) > 0,
            "unknown basis function: " + d.fn);
    require(d.arg >= 0 && d.arg < l,
            "lift argument out of range: " + std::to_string(d.arg + 1));
    require(seen.emplace(d.fn, d.arg).second,
            "duplicate lift declaration: " + d.fn);
  }
  auto missing = check_closure(lifts);
  if (!missing.empty()) {
    std::string names;
    for (const auto& s : missing) names += (names.empty() ? "" : ", ") + s;
    fail("rule set is not closed, missing: " + names);
  }
}

LiftedSystem polynomialize(const SymbolicSystem& sys) {
  sys.validate();
  const int l = sys.l;
  const int n = sys.extended_dim();
  const int m = sys.m;
  const int k = static_cast<int>(sys.lifts.size());

  LiftedSystem out;
  out.original_dim = l;
  out.extended_dim = n;
  out.lifts = sys.lifts;

  // Chain-rule factors, substituted into extended coordinates.
  for (int i = 0; i < k; ++i) {
    const auto& d = sys.lifts[static_cast<std::size_t>(i)];
    const std::string comp_name = companion_table().at(d.fn);
    int comp = -1;
    if (!comp_name.empty()) {
      comp = l + find_decl(sys.lifts, comp_name, d.arg);
    }
    out.dexpr.push_back(derivative_factor(d.fn, l + i, comp, n));
  }

  // Extended polynomial plant: original rows as declared, lifted rows by
  // chain rule xdot_{l+i} = dexpr_i * (f_arg + g_arg u).
  model::RationalSystem ext;
  ext.n = n;
  ext.m = m;
  const auto one = poly::Polynomial::constant(n, 1.0);
  ext.drift.resize(static_cast<std::size_t>(n));
  ext.input.resize(static_cast<std::size_t>(n));
  for (int i = 0; i < l; ++i) {
    ext.drift[static_cast<std::size_t>(i)] = {sys.f(i, 0), one};
    for (int j = 0; j < m; ++j) {
      ext.input[static_cast<std::size_t>(i)].push_back({sys.g(i, j), one});
    }
  }
  for (int i = 0; i < k; ++i) {
    const int a = sys.lifts[static_cast<std::size_t>(i)].arg;
    const auto& dx = out.dexpr[static_cast<std::size_t>(i)];
    ext.drift[static_cast<std::size_t>(l + i)] = {dx * sys.f(a, 0), one};
    for (int j = 0; j < m; ++j) {
      ext.input[static_cast<std::size_t>(l + i)].push_back(
          {dx * sys.g(a, j), one});
    }
  }

  try {
    ext.validate();
  } catch (const std::invalid_argument& e) {
    fail(std::string("extended origin is not an equilibrium (") + e.what() +
         ")");
  }
  out.poly_system = ext;
  out.dynamics = model::clear_denominators(ext);
  return out;
}

Eigen::VectorXd embed(const LiftedSystem& sys, const Eigen::VectorXd& xi) {
  if (xi.size() != sys.original_dim) {
    fail("embedding input has wrong dimension");
  }
  if (!xi.allFinite()) {
    throw std::domain_error("lift: embedding input is not finite");
  }
  Eigen::VectorXd x(sys.extended_dim);
  x.head(sys.original_dim) = xi;
  for (std::size_t i = 0; i < sys.lifts.size(); ++i) {
    const auto& d = sys.lifts[i];
    x[sys.original_dim + static_cast<int>(i)] = eval_fn(d, xi[d.arg]);
  }
  return x;
}

Eigen::VectorXd original_dynamics(const LiftedSystem& sys,
                                  const Eigen::VectorXd& xi,
                                  const Eigen::VectorXd& u) {
  return lifted_dynamics(sys, xi, u).head(sys.original_dim);
}

Eigen::VectorXd lifted_dynamics(const LiftedSystem& sys,
                                const Eigen::VectorXd& xi,
                                const Eigen::VectorXd& u) {
  const Eigen::VectorXd x = embed(sys, xi);
  return model::eval_dynamics(sys.poly_system, x, u);
}

SymbolicSystem parse_symbolic(const std::string& json_text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(json_text);
  } catch (const nlohmann::json::exception& e) {
    fail(std::string("lift file is not valid JSON: ") + e.what());
  }
  static const std::set<std::string> known = {"l", "m", "drift_num",
                                              "input_num", "lift"};
  for (const auto& [key, val] : j.items()) {
    require(known.count(key) > 0, "unknown key in lift file: " + key);
  }
  require(j.contains("l") && j.contains("m"), "lift file needs l and m");
  SymbolicSystem sys;
  sys.l = j.at("l").get<int>();
  sys.m = j.at("m").get<int>();
  require(sys.l >= 1 && sys.m >= 0, "need l >= 1 and m >= 0");
  if (j.contains("lift")) {
    for (const auto& entry : j.at("lift")) {
      LiftDecl d;
      d.fn = entry.at("fn").get<std::string>();
      d.arg = entry.at("arg").get<int>() - 1;  // one-based in files
      if (entry.contains("param")) d.param = entry.at("param").get<double>();
      sys.lifts.push_back(d);
    }
  }
  const int n = sys.extended_dim();
  require(j.contains("drift_num"), "lift file needs drift_num");
  const auto& dn = j.at("drift_num");
  require(dn.is_array() && static_cast<int>(dn.size()) == sys.l,
          "drift_num needs l entries");
  sys.f = poly::PolyMatrix(sys.l, 1, n);
  for (int i = 0; i < sys.l; ++i) {
    sys.f(i, 0) = poly::parse_poly(
        dn.at(static_cast<std::size_t>(i)).get<std::string>(), n);
  }
  sys.g = poly::PolyMatrix(sys.l, std::max(sys.m, 0), n);
  if (sys.m > 0) {
    require(j.contains("input_num"), "lift file needs input_num");
    const auto& in = j.at("input_num");
    require(in.is_array() && static_cast<int>(in.size()) == sys.l,
            "input_num needs l rows");
    for (int i = 0; i < sys.l; ++i) {
      const auto& row = in.at(static_cast<std::size_t>(i));
      require(row.is_array() && static_cast<int>(row.size()) == sys.m,
              "input_num rows need m entries");
      for (int jj = 0; jj < sys.m; ++jj) {
        sys.g(i, jj) = poly::parse_poly(
            row.at(static_cast<std::size_t>(jj)).get<std::string>(), n);
      }
    }
  }
  sys.validate();
  return sys;
}

std::string format_symbolic(const SymbolicSystem& sys) {
  nlohmann::json j;
  j["l"] = sys.l;
  j["m"] = sys.m;
  j["lift"] = nlohmann::json::array();
  for (const auto& d : sys.lifts) {
    nlohmann::json e;
    e["fn"] = d.fn;
    e["arg"] = d.arg + 1;
    if (d.param != 0.0) e["param"] = d.param;
    j["lift"].push_back(e);
  }
  j["drift_num"] = nlohmann::json::array();
  for (int i = 0; i < sys.l; ++i) {
    j["drift_num"].push_back(poly::to_string(sys.f(i, 0)));
  }
  j["input_num"] = nlohmann::json::array();
  for (int i = 0; i < sys.l; ++i) {
    nlohmann::json row = nlohmann::json::array();
    for (int jj = 0; jj < sys.m; ++jj) {
      row.push_back(poly::to_string(sys.g(i, jj)));
    }
    j["input_num"].push_back(row);
  }
  return j.dump(2) + "\n";
}

SymbolicSystem load_symbolic(const std::string& path) {
  std::ifstream in(path);
  require(in.good(), "cannot open lift file: " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_symbolic(ss.str());
}

void save_symbolic(const SymbolicSystem& sys, const std::string& path) {
  std::ofstream out(path);
  require(out.good(), "cannot open output file: " + path);
  out << format_symbolic(sys);
}

}  // namespace ratsyn::lift
