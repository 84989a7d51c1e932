#include "ratsyn/poly.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <limits>
#include <numeric>
#include <set>
#include <sstream>
#include <stdexcept>

namespace ratsyn::poly {

namespace {

void require(bool cond, const std::string& msg) {
  if (!cond) throw std::invalid_argument("poly: " + msg);
}

}  // namespace

// ---------------------------------------------------------------------------
// Monomial

Monomial::Monomial(std::vector<int> exps) : exps_(std::move(exps)) {
  for (int e : exps_) require(e >= 0, "negative exponent");
}

Monomial Monomial::unit(int nvars) {
  require(nvars >= 0, "negative nvars");
  return Monomial(std::vector<int>(static_cast<std::size_t>(nvars), 0));
}

Monomial Monomial::var(int nvars, int idx, int power) {
  require(idx >= 0 && idx < nvars, "variable index out of range");
  require(power >= 1, "variable power must be >= 1");
  std::vector<int> e(static_cast<std::size_t>(nvars), 0);
  e[static_cast<std::size_t>(idx)] = power;
  return Monomial(std::move(e));
}

int Monomial::degree() const {
  return std::accumulate(exps_.begin(), exps_.end(), 0);
}

Monomial Monomial::times(const Monomial& other) const {
  require(nvars() == other.nvars(), "nvars mismatch");
  std::vector<int> e(exps_);
  for (std::size_t i = 0; i < e.size(); ++i) e[i] += other.exps_[i];
  return Monomial(std::move(e));
}

std::optional<Monomial> Monomial::divide(const Monomial& other) const {
  require(nvars() == other.nvars(), "nvars mismatch");
  std::vector<int> e(exps_);
  for (std::size_t i = 0; i < e.size(); ++i) {
    e[i] -= other.exps_[i];
    if (e[i] < 0) return std::nullopt;
  }
  return Monomial(std::move(e));
}

double Monomial::eval(const Eigen::VectorXd& x) const {
  require(x.size() == nvars(), "eval point dimension mismatch");
  double v = 1.0;
  for (std::size_t i = 0; i < exps_.size(); ++i) {
    for (int k = 0; k < exps_[i]; ++k) v *= x[static_cast<Eigen::Index>(i)];
  }
  return v;
}

bool GrlexLess::operator()(const Monomial& a, const Monomial& b) const {
  require(a.nvars() == b.nvars(), "order on mixed nvars");
  const int da = a.degree(), db = b.degree();
  if (da != db) return da < db;
  // Within a degree, a monomial with more weight on earlier variables comes
  // first, so "a before b" means a's exponent vector is lexicographically
  // larger.
  return std::lexicographical_compare(b.exps().begin(), b.exps().end(),
                                      a.exps().begin(), a.exps().end());
}

// ---------------------------------------------------------------------------
// Polynomial

Polynomial Polynomial::constant(int nvars, double c) {
  Polynomial p(nvars);
  p.add_term(Monomial::unit(nvars), c);
  return p;
}

Polynomial Polynomial::monomial(const Monomial& m, double c) {
  Polynomial p(m.nvars());
  p.add_term(m, c);
  return p;
}

Polynomial Polynomial::var(int nvars, int idx) {
  return monomial(Monomial::var(nvars, idx));
}

bool Polynomial::is_constant() const {
  return terms_.empty() ||
         (terms_.size() == 1 && terms_.begin()->first.is_unit());
}

int Polynomial::degree() const {
  if (terms_.empty()) return -1;
  return terms_.rbegin()->first.degree();
}

double Polynomial::coefficient(const Monomial& m) const {
  auto it = terms_.find(m);
  return it == terms_.end() ? 0.0 : it->second;
}

void Polynomial::add_term(const Monomial& m, double c) {
  require(m.nvars() == nvars_, "nvars mismatch");
  if (c == 0.0) return;
  auto [it, inserted] = terms_.try_emplace(m, c);
  if (!inserted) {
    it->second += c;
    if (it->second == 0.0) terms_.erase(it);
  }
}

Polynomial& Polynomial::operator+=(const Polynomial& other) {
  require(nvars_ == other.nvars_, "nvars mismatch");
  for (const auto& [m, c] : other.terms_) add_term(m, c);
  return *this;
}

Polynomial& Polynomial::operator-=(const Polynomial& other) {
  require(nvars_ == other.nvars_, "nvars mismatch");
  for (const auto& [m, c] : other.terms_) add_term(m, -c);
  return *this;
}

Polynomial Polynomial::operator+(const Polynomial& other) const {
  Polynomial r(*this);
  r += other;
  return r;
}

Polynomial Polynomial::operator-(const Polynomial& other) const {
  Polynomial r(*this);
  r -= other;
  return r;
}

Polynomial Polynomial::operator*(const Polynomial& other) const {
  require(nvars_ == other.nvars_, "nvars mismatch");
  Polynomial r(nvars_);
  for (const auto& [ma, ca] : terms_) {
    for (const auto& [mb, cb] : other.terms_) {
      r.add_term(ma.times(mb), ca * cb);
    }
  }
  return r;
}

Polynomial Polynomial::operator-() const { return scaled(-1.0); }

Polynomial Polynomial::scaled(double c) const {
  Polynomial r(nvars_);
  if (c == 0.0) return r;
  for (const auto& [m, v] : terms_) r.terms_.emplace(m, v * c);
  return r;
}

double Polynomial::eval(const Eigen::VectorXd& x) const {
  require(x.size() == nvars_, "eval point dimension mismatch");
  double s = 0.0;
  for (const auto& [m, c] : terms_) s += c * m.eval(x);
  return s;
}

std::optional<Polynomial> Polynomial::divide_exact(const Polynomial& divisor,
                                                   double tol) const {
  require(nvars_ == divisor.nvars_, "nvars mismatch");
  require(!divisor.is_zero(), "division by zero polynomial");
  const auto& lead = *divisor.terms_.rbegin();  // highest grlex term
  Polynomial rem(*this);
  Polynomial quot(nvars_);
  Polynomial residual(nvars_);
  while (!rem.is_zero()) {
    const auto top = *rem.terms_.rbegin();
    auto q = top.first.divide(lead.first);
    if (q.has_value()) {
      const double qc = top.second / lead.second;
      quot.add_term(*q, qc);
      rem -= divisor * Polynomial::monomial(*q, qc);
    } else {
      // Not reducible; park it in the remainder and keep dividing the rest.
      residual.add_term(top.first, top.second);
      rem.add_term(top.first, -top.second);
    }
  }
  for (const auto& [m, c] : residual.terms()) {
    if (std::abs(c) > tol) return std::nullopt;
  }
  return quot;
}

bool Polynomial::operator==(const Polynomial& other) const {
  return nvars_ == other.nvars_ && terms_ == other.terms_;
}

Polynomial operator*(double c, const Polynomial& p) { return p.scaled(c); }

// ---------------------------------------------------------------------------
// Formatting / parsing

std::string format_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

namespace {

std::string monomial_string(const Monomial& m) {
  std::string s;
  for (int i = 0; i < m.nvars(); ++i) {
    const int e = m.exp(i);
    if (e == 0) continue;
    if (!s.empty()) s += "*";
    s += "x" + std::to_string(i + 1);
    if (e > 1) s += "^" + std::to_string(e);
  }
  return s;
}

}  // namespace

std::string to_string(const Polynomial& p) {
  if (p.is_zero()) return "0";
  std::string out;
  for (auto it = p.terms().rbegin(); it != p.terms().rend(); ++it) {
    const double c = it->second;
    const std::string mono = monomial_string(it->first);
    if (out.empty()) {
      if (c < 0) out += "-";
    } else {
      out += (c < 0) ? " - " : " + ";
    }
    const double mag = std::abs(c);
    if (mono.empty()) {
      out += format_double(mag);
    } else if (mag == 1.0) {
      out += mono;
    } else {
      out += format_double(mag) + "*" + mono;
    }
  }
  return out;
}

namespace {

struct Parser {
  const std::string& s;
  std::size_t pos = 0;
  int nvars;

  void skip_ws() {
    while (pos < s.size() && std::isspace(static_cast<unsigned char>(s[pos])))
      ++pos;
  }
  bool done() {
    skip_ws();
    return pos >= s.size();
  }
  char peek() {
    skip_ws();
    return pos < s.size() ? s[pos] : '\0';
  }
  [[noreturn]] void fail(const std::string& what) {
    throw std::invalid_argument("parse_poly: " + what + " at position " +
                                std::to_string(pos) + " in \"" + s + "\"");
  }

  double parse_number() {
    skip_ws();
    const char* begin = s.data() + pos;
    const char* end = s.data() + s.size();
    double value = 0.0;
    auto res = std::from_chars(begin, end, value);
    if (res.ec != std::errc()) fail("expected number");
    pos += static_cast<std::size_t>(res.ptr - begin);
    return value;
  }

  int parse_int() {
    skip_ws();
    const char* begin = s.data() + pos;
    const char* end = s.data() + s.size();
    int value = 0;
    auto res = std::from_chars(begin, end, value);
    if (res.ec != std::errc()) fail("expected integer");
    pos += static_cast<std::size_t>(res.ptr - begin);
    return value;
  }

  // factor := number | 'x' int ('^' int)?
  void parse_factor(double& coeff, std::vector<int>& exps) {
    skip_ws();
    if (peek() == 'x') {
      ++pos;
      const int idx = parse_int();
      if (idx < 1 || idx > nvars) fail("variable index out of range");
      int power = 1;
      if (peek() == '^') {
        ++pos;
        power = parse_int();
        if (power < 1) fail("exponent must be >= 1");
      }
      exps[static_cast<std::size_t>(idx - 1)] += power;
    } else {
      coeff *= parse_number();
    }
  }

  // term := factor ('*' factor)*
  void parse_term(Polynomial& acc, double sign) {
    double coeff = sign;
    std::vector<int> exps(static_cast<std::size_t>(nvars), 0);
    parse_factor(coeff, exps);
    while (peek() == '*') {
      ++pos;
      parse_factor(coeff, exps);
    }
    acc.add_term(Monomial(std::move(exps)), coeff);
  }

  Polynomial parse() {
    Polynomial acc(nvars);
    double sign = 1.0;
    if (peek() == '+') {
      ++pos;
    } else if (peek() == '-') {
      sign = -1.0;
      ++pos;
    }
    if (done()) fail("empty expression");
    parse_term(acc, sign);
    while (!done()) {
      const char op = peek();
      if (op == '+') {
        sign = 1.0;
      } else if (op == '-') {
        sign = -1.0;
      } else {
        fail("expected '+' or '-'");
      }
      ++pos;
      parse_term(acc, sign);
    }
    return acc;
  }
};

}  // namespace

Polynomial parse_poly(const std::string& text, int nvars) {
  require(nvars >= 0, "negative nvars");
  Parser p{text, 0, nvars};
  return p.parse();
}

// ---------------------------------------------------------------------------
// MonomialVector

int MonomialVector::degree() const {
  int d = -1;
  for (const auto& m : mons) d = std::max(d, m.degree());
  return d;
}

int MonomialVector::min_degree() const {
  int d = std::numeric_limits<int>::max();
  for (const auto& m : mons) d = std::min(d, m.degree());
  return mons.empty() ? -1 : d;
}

bool MonomialVector::contains(const Monomial& m) const {
  return index_of(m) >= 0;
}

int MonomialVector::index_of(const Monomial& m) const {
  for (std::size_t i = 0; i < mons.size(); ++i) {
    if (mons[i] == m) return static_cast<int>(i);
  }
  return -1;
}

void MonomialVector::canonicalize() {
  std::sort(mons.begin(), mons.end(),
            [](const Monomial& a, const Monomial& b) {
              return GrlexLess()(a, b);
            });
  for (std::size_t i = 0; i + 1 < mons.size(); ++i) {
    require(!(mons[i] == mons[i + 1]), "duplicate monomial in basis");
  }
  for (const auto& m : mons) require(m.nvars() == nvars, "nvars mismatch");
}

Eigen::VectorXd MonomialVector::eval(const Eigen::VectorXd& x) const {
  Eigen::VectorXd v(size());
  for (int i = 0; i < size(); ++i)
    v[i] = mons[static_cast<std::size_t>(i)].eval(x);
  return v;
}

namespace {

void enumerate_rec(int nvars, int pos, int remaining, std::vector<int>& cur,
                   std::vector<Monomial>& out) {
  if (pos == nvars) {
    if (remaining == 0) out.emplace_back(cur);
    return;
  }
  // Descending exponent on the current variable keeps lex order within a
  // degree (x1-heavy first).
  for (int e = remaining; e >= 0; --e) {
    cur[static_cast<std::size_t>(pos)] = e;
    enumerate_rec(nvars, pos + 1, remaining - e, cur, out);
  }
  cur[static_cast<std::size_t>(pos)] = 0;
}

}  // namespace

MonomialVector monomials_up_to(int nvars, int d, BasisRole role) {
  require(nvars >= 1, "nvars must be >= 1");
  require(d >= 0, "degree must be >= 0");
  MonomialVector z;
  z.nvars = nvars;
  z.role = role;
  std::vector<int> cur(static_cast<std::size_t>(nvars), 0);
  for (int deg = 0; deg <= d; ++deg) {
    enumerate_rec(nvars, 0, deg, cur, z.mons);
  }
  return z;
}

long long binom(long long n, long long k) {
  if (k < 0 || k > n) return 0;
  k = std::min(k, n - k);
  long long r = 1;
  for (long long i = 1; i <= k; ++i) {
    r = r * (n - k + i) / i;
  }
  return r;
}

// ---------------------------------------------------------------------------
// PolyMatrix

PolyMatrix::PolyMatrix(int rows, int cols, int nvars)
    : rows_(rows), cols_(cols), nvars_(nvars) {
  require(rows >= 0 && cols >= 0, "negative dimensions");
  e_.assign(static_cast<std::size_t>(rows) * static_cast<std::size_t>(cols),
            Polynomial(nvars));
}

PolyMatrix PolyMatrix::constant(const Eigen::MatrixXd& m, int nvars) {
  PolyMatrix r(static_cast<int>(m.rows()), static_cast<int>(m.cols()), nvars);
  for (int i = 0; i < r.rows_; ++i) {
    for (int j = 0; j < r.cols_; ++j) {
      r(i, j) = Polynomial::constant(nvars, m(i, j));
    }
  }
  return r;
}

PolyMatrix PolyMatrix::identity(int n, int nvars) {
  return constant(Eigen::MatrixXd::Identity(n, n), nvars);
}

PolyMatrix PolyMatrix::column(const MonomialVector& z) {
  PolyMatrix r(z.size(), 1, z.nvars);
  for (int i = 0; i < z.size(); ++i) {
    r(i, 0) = Polynomial::monomial(z.mons[static_cast<std::size_t>(i)]);
  }
  return r;
}

PolyMatrix PolyMatrix::zero(int rows, int cols, int nvars) {
  return PolyMatrix(rows, cols, nvars);
}

Polynomial& PolyMatrix::operator()(int r, int c) {
  require(r >= 0 && r < rows_ && c >= 0 && c < cols_, "index out of range");
  return e_[static_cast<std::size_t>(r) * static_cast<std::size_t>(cols_) +
            static_cast<std::size_t>(c)];
}

const Polynomial& PolyMatrix::operator()(int r, int c) const {
  require(r >= 0 && r < rows_ && c >= 0 && c < cols_, "index out of range");
  return e_[static_cast<std::size_t>(r) * static_cast<std::size_t>(cols_) +
            static_cast<std::size_t>(c)];
}

PolyMatrix PolyMatrix::operator+(const PolyMatrix& other) const {
  require(rows_ == other.rows_ && cols_ == other.cols_, "shape mismatch");
  require(nvars_ == other.nvars_, "nvars mismatch");
  PolyMatrix r(*this);
  for (std::size_t i = 0; i < e_.size(); ++i) r.e_[i] += other.e_[i];
  return r;
}

PolyMatrix PolyMatrix::operator-(const PolyMatrix& other) const {
  require(rows_ == other.rows_ && cols_ == other.cols_, "shape mismatch");
  require(nvars_ == other.nvars_, "nvars mismatch");
  PolyMatrix r(*this);
  for (std::size_t i = 0; i < e_.size(); ++i) r.e_[i] -= other.e_[i];
  return r;
}

PolyMatrix PolyMatrix::operator*(const PolyMatrix& other) const {
  require(cols_ == other.rows_, "shape mismatch");
  require(nvars_ == other.nvars_, "nvars mismatch");
  PolyMatrix r(rows_, other.cols_, nvars_);
  for (int i = 0; i < rows_; ++i) {
    for (int k = 0; k < cols_; ++k) {
      const Polynomial& a = (*this)(i, k);
      if (a.is_zero()) continue;
      for (int j = 0; j < other.cols_; ++j) {
        const Polynomial& b = other(k, j);
        if (b.is_zero()) continue;
        r(i, j) += a * b;
      }
    }
  }
  return r;
}

PolyMatrix PolyMatrix::operator-() const { return scaled(-1.0); }

PolyMatrix PolyMatrix::scaled(double c) const {
  PolyMatrix r(*this);
  for (auto& p : r.e_) p = p.scaled(c);
  return r;
}

PolyMatrix PolyMatrix::scaled(const Polynomial& c) const {
  require(nvars_ == c.nvars(), "nvars mismatch");
  PolyMatrix r(*this);
  for (auto& p : r.e_) p = p * c;
  return r;
}

PolyMatrix PolyMatrix::transpose() const {
  PolyMatrix r(cols_, rows_, nvars_);
  for (int i = 0; i < rows_; ++i) {
    for (int j = 0; j < cols_; ++j) r(j, i) = (*this)(i, j);
  }
  return r;
}

PolyMatrix PolyMatrix::left_mul(const Eigen::MatrixXd& m) const {
  require(static_cast<int>(m.cols()) == rows_, "shape mismatch");
  PolyMatrix r(static_cast<int>(m.rows()), cols_, nvars_);
  for (int i = 0; i < r.rows_; ++i) {
    for (int k = 0; k < rows_; ++k) {
      if (m(i, k) == 0.0) continue;
      for (int j = 0; j < cols_; ++j) {
        r(i, j) += (*this)(k, j).scaled(m(i, k));
      }
    }
  }
  return r;
}

PolyMatrix PolyMatrix::right_mul(const Eigen::MatrixXd& m) const {
  require(static_cast<int>(m.rows()) == cols_, "shape mismatch");
  PolyMatrix r(rows_, static_cast<int>(m.cols()), nvars_);
  for (int i = 0; i < rows_; ++i) {
    for (int k = 0; k < cols_; ++k) {
      const Polynomial& a = (*this)(i, k);
      if (a.is_zero()) continue;
      for (int j = 0; j < r.cols_; ++j) {
        if (m(k, j) == 0.0) continue;
        r(i, j) += a.scaled(m(k, j));
      }
    }
  }
  return r;
}

Eigen::MatrixXd PolyMatrix::eval(const Eigen::VectorXd& x) const {
  Eigen::MatrixXd r(rows_, cols_);
  for (int i = 0; i < rows_; ++i) {
    for (int j = 0; j < cols_; ++j) r(i, j) = (*this)(i, j).eval(x);
  }
  return r;
}

int PolyMatrix::degree() const {
  int d = -1;
  for (const auto& p : e_) d = std::max(d, p.degree());
  return d;
}

bool PolyMatrix::is_zero() const {
  return std::all_of(e_.begin(), e_.end(),
                     [](const Polynomial& p) { return p.is_zero(); });
}

bool PolyMatrix::is_symmetric() const {
  if (rows_ != cols_) return false;
  for (int i = 0; i < rows_; ++i) {
    for (int j = i + 1; j < cols_; ++j) {
      if (!((*this)(i, j) == (*this)(j, i))) return false;
    }
  }
  return true;
}

std::map<Monomial, Eigen::MatrixXd, GrlexLess> PolyMatrix::coeff_map() const {
  std::map<Monomial, Eigen::MatrixXd, GrlexLess> cm;
  for (int i = 0; i < rows_; ++i) {
    for (int j = 0; j < cols_; ++j) {
      for (const auto& [m, c] : (*this)(i, j).terms()) {
        auto [it, inserted] =
            cm.try_emplace(m, Eigen::MatrixXd::Zero(rows_, cols_));
        it->second(i, j) += c;
      }
    }
  }
  return cm;
}

PolyMatrix PolyMatrix::from_coeff_map(
    int rows, int cols, int nvars,
    const std::map<Monomial, Eigen::MatrixXd, GrlexLess>& cm) {
  PolyMatrix r(rows, cols, nvars);
  for (const auto& [m, mat] : cm) {
    require(static_cast<int>(mat.rows()) == rows &&
                static_cast<int>(mat.cols()) == cols,
            "coefficient shape mismatch");
    for (int i = 0; i < rows; ++i) {
      for (int j = 0; j < cols; ++j) r(i, j).add_term(m, mat(i, j));
    }
  }
  return r;
}

bool PolyMatrix::operator==(const PolyMatrix& other) const {
  return rows_ == other.rows_ && cols_ == other.cols_ &&
         nvars_ == other.nvars_ && e_ == other.e_;
}

PolyMatrix kron_identity(int k, const PolyMatrix& v) {
  require(k >= 0, "negative block count");
  require(v.cols() == 1, "kron_identity expects a column vector");
  PolyMatrix r(k * v.rows(), k, v.nvars());
  for (int b = 0; b < k; ++b) {
    for (int i = 0; i < v.rows(); ++i) {
      r(b * v.rows() + i, b) = v(i, 0);
    }
  }
  return r;
}

PolyMatrix kron_identity(int k, const MonomialVector& v) {
  return kron_identity(k, PolyMatrix::column(v));
}

PolyMatrix decompose_linear_factor(const MonomialVector& z) {
  require(z.min_degree() >= 1 || z.size() == 0,
          "basis must have minimum degree 1 for Z(x) = Y(x) x");
  PolyMatrix y(z.size(), z.nvars, z.nvars);
  for (int i = 0; i < z.size(); ++i) {
    const Monomial& m = z.mons[static_cast<std::size_t>(i)];
    for (int j = 0; j < z.nvars; ++j) {
      if (m.exp(j) > 0) {
        auto q = m.divide(Monomial::var(z.nvars, j));
        y(i, j) = Polynomial::monomial(*q);
        break;
      }
    }
  }
  return y;
}

}  // namespace ratsyn::poly
