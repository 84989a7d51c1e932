#pragma once

// Sparse multivariate polynomials, polynomial matrices and monomial bases.
//
// Monomials over variables x1..xn are kept in a fixed graded-lexicographic
// order (total degree first, ties broken so that within a degree x1-heavy
// monomials come first).  For n = 2, degree <= 2 the order is
//   1, x1, x2, x1^2, x1*x2, x2^2.
// Every container in this module iterates in that order, which keeps all
// downstream assembly (Gram constraint rows, coefficient maps, bases) fully
// deterministic.

#include <Eigen/Dense>

#include <map>
#include <optional>
#include <string>
#include <vector>

namespace ratsyn::poly {

// Product of variable powers; the exponent vector has one entry per variable.
class Monomial {
 public:
  Monomial() = default;
  explicit Monomial(std::vector<int> exps);

  // Constant monomial (all exponents zero).
  static Monomial unit(int nvars);
  // xi^power for the zero-based variable index idx.
  static Monomial var(int nvars, int idx, int power = 1);

  int nvars() const { return static_cast<int>(exps_.size()); }
  int degree() const;
  int exp(int i) const { return exps_.at(static_cast<std::size_t>(i)); }
  const std::vector<int>& exps() const { return exps_; }
  bool is_unit() const { return degree() == 0; }

  Monomial times(const Monomial& other) const;
  // Exact monomial quotient *this / other, or nullopt if not divisible.
  std::optional<Monomial> divide(const Monomial& other) const;

  double eval(const Eigen::VectorXd& x) const;

  bool operator==(const Monomial& other) const { return exps_ == other.exps_; }

 private:
  std::vector<int> exps_;
};

// Graded-lexicographic strict order (see header comment).
struct GrlexLess {
  bool operator()(const Monomial& a, const Monomial& b) const;
};

// Sparse polynomial with real coefficients in canonical form: the term map
// never stores an exact-zero coefficient.
class Polynomial {
 public:
  using TermMap = std::map<Monomial, double, GrlexLess>;

  Polynomial() = default;
  explicit Polynomial(int nvars) : nvars_(nvars) {}

  static Polynomial constant(int nvars, double c);
  static Polynomial monomial(const Monomial& m, double c = 1.0);
  // The variable xi as a polynomial.
  static Polynomial var(int nvars, int idx);

  int nvars() const { return nvars_; }
  bool is_zero() const { return terms_.empty(); }
  bool is_constant() const;
  int degree() const;  // -1 for the zero polynomial
  int term_count() const { return static_cast<int>(terms_.size()); }
  const TermMap& terms() const { return terms_; }

  double coefficient(const Monomial& m) const;
  // Adds c to the coefficient of m, dropping the term if it becomes 0.0.
  void add_term(const Monomial& m, double c);

  Polynomial& operator+=(const Polynomial& other);
  Polynomial& operator-=(const Polynomial& other);
  Polynomial operator+(const Polynomial& other) const;
  Polynomial operator-(const Polynomial& other) const;
  Polynomial operator*(const Polynomial& other) const;
  Polynomial operator-() const;
  Polynomial scaled(double c) const;

  double eval(const Eigen::VectorXd& x) const;

  // Exact quotient *this / divisor.  Runs multivariate division along the
  // graded-lex order and returns nullopt when a remainder is left (any
  // coefficient of the remainder larger than tol in magnitude).
  std::optional<Polynomial> divide_exact(const Polynomial& divisor,
                                         double tol = 1e-9) const;

  bool operator==(const Polynomial& other) const;

 private:
  int nvars_ = 0;
  TermMap terms_;
};

Polynomial operator*(double c, const Polynomial& p);

// Renders terms highest-order first, e.g. "x1^3*x2 - 0.5*x2 + 1".
// Coefficients are printed with shortest round-trip formatting so that
// parse_poly(to_string(p)) == p exactly.
std::string to_string(const Polynomial& p);

// Parses the syntax produced by to_string: terms of numeric coefficients and
// variable powers joined by '*', e.g. "3*x1^2*x2 - 0.5*x2 + 2e-3".
// Throws std::invalid_argument on malformed input or a variable index
// outside 1..nvars.
Polynomial parse_poly(const std::string& text, int nvars);

// Shortest round-trip decimal rendering of a double ("0.2", "1e-07", ...).
std::string format_double(double v);

// Role tag for monomial lists so downstream contracts (minimum degree,
// basis identity) can be checked where the list is used.
enum class BasisRole { kGeneric, kZ, kZp, kZK, kZd };

// Ordered list of distinct monomials over a common variable set.
struct MonomialVector {
  int nvars = 0;
  BasisRole role = BasisRole::kGeneric;
  std::vector<Monomial> mons;

  int size() const { return static_cast<int>(mons.size()); }
  int degree() const;
  int min_degree() const;
  bool contains(const Monomial& m) const;
  // Position of m, or -1.
  int index_of(const Monomial& m) const;
  // Sorts into graded-lex order and checks for duplicates (throws).
  void canonicalize();

  Eigen::VectorXd eval(const Eigen::VectorXd& x) const;
};

// All monomials in n variables of degree <= d in graded-lex order; the
// standard basis z_d with length binom(n + d, d).
MonomialVector monomials_up_to(int nvars, int d,
                               BasisRole role = BasisRole::kZd);

// binom(n, k) as a checked 64-bit integer.
long long binom(long long n, long long k);

// Dense matrix of polynomials (row-major storage).
class PolyMatrix {
 public:
  PolyMatrix() = default;
  PolyMatrix(int rows, int cols, int nvars);

  static PolyMatrix constant(const Eigen::MatrixXd& m, int nvars);
  static PolyMatrix identity(int n, int nvars);
  // Column vector holding the entries of Z.
  static PolyMatrix column(const MonomialVector& z);
  static PolyMatrix zero(int rows, int cols, int nvars);

  int rows() const { return rows_; }
  int cols() const { return cols_; }
  int nvars() const { return nvars_; }

  Polynomial& operator()(int r, int c);
  const Polynomial& operator()(int r, int c) const;

  PolyMatrix operator+(const PolyMatrix& other) const;
  PolyMatrix operator-(const PolyMatrix& other) const;
  PolyMatrix operator*(const PolyMatrix& other) const;
  PolyMatrix operator-() const;
  PolyMatrix scaled(double c) const;
  PolyMatrix scaled(const Polynomial& c) const;
  PolyMatrix transpose() const;

  // Left/right multiplication by constant matrices.
  PolyMatrix left_mul(const Eigen::MatrixXd& m) const;
  PolyMatrix right_mul(const Eigen::MatrixXd& m) const;

  Eigen::MatrixXd eval(const Eigen::VectorXd& x) const;
  int degree() const;  // max over entries, -1 if all zero
  bool is_zero() const;
  // Exact coefficient symmetry.
  bool is_symmetric() const;

  // Coefficients per monomial: p(x) = sum_m C_m * m(x), iterated in
  // graded-lex order.
  std::map<Monomial, Eigen::MatrixXd, GrlexLess> coeff_map() const;
  static PolyMatrix from_coeff_map(
      int rows, int cols, int nvars,
      const std::map<Monomial, Eigen::MatrixXd, GrlexLess>& cm);

  bool operator==(const PolyMatrix& other) const;

 private:
  int rows_ = 0, cols_ = 0, nvars_ = 0;
  std::vector<Polynomial> e_;
};

// I_k  (x)  v  for a polynomial column vector v (block-diagonal stack).
PolyMatrix kron_identity(int k, const PolyMatrix& v);
PolyMatrix kron_identity(int k, const MonomialVector& v);

// Factor representation Z(x) = Y(x) * x for a basis of minimum degree >= 1:
// each monomial m = xj * (m / xj) contributes m/xj to column j, with j the
// lowest-index variable dividing m.  Throws if Z contains a constant.
PolyMatrix decompose_linear_factor(const MonomialVector& z);

}  // namespace ratsyn::poly
