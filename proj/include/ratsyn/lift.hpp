#pragma once

// State lifting for plants that are linear in non-polynomial basis
// functions: each declared basis function of a state variable becomes an
// extra coordinate, its dynamics follow from the chain rule, and every
// occurrence of the function is replaced by its coordinate.  The result is
// a polynomial system (denominator 1) in the extended state, ready for the
// same synthesis path as native polynomial plants.
//
// The user declares which functions appear (the lift is not unique and
// automatic detection is out of scope); the module differentiates and
// substitutes.  Functions whose derivative needs a partner (sin/cos,
// ln/1/x, sqrt/1/sqrt) must be declared together; check_closure reports
// missing partners.

#include <Eigen/Dense>

#include <string>
#include <vector>

#include "ratsyn/model.hpp"
#include "ratsyn/poly.hpp"

namespace ratsyn::lift {

// One declared basis function fn(xi_arg) (param is the shift for recip:
// z = 1/(x + param)).  arg is a zero-based original-state index.
struct LiftDecl {
  std::string fn;
  int arg = 0;
  double param = 0.0;
};

// Registered function names: exp, recip, sin, cos, ln, inv, sqrt, invsqrt,
// tanh.  Returns the companion function each declaration still needs (same
// argument), empty when the set is closed.
std::vector<std::string> check_closure(const std::vector<LiftDecl>& decls);

// Plant description in extended coordinates: the original states are
// x1..xl and each declaration adds the next coordinate in order, so a
// declared sin(xi_1) in a 2-state plant is written as x3.  f and g must be
// polynomial in these coordinates; inputs enter linearly by construction.
struct SymbolicSystem {
  int l = 0;  // original states
  int m = 0;  // inputs
  std::vector<LiftDecl> lifts;
  poly::PolyMatrix f;  // l x 1 drift over l + lifts.size() variables
  poly::PolyMatrix g;  // l x m input matrix over the same variables

  int extended_dim() const { return l + static_cast<int>(lifts.size()); }
  void validate() const;  // shapes, known fns, closure; throws
};

struct LiftedSystem {
  int original_dim = 0;
  int extended_dim = 0;
  std::vector<LiftDecl> lifts;
  // Chain-rule factors: xdot_{l+i} = dexpr[i](x) * xidot_{arg_i}.
  std::vector<poly::Polynomial> dexpr;
  // Polynomial plant over extended coordinates (all denominators 1).
  model::RationalSystem poly_system;
  // Cleared form of poly_system; p = 1, Z_p empty.
  model::PolyForm dynamics;
};

// Differentiates each lifted coordinate, substitutes basis functions by
// their coordinates and assembles the polynomial form.  Throws
// std::invalid_argument on closure violations or when the extended origin
// is not an equilibrium.
LiftedSystem polynomialize(const SymbolicSystem& sys);

// x = Psi(xi): the original states followed by the declared function
// values.  Throws std::domain_error outside a function's domain (sqrt of a
// negative argument, log of a nonpositive one, pole of a reciprocal).
Eigen::VectorXd embed(const LiftedSystem& sys, const Eigen::VectorXd& xi);

// True original-state derivative at xi: the first l entries of the lifted
// polynomial dynamics evaluated on the embedding (exact on the manifold).
Eigen::VectorXd original_dynamics(const LiftedSystem& sys,
                                  const Eigen::VectorXd& xi,
                                  const Eigen::VectorXd& u);

// Full extended-state derivative d/dt Psi(xi) along the true dynamics.
Eigen::VectorXd lifted_dynamics(const LiftedSystem& sys,
                                const Eigen::VectorXd& xi,
                                const Eigen::VectorXd& u);

// System files for lifted plants: the model module's fields (denominators
// omitted or "1") plus `lift: [{"fn": "sin", "arg": 1}, ...]` with
// one-based arg, and `l` for the original state count; drift/input strings
// are over the extended coordinates.
SymbolicSystem parse_symbolic(const std::string& json_text);
std::string format_symbolic(const SymbolicSystem& sys);
SymbolicSystem load_symbolic(const std::string& path);
void save_symbolic(const SymbolicSystem& sys, const std::string& path);

}  // namespace ratsyn::lift
