#pragma once

#include <string>

#include "gcfem/problem.hpp"
#include "gcfem/types.hpp"

namespace gcfem {

// The constrained quadratic density phi(t) = |t|^2 / 2 for |t| <= zeta (and
// +inf otherwise) and its conjugate
//   phi*(s) = |s|^2 / 2            if |s| <= zeta,
//             zeta |s| - zeta^2/2  if |s| >  zeta.

double phi_star(const Vec2& s, double zeta);

/// Gradient of phi*: the projection of s onto the closed zeta-ball.
Vec2 dphi_star(const Vec2& s, double zeta);

struct Hessian {
  Mat2 value;
  /// |s| within 1e-12 of zeta; the quadratic branch (identity) is returned.
  bool near_kink = false;
};

/// I if |s| <= zeta, (zeta/|s|)(I - s s^T/|s|^2) otherwise.
Hessian d2phi_star(const Vec2& s, double zeta);

/// Frozen flow coefficient D_t phi*(|s|) / |s| = min(1, zeta/|s|), equal to 1 at s = 0.
double flow_weight(const Vec2& s, double zeta);

enum class Violation { None, GradientConstraint, DirichletTrace, Divergence, NeumannTrace };

std::string to_string(Violation v);

/// Energy value with an explicit feasibility flag. When `feasible` is false
/// the functional is +inf (primal) or -inf (dual) and `value` must not be used.
struct EnergyValue {
  double value = 0.0;
  bool feasible = true;
  Violation violation = Violation::None;
};

struct PrimalTolerance {
  double gradient = 1e-12;
  double dirichlet = 1e-12;
};

/// 1/2 ||grad_h v||^2 - (f_h, Pi_h v) - (g_h, pi_h v)_{Gamma_N} on K_h^cr.
EnergyValue primal_energy_h(const CRFunction& v, const ProblemData& data, const PrimalTolerance& tol = {});

/// -int phi*(Pi_h y) + (y . n, u_D^h)_{Gamma_D} on K_h^{rt,*}; admissibility is
/// checked to `rel_tol` relative.
EnergyValue dual_energy_h(const RTFunction& y, const ProblemData& data, double rel_tol = 1e-10);

}  // namespace gcfem
