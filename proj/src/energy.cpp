#include "gcfem/energy.hpp"

#include <algorithm>
#include <cmath>

namespace gcfem {

double phi_star(const Vec2& s, double zeta) {
  const double r = s.norm();
  if (r <= zeta) return 0.5 * r * r;
  return zeta * r - 0.5 * zeta * zeta;
}

Vec2 dphi_star(const Vec2& s, double zeta) {
  const double r = s.norm();
  if (r <= zeta) return s;
  return (zeta / r) * s;
}

Hessian d2phi_star(const Vec2& s, double zeta) {
  const double r = s.norm();
  Hessian h;
  h.near_kink = std::abs(r - zeta) <= 1e-12;
  if (r <= zeta || h.near_kink) {
    h.value = Mat2::Identity();
    return h;
  }
  const Vec2 e = s / r;
  h.value = (zeta / r) * (Mat2::Identity() - e * e.transpose());
  return h;
}

double flow_weight(const Vec2& s, double zeta) {
  const double r = s.norm();
  if (r <= zeta) return 1.0;
  return zeta / r;
}

std::string to_string(Violation v) {
  switch (v) {
    case Violation::None: return "none";
    case Violation::GradientConstraint: return "gradient constraint |grad_h v| <= zeta_h";
    case Violation::DirichletTrace: return "Dirichlet trace pi_h v = u_D^h";
    case Violation::Divergence: return "divergence constraint div y = -f_h";
    case Violation::NeumannTrace: return "Neumann trace y.n = g_h";
  }
  return "unknown";
}

EnergyValue primal_energy_h(const CRFunction& v, const ProblemData& data, const PrimalTolerance& tol) {
  const Discretization& disc = data.disc;
  EnergyValue e;
  double value = 0.0;
  for (int t = 0; t < disc.num_triangles(); ++t) {
    const Vec2 g = cr_gradient(v, disc, t);
    const double zeta = data.zeta.values[t];
    if (e.feasible && g.norm() - zeta > tol.gradient * std::max(1.0, zeta)) {
      e.feasible = false;
      e.violation = Violation::GradientConstraint;
    }
    const auto& s = disc.mesh().element_sides(t);
    const double mean = (v.dofs[s[0]] + v.dofs[s[1]] + v.dofs[s[2]]) / 3.0;
    value += disc.area(t) * (0.5 * g.squaredNorm() - data.f.values[t] * mean);
  }
  for (int s = 0; s < disc.num_sides(); ++s) {
    switch (disc.mesh().label(s)) {
      case SideLabel::Neumann:
        value -= disc.side_length(s) * data.g.values[s] * v.dofs[s];
        break;
      case SideLabel::Dirichlet: {
        const double ud = data.u_dirichlet.values[s];
        if (e.feasible && std::abs(v.dofs[s] - ud) > tol.dirichlet * (1.0 + std::abs(ud))) {
          e.feasible = false;
          e.violation = Violation::DirichletTrace;
        }
        break;
      }
      case SideLabel::Interior:
        break;
    }
  }
  e.value = value;
  return e;
}

EnergyValue dual_energy_h(const RTFunction& y, const ProblemData& data, double rel_tol) {
  const Discretization& disc = data.disc;
  EnergyValue e;
  double value = 0.0;
  for (int t = 0; t < disc.num_triangles(); ++t) {
    const double f = data.f.values[t];
    if (e.feasible && std::abs(rt_divergence(y, disc, t) + f) > rel_tol * (1.0 + std::abs(f))) {
      e.feasible = false;
      e.violation = Violation::Divergence;
    }
    value -= disc.area(t) * phi_star(rt_element_mean(y, disc, t), data.zeta.values[t]);
  }
  for (int s = 0; s < disc.num_sides(); ++s) {
    switch (disc.mesh().label(s)) {
      case SideLabel::Dirichlet:
        value += disc.side_length(s) * y.dofs[s] * data.u_dirichlet.values[s];
        break;
      case SideLabel::Neumann: {
        const double g = data.g.values[s];
        if (e.feasible && std::abs(y.dofs[s] - g) > rel_tol * (1.0 + std::abs(g))) {
          e.feasible = false;
          e.violation = Violation::NeumannTrace;
        }
        break;
      }
      case SideLabel::Interior:
        break;
    }
  }
  e.value = value;
  return e;
}

}  // namespace gcfem
