#pragma once

#include <functional>
#include <string>
#include <vector>

#include "gcfem/energy.hpp"
#include "gcfem/problem.hpp"

namespace gcfem {

struct Reconstruction {
  CRFunction u;
  /// Largest midpoint mismatch of the two element traces over interior sides.
  double conformity_defect = 0.0;
};

/// Element-wise u|_T = lambda_T + Dphi*(Pi_h z|_T) . (x - x_T), made CR by
/// averaging the two traces at each interior side midpoint.
Reconstruction marini_reconstruct(const RTFunction& z, const P0Field& lambda, const ProblemData& data);

struct GapBreakdown {
  double total = 0.0;
  P0Field per_element;
  /// Admissibility of the primal argument (gradient constraint, Dirichlet trace).
  EnergyValue primal;
  /// Admissibility of the dual argument (divergence, Neumann trace).
  EnergyValue dual;

  bool admissible() const { return primal.feasible && dual.feasible; }
};

/// sum_T |T| (phi*(Pi_h y) - Pi_h y . grad_h v + |grad_h v|^2 / 2). The
/// primal and dual energies are evaluated alongside; for an admissible pair
/// total = I_h(v) - D_h(y).
GapBreakdown discrete_gap_estimator(const CRFunction& v, const RTFunction& y, const ProblemData& data,
                                    const PrimalTolerance& tol = {});

/// int_0^1 2 (1 - l) D^2 phi*(l t + (1 - l) s) dl. The segment is split at
/// the zeta-sphere crossings and each piece integrated by composite 16-point
/// Gauss, so that (1/2) H (t - s).(t - s) is the Bregman distance
/// phi*(t) - phi*(s) - Dphi*(s).(t - s).
Mat2 averaged_hessian(const Vec2& t, const Vec2& s, double zeta);

struct ConvexityMeasures {
  double rho_primal_sq = 0.0;
  double rho_dual_sq = 0.0;
  /// 1/2 ||grad_h v - grad_h u||^2.
  double primal_gradient_term = 0.0;
  /// sum over the active set of |T| (|Pi_h z|/zeta - 1)(zeta^2 - grad u . grad v).
  double primal_active_term = 0.0;
  int active_elements = 0;
};

/// Distances of (v, y) to the discrete solution pair (u_cr, z_rt) via the
/// representations by gradient distance plus active-set term (primal) and the
/// averaged Hessian (dual). Active set: |grad_h u| >= zeta_h (1 - active_tol).
ConvexityMeasures discrete_convexity_measures(const CRFunction& v, const RTFunction& y, const CRFunction& u_cr,
                                              const RTFunction& z_rt, const ProblemData& data,
                                              double active_tol = 1e-6);

/// Continuous piecewise affine function by vertex values.
struct P1Function {
  Eigen::VectorXd values;
};

Vec2 p1_gradient(const P1Function& v, const Discretization& disc, int t);
double p1_eval(const P1Function& v, const Discretization& disc, int t, const Vec2& x);

struct PostProcessed {
  P1Function v;
  /// Factor 1 / max(1, max_T |grad v|_T / zeta_T) applied to the averaged field.
  double scaling = 1.0;
  /// max over boundary vertices of |v - exact_boundary| after scaling.
  double boundary_defect = 0.0;
};

/// Vertex averaging of the element traces of u_cr (exact_boundary at boundary
/// vertices), then uniform scaling into the gradient constraint.
PostProcessed conforming_postprocess(const CRFunction& u_cr, const ProblemData& data,
                                     const ScalarFunction& exact_boundary);

/// Exact solution pair of a problem with an explicitly known active set.
struct ExactFields {
  ScalarFunction u;
  VectorFunction grad_u;
  VectorFunction z;
  std::function<bool(const Vec2&)> in_active_set;
};

struct ContinuousGap {
  double total = 0.0;
  P0Field per_element;
  /// |grad v| <= zeta_h + 1e-12 on every element.
  bool feasible = true;
};

/// int_{Omega_h} phi(grad v) - grad v . y + phi*(y) by degree-4 quadrature,
/// y evaluated as the full RT0 field.
ContinuousGap continuous_gap_estimator(const P1Function& v, const RTFunction& y, const ProblemData& data);

struct ContinuousErrors {
  double rho_primal_sq = 0.0;
  double rho_dual_sq = 0.0;
  double total() const { return rho_primal_sq + rho_dual_sq; }
};

/// rho^2_I(v) + rho^2_{-D}(y) against the exact pair, by degree-4 quadrature.
ContinuousErrors continuous_total_error(const P1Function& v, const RTFunction& y, const ProblemData& data,
                                        const ExactFields& exact);

/// (log e_i - log e_{i-1}) / (log h_i - log h_{i-1}); throws ParameterError on
/// non-positive entries or mismatched lengths below 2.
std::vector<double> eoc(const std::vector<double>& errors, const std::vector<double>& hs);

/// Rows `element,eta_sq_contribution`.
std::string format_indicators(const P0Field& per_element);

}  // namespace gcfem
