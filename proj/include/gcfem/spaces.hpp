#pragma once

#include <functional>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "gcfem/mesh.hpp"
#include "gcfem/types.hpp"

namespace gcfem {

using ScalarFunction = std::function<double(const Vec2&)>;
using VectorFunction = std::function<Vec2(const Vec2&)>;

/// Crouzeix-Raviart function: one dof per side, the side mean (= midpoint value).
struct CRFunction {
  Eigen::VectorXd dofs;
};

/// Lowest-order Raviart-Thomas field: one dof per side, the constant normal
/// component y . n_S against the global side normal.
struct RTFunction {
  Eigen::VectorXd dofs;
};

/// Element-wise constant scalar field.
struct P0Field {
  Eigen::VectorXd values;
};

/// Element-wise constant vector field.
struct P0VectorField {
  std::vector<Vec2> values;
};

/// Side-wise constants on the sides carrying `label`; zero elsewhere.
struct SideData {
  SideLabel label = SideLabel::Dirichlet;
  Eigen::VectorXd values;
};

CRFunction cr_zero(const Discretization& disc);
RTFunction rt_zero(const Discretization& disc);

/// Element gradient of the affine function through the side-midpoint values.
P0VectorField cr_gradient(const CRFunction& v, const Discretization& disc);
Vec2 cr_gradient(const CRFunction& v, const Discretization& disc, int t);
/// Element means of v (the centroid values).
P0Field cr_element_mean(const CRFunction& v, const Discretization& disc);
double cr_eval(const CRFunction& v, const Discretization& disc, int t, const Vec2& x);

/// Vector RT0 basis geometry: on T, psi_S = sign * |S| / (2|T|) (x - P_S), with
/// P_S the vertex opposite S.
Vec2 rt_basis_mean(const Discretization& disc, int t, int local);

P0Field rt_divergence(const RTFunction& y, const Discretization& disc);
double rt_divergence(const RTFunction& y, const Discretization& disc, int t);
P0VectorField rt_element_mean(const RTFunction& y, const Discretization& disc);
Vec2 rt_element_mean(const RTFunction& y, const Discretization& disc, int t);
/// Evaluates y|_T at x; throws ParameterError if x lies outside T.
Vec2 rt_eval(const RTFunction& y, const Discretization& disc, int t, const Vec2& x);

/// Side means by the degree-4 edge rule.
CRFunction cr_interpolate(const ScalarFunction& v, const Discretization& disc);
/// Side means of y . n_S by the degree-4 edge rule.
RTFunction rt_interpolate(const VectorFunction& y, const Discretization& disc);

/// Element means by the degree-4 triangle rule.
P0Field element_means(const ScalarFunction& f, const Discretization& disc);
P0VectorField element_means(const VectorFunction& f, const Discretization& disc);
/// Side means on sides carrying `label`.
SideData side_means(const ScalarFunction& f, const Discretization& disc, SideLabel label);

/// |(grad_h v, Pi_h y) + (Pi_h v, div y) - (pi_h v, y . n)_{boundary}|.
double discrete_ibp_defect(const CRFunction& v, const RTFunction& y, const Discretization& disc);

/// L2 inner product of two element-wise constant vector fields.
double p0_inner(const P0VectorField& a, const P0VectorField& b, const Discretization& disc);

/// Field dump rows `kind,index,value` with kind in {cr, rt, p0s, p0vx, p0vy}.
struct FieldDump {
  const CRFunction* cr = nullptr;
  const RTFunction* rt = nullptr;
  const P0Field* p0_scalar = nullptr;
  const P0VectorField* p0_vector = nullptr;
};
std::string format_field_dump(const FieldDump& dump);

}  // namespace gcfem
