#include "gcfem/spaces.hpp"

#include <cmath>
#include <sstream>

#include "gcfem/errors.hpp"
#include "gcfem/quadrature.hpp"

namespace gcfem {

namespace {

// Barycentric coordinates of x in triangle t.
std::array<double, 3> barycentric(const Discretization& disc, int t, const Vec2& x) {
  const auto& tri = disc.mesh().triangle(t);
  const Vec2& a = disc.mesh().vertex(tri[0]);
  const Vec2& b = disc.mesh().vertex(tri[1]);
  const Vec2& c = disc.mesh().vertex(tri[2]);
  const double area2 = 2.0 * disc.area(t);
  auto cross = [](const Vec2& u, const Vec2& v) { return u.x() * v.y() - u.y() * v.x(); };
  const double l0 = cross(b - x, c - x) / area2;
  const double l1 = cross(c - x, a - x) / area2;
  return {l0, l1, 1.0 - l0 - l1};
}

}  // namespace

CRFunction cr_zero(const Discretization& disc) { return {Eigen::VectorXd::Zero(disc.num_sides())}; }
RTFunction rt_zero(const Discretization& disc) { return {Eigen::VectorXd::Zero(disc.num_sides())}; }

Vec2 cr_gradient(const CRFunction& v, const Discretization& disc, int t) {
  // grad of the CR basis attached to local side i is |S_i| n_i / |T|
  const auto& sides = disc.mesh().element_sides(t);
  const auto& normals = disc.geometry().outward_normal[t];
  Vec2 g = Vec2::Zero();
  for (int i = 0; i < 3; ++i) g += v.dofs[sides[i]] * disc.side_length(sides[i]) * normals[i];
  return g / disc.area(t);
}

P0VectorField cr_gradient(const CRFunction& v, const Discretization& disc) {
  P0VectorField g;
  g.values.resize(disc.num_triangles());
  for (int t = 0; t < disc.num_triangles(); ++t) g.values[t] = cr_gradient(v, disc, t);
  return g;
}

P0Field cr_element_mean(const CRFunction& v, const Discretization& disc) {
  P0Field m{Eigen::VectorXd(disc.num_triangles())};
  for (int t = 0; t < disc.num_triangles(); ++t) {
    const auto& s = disc.mesh().element_sides(t);
    m.values[t] = (v.dofs[s[0]] + v.dofs[s[1]] + v.dofs[s[2]]) / 3.0;
  }
  return m;
}

double cr_eval(const CRFunction& v, const Discretization& disc, int t, const Vec2& x) {
  const auto& s = disc.mesh().element_sides(t);
  const double mean = (v.dofs[s[0]] + v.dofs[s[1]] + v.dofs[s[2]]) / 3.0;
  return mean + cr_gradient(v, disc, t).dot(x - disc.centroid(t));
}

Vec2 rt_basis_mean(const Discretization& disc, int t, int local) {
  const int s = disc.mesh().element_sides(t)[local];
  const Vec2& opposite = disc.mesh().vertex(disc.mesh().triangle(t)[local]);
  return disc.mesh().side_sign(t, local) * disc.side_length(s) / (2.0 * disc.area(t)) *
         (disc.centroid(t) - opposite);
}

double rt_divergence(const RTFunction& y, const Discretization& disc, int t) {
  const auto& sides = disc.mesh().element_sides(t);
  double flux = 0.0;
  for (int i = 0; i < 3; ++i)
    flux += disc.mesh().side_sign(t, i) * disc.side_length(sides[i]) * y.dofs[sides[i]];
  return flux / disc.area(t);
}

P0Field rt_divergence(const RTFunction& y, const Discretization& disc) {
  P0Field d{Eigen::VectorXd(disc.num_triangles())};
  for (int t = 0; t < disc.num_triangles(); ++t) d.values[t] = rt_divergence(y, disc, t);
  return d;
}

Vec2 rt_element_mean(const RTFunction& y, const Discretization& disc, int t) {
  const auto& sides = disc.mesh().element_sides(t);
  Vec2 m = Vec2::Zero();
  for (int i = 0; i < 3; ++i) m += y.dofs[sides[i]] * rt_basis_mean(disc, t, i);
  return m;
}

P0VectorField rt_element_mean(const RTFunction& y, const Discretization& disc) {
  P0VectorField m;
  m.values.resize(disc.num_triangles());
  for (int t = 0; t < disc.num_triangles(); ++t) m.values[t] = rt_element_mean(y, disc, t);
  return m;
}

Vec2 rt_eval(const RTFunction& y, const Discretization& disc, int t, const Vec2& x) {
  const auto l = barycentric(disc, t, x);
  constexpr double tol = 1e-12;
  if (l[0] < -tol || l[1] < -tol || l[2] < -tol)
    throw ParameterError("point lies outside triangle " + std::to_string(t));
  // RT0 on T: mean + (div / 2) (x - x_T)
  return rt_element_mean(y, disc, t) + 0.5 * rt_divergence(y, disc, t) * (x - disc.centroid(t));
}

CRFunction cr_interpolate(const ScalarFunction& v, const Discretization& disc) {
  CRFunction u{Eigen::VectorXd(disc.num_sides())};
  for (int s = 0; s < disc.num_sides(); ++s) {
    const auto& sd = disc.mesh().side(s);
    u.dofs[s] = edge_mean(disc.mesh().vertex(sd[0]), disc.mesh().vertex(sd[1]), v, 4);
  }
  return u;
}

RTFunction rt_interpolate(const VectorFunction& y, const Discretization& disc) {
  RTFunction z{Eigen::VectorXd(disc.num_sides())};
  for (int s = 0; s < disc.num_sides(); ++s) {
    const auto& sd = disc.mesh().side(s);
    const Vec2& n = disc.side_normal(s);
    z.dofs[s] = edge_mean(disc.mesh().vertex(sd[0]), disc.mesh().vertex(sd[1]),
                          [&](const Vec2& x) { return y(x).dot(n); }, 4);
  }
  return z;
}

P0Field element_means(const ScalarFunction& f, const Discretization& disc) {
  P0Field m{Eigen::VectorXd(disc.num_triangles())};
  for (int t = 0; t < disc.num_triangles(); ++t) {
    const auto& tri = disc.mesh().triangle(t);
    m.values[t] = triangle_mean(disc.mesh().vertex(tri[0]), disc.mesh().vertex(tri[1]),
                                disc.mesh().vertex(tri[2]), f, 4);
  }
  return m;
}

P0VectorField element_means(const VectorFunction& f, const Discretization& disc) {
  P0VectorField m;
  m.values.resize(disc.num_triangles());
  for (int t = 0; t < disc.num_triangles(); ++t) {
    const auto& tri = disc.mesh().triangle(t);
    const Vec2& a = disc.mesh().vertex(tri[0]);
    const Vec2& b = disc.mesh().vertex(tri[1]);
    const Vec2& c = disc.mesh().vertex(tri[2]);
    m.values[t] = Vec2(triangle_mean(a, b, c, [&](const Vec2& x) { return f(x).x(); }, 4),
                       triangle_mean(a, b, c, [&](const Vec2& x) { return f(x).y(); }, 4));
  }
  return m;
}

SideData side_means(const ScalarFunction& f, const Discretization& disc, SideLabel label) {
  SideData d{label, Eigen::VectorXd::Zero(disc.num_sides())};
  for (int s = 0; s < disc.num_sides(); ++s) {
    if (disc.mesh().label(s) != label) continue;
    const auto& sd = disc.mesh().side(s);
    d.values[s] = edge_mean(disc.mesh().vertex(sd[0]), disc.mesh().vertex(sd[1]), f, 4);
  }
  return d;
}

double discrete_ibp_defect(const CRFunction& v, const RTFunction& y, const Discretization& disc) {
  double lhs = 0.0;
  for (int t = 0; t < disc.num_triangles(); ++t) {
    const auto& s = disc.mesh().element_sides(t);
    const double mean = (v.dofs[s[0]] + v.dofs[s[1]] + v.dofs[s[2]]) / 3.0;
    lhs += disc.area(t) * (cr_gradient(v, disc, t).dot(rt_element_mean(y, disc, t)) +
                           mean * rt_divergence(y, disc, t));
  }
  double rhs = 0.0;
  for (int s = 0; s < disc.num_sides(); ++s)
    if (disc.mesh().is_boundary(s)) rhs += disc.side_length(s) * v.dofs[s] * y.dofs[s];
  return std::abs(lhs - rhs);
}

double p0_inner(const P0VectorField& a, const P0VectorField& b, const Discretization& disc) {
  double sum = 0.0;
  for (int t = 0; t < disc.num_triangles(); ++t) sum += disc.area(t) * a.values[t].dot(b.values[t]);
  return sum;
}

std::string format_field_dump(const FieldDump& dump) {
  std::ostringstream out;
  out.precision(17);
  out << "kind,index,value\n";
  if (dump.cr)
    for (Eigen::Index i = 0; i < dump.cr->dofs.size(); ++i) out << "cr," << i << ',' << dump.cr->dofs[i] << '\n';
  if (dump.rt)
    for (Eigen::Index i = 0; i < dump.rt->dofs.size(); ++i) out << "rt," << i << ',' << dump.rt->dofs[i] << '\n';
  if (dump.p0_scalar)
    for (Eigen::Index i = 0; i < dump.p0_scalar->values.size(); ++i)
      out << "p0s," << i << ',' << dump.p0_scalar->values[i] << '\n';
  if (dump.p0_vector) {
    const auto& v = dump.p0_vector->values;
    for (size_t i = 0; i < v.size(); ++i) out << "p0vx," << i << ',' << v[i].x() << '\n';
    for (size_t i = 0; i < v.size(); ++i) out << "p0vy," << i << ',' << v[i].y() << '\n';
  }
  return out.str();
}

}  // namespace gcfem
