#include "gcfem/duality.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "gcfem/errors.hpp"
#include "gcfem/quadrature.hpp"

namespace gcfem {

namespace {

constexpr int kGaussPoints = 16;

const GaussRule& gauss16() {
  static const GaussRule rule = gauss_legendre_unit(kGaussPoints);
  return rule;
}

// Affine RT0 field on t evaluated without the containment check.
Vec2 rt_affine(const Vec2& mean, double div, const Vec2& centroid, const Vec2& x) {
  return mean + 0.5 * div * (x - centroid);
}

Vec2 quadrature_point(const Mesh& mesh, int t, const std::array<double, 3>& l) {
  const auto& tri = mesh.triangle(t);
  return l[0] * mesh.vertex(tri[0]) + l[1] * mesh.vertex(tri[1]) + l[2] * mesh.vertex(tri[2]);
}

}  // namespace

Reconstruction marini_reconstruct(const RTFunction& z, const P0Field& lambda, const ProblemData& data) {
  const Discretization& disc = data.disc;
  const Mesh& mesh = disc.mesh();
  Reconstruction rec;
  rec.u.dofs = Eigen::VectorXd::Zero(disc.num_sides());
  Eigen::VectorXd first = Eigen::VectorXd::Constant(disc.num_sides(), std::nan(""));
  for (int t = 0; t < disc.num_triangles(); ++t) {
    const Vec2 grad = dphi_star(rt_element_mean(z, disc, t), data.zeta.values[t]);
    for (int i = 0; i < 3; ++i) {
      const int s = mesh.element_sides(t)[i];
      const double trace = lambda.values[t] + grad.dot(disc.side_midpoint(s) - disc.centroid(t));
      if (std::isnan(first[s])) {
        first[s] = trace;
        rec.u.dofs[s] = trace;
      } else {
        rec.conformity_defect = std::max(rec.conformity_defect, std::abs(trace - first[s]));
        rec.u.dofs[s] = 0.5 * (first[s] + trace);
      }
    }
  }
  return rec;
}

GapBreakdown discrete_gap_estimator(const CRFunction& v, const RTFunction& y, const ProblemData& data,
                                    const PrimalTolerance& tol) {
  const Discretization& disc = data.disc;
  GapBreakdown gap;
  gap.per_element.values.resize(disc.num_triangles());
  for (int t = 0; t < disc.num_triangles(); ++t) {
    const Vec2 g = cr_gradient(v, disc, t);
    const Vec2 m = rt_element_mean(y, disc, t);
    const double value = disc.area(t) * (phi_star(m, data.zeta.values[t]) - m.dot(g) + 0.5 * g.squaredNorm());
    gap.per_element.values[t] = value;
    gap.total += value;
  }
  gap.primal = primal_energy_h(v, data, tol);
  gap.dual = dual_energy_h(y, data);
  return gap;
}

Mat2 averaged_hessian(const Vec2& t, const Vec2& s, double zeta) {
  const Vec2 d = t - s;
  const double a = d.squaredNorm();
  std::vector<double> breaks{0.0};
  if (a > 0.0) {
    // |s + l d|^2 = zeta^2
    const double b = 2.0 * s.dot(d);
    const double c = s.squaredNorm() - zeta * zeta;
    const double disc = b * b - 4.0 * a * c;
    if (disc > 0.0) {
      const double q = -0.5 * (b + std::copysign(std::sqrt(disc), b));
      std::vector<double> roots{q / a};
      if (q != 0.0) roots.push_back(c / q);
      std::sort(roots.begin(), roots.end());
      for (double r : roots)
        if (r > 0.0 && r < 1.0 && r > breaks.back()) breaks.push_back(r);
    }
  }
  breaks.push_back(1.0);

  const GaussRule& rule = gauss16();
  const double length = std::sqrt(a);
  Mat2 sum = Mat2::Zero();
  for (size_t p = 0; p + 1 < breaks.size(); ++p) {
    const double lo = breaks[p];
    const double hi = breaks[p + 1];
    if (hi <= lo) continue;
    // the branch is fixed on each piece; decide it at the piece midpoint
    const double mid = 0.5 * (lo + hi);
    const bool inside = (s + mid * d).norm() <= zeta;
    if (inside) {
      // int_lo^hi 2 (1 - l) dl
      sum += ((1.0 - lo) * (1.0 - lo) - (1.0 - hi) * (1.0 - hi)) * Mat2::Identity();
      continue;
    }
    const int pieces = std::max(1, static_cast<int>(std::ceil(length * (hi - lo) / (0.5 * zeta))));
    const double width = (hi - lo) / pieces;
    for (int k = 0; k < pieces; ++k) {
      const double start = lo + k * width;
      for (int q = 0; q < kGaussPoints; ++q) {
        const double l = start + rule.nodes[q] * width;
        const Vec2 x = s + l * d;
        const double r = x.norm();
        const Vec2 e = x / r;
        const Mat2 h = (zeta / r) * (Mat2::Identity() - e * e.transpose());
        sum += (rule.weights[q] * width * 2.0 * (1.0 - l)) * h;
      }
    }
  }
  return sum;
}

ConvexityMeasures discrete_convexity_measures(const CRFunction& v, const RTFunction& y, const CRFunction& u_cr,
                                              const RTFunction& z_rt, const ProblemData& data, double active_tol) {
  const Discretization& disc = data.disc;
  ConvexityMeasures m;
  for (int t = 0; t < disc.num_triangles(); ++t) {
    const double area = disc.area(t);
    const double zeta = data.zeta.values[t];
    const Vec2 gv = cr_gradient(v, disc, t);
    const Vec2 gu = cr_gradient(u_cr, disc, t);
    m.primal_gradient_term += 0.5 * area * (gv - gu).squaredNorm();
    if (gu.norm() >= zeta * (1.0 - active_tol)) {
      const Vec2 zm = rt_element_mean(z_rt, disc, t);
      m.primal_active_term += area * (zm.norm() / zeta - 1.0) * (zeta * zeta - gu.dot(gv));
      ++m.active_elements;
    }
    const Vec2 ym = rt_element_mean(y, disc, t);
    const Vec2 zm = rt_element_mean(z_rt, disc, t);
    const Vec2 diff = ym - zm;
    m.rho_dual_sq += 0.5 * area * diff.dot(averaged_hessian(ym, zm, zeta) * diff);
  }
  m.rho_primal_sq = m.primal_gradient_term + m.primal_active_term;
  return m;
}

Vec2 p1_gradient(const P1Function& v, const Discretization& disc, int t) {
  // grad lambda_i = -|S_i| n_i / (2|T|), S_i opposite vertex i
  const auto& tri = disc.mesh().triangle(t);
  const auto& sides = disc.mesh().element_sides(t);
  const auto& normals = disc.geometry().outward_normal[t];
  Vec2 g = Vec2::Zero();
  for (int i = 0; i < 3; ++i) g -= v.values[tri[i]] * disc.side_length(sides[i]) * normals[i];
  return g / (2.0 * disc.area(t));
}

double p1_eval(const P1Function& v, const Discretization& disc, int t, const Vec2& x) {
  const auto& tri = disc.mesh().triangle(t);
  const double mean = (v.values[tri[0]] + v.values[tri[1]] + v.values[tri[2]]) / 3.0;
  return mean + p1_gradient(v, disc, t).dot(x - disc.centroid(t));
}

PostProcessed conforming_postprocess(const CRFunction& u_cr, const ProblemData& data,
                                     const ScalarFunction& exact_boundary) {
  const Discretization& disc = data.disc;
  const Mesh& mesh = disc.mesh();
  const int nv = mesh.num_vertices();
  Eigen::VectorXd sum = Eigen::VectorXd::Zero(nv);
  Eigen::VectorXd count = Eigen::VectorXd::Zero(nv);
  for (int t = 0; t < disc.num_triangles(); ++t) {
    const auto& tri = mesh.triangle(t);
    const auto& s = mesh.element_sides(t);
    for (int i = 0; i < 3; ++i) {
      const int j = (i + 1) % 3;
      const int k = (i + 2) % 3;
      sum[tri[i]] += u_cr.dofs[s[j]] + u_cr.dofs[s[k]] - u_cr.dofs[s[i]];
      count[tri[i]] += 1.0;
    }
  }
  std::vector<bool> on_boundary(nv, false);
  for (int s = 0; s < mesh.num_sides(); ++s)
    if (mesh.is_boundary(s)) on_boundary[mesh.side(s)[0]] = on_boundary[mesh.side(s)[1]] = true;

  PostProcessed out;
  out.v.values.resize(nv);
  for (int v = 0; v < nv; ++v)
    out.v.values[v] = on_boundary[v] ? exact_boundary(mesh.vertex(v)) : sum[v] / count[v];

  double worst = 0.0;
  for (int t = 0; t < disc.num_triangles(); ++t)
    worst = std::max(worst, p1_gradient(out.v, disc, t).norm() / data.zeta.values[t]);
  out.scaling = 1.0 / std::max(1.0, worst);
  out.v.values *= out.scaling;
  for (int v = 0; v < nv; ++v)
    if (on_boundary[v])
      out.boundary_defect = std::max(out.boundary_defect, std::abs(out.v.values[v] - exact_boundary(mesh.vertex(v))));
  return out;
}

ContinuousGap continuous_gap_estimator(const P1Function& v, const RTFunction& y, const ProblemData& data) {
  const Discretization& disc = data.disc;
  const QuadratureRule& rule = quadrature_rule(QuadratureDomain::Triangle, 4);
  ContinuousGap gap;
  gap.per_element.values.resize(disc.num_triangles());
  for (int t = 0; t < disc.num_triangles(); ++t) {
    const double zeta = data.zeta.values[t];
    const Vec2 g = p1_gradient(v, disc, t);
    if (g.norm() > zeta + 1e-12) gap.feasible = false;
    const Vec2 mean = rt_element_mean(y, disc, t);
    const double div = rt_divergence(y, disc, t);
    double integral = 0.0;
    for (int q = 0; q < rule.size(); ++q) {
      const Vec2 x = quadrature_point(disc.mesh(), t, rule.barycentric[q]);
      const Vec2 yx = rt_affine(mean, div, disc.centroid(t), x);
      integral += rule.weights[q] * (0.5 * g.squaredNorm() - g.dot(yx) + phi_star(yx, zeta));
    }
    gap.per_element.values[t] = disc.area(t) * integral;
    gap.total += gap.per_element.values[t];
  }
  return gap;
}

ContinuousErrors continuous_total_error(const P1Function& v, const RTFunction& y, const ProblemData& data,
                                        const ExactFields& exact) {
  const Discretization& disc = data.disc;
  const QuadratureRule& rule = quadrature_rule(QuadratureDomain::Triangle, 4);
  ContinuousErrors err;
  for (int t = 0; t < disc.num_triangles(); ++t) {
    const double zeta = data.zeta.values[t];
    const Vec2 g = p1_gradient(v, disc, t);
    const Vec2 mean = rt_element_mean(y, disc, t);
    const double div = rt_divergence(y, disc, t);
    double primal = 0.0;
    double dual = 0.0;
    for (int q = 0; q < rule.size(); ++q) {
      const Vec2 x = quadrature_point(disc.mesh(), t, rule.barycentric[q]);
      const Vec2 gu = exact.grad_u(x);
      const Vec2 zx = exact.z(x);
      double p = 0.5 * (g - gu).squaredNorm();
      if (exact.in_active_set(x)) p += (zx.norm() / zeta - 1.0) * (zeta * zeta - gu.dot(g));
      primal += rule.weights[q] * p;
      const Vec2 diff = rt_affine(mean, div, disc.centroid(t), x) - zx;
      dual += rule.weights[q] * 0.5 * diff.dot(averaged_hessian(zx + diff, zx, zeta) * diff);
    }
    err.rho_primal_sq += disc.area(t) * primal;
    err.rho_dual_sq += disc.area(t) * dual;
  }
  return err;
}

std::vector<double> eoc(const std::vector<double>& errors, const std::vector<double>& hs) {
  if (errors.size() != hs.size() || errors.size() < 2)
    throw ParameterError("eoc needs two equally long sequences of length >= 2");
  for (size_t i = 0; i < errors.size(); ++i)
    if (!(errors[i] > 0.0) || !(hs[i] > 0.0)) throw ParameterError("eoc needs positive errors and mesh sizes");
  std::vector<double> rates;
  for (size_t i = 1; i < errors.size(); ++i)
    rates.push_back((std::log(errors[i]) - std::log(errors[i - 1])) / (std::log(hs[i]) - std::log(hs[i - 1])));
  return rates;
}

std::string format_indicators(const P0Field& per_element) {
  std::ostringstream out;
  out.precision(17);
  out << "element,eta_sq_contribution\n";
  for (Eigen::Index t = 0; t < per_element.values.size(); ++t) out << t << ',' << per_element.values[t] << '\n';
  return out.str();
}

}  // namespace gcfem
