#include "gcfem/quadrature.hpp"

#include <cmath>
#include <numbers>

#include "gcfem/errors.hpp"

namespace gcfem {

namespace {

void add_orbit3(QuadratureRule& q, double a, double w) {
  // permutations of (a, a, 1 - 2a)
  const double b = 1.0 - 2.0 * a;
  q.barycentric.push_back({a, a, b});
  q.barycentric.push_back({a, b, a});
  q.barycentric.push_back({b, a, a});
  q.weights.insert(q.weights.end(), 3, w);
}

QuadratureRule make_triangle_rule(int degree) {
  QuadratureRule q{QuadratureDomain::Triangle, degree, {}, {}, {}};
  switch (degree) {
    case 1:
      q.barycentric.push_back({1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0});
      q.weights.push_back(1.0);
      break;
    case 2:
      add_orbit3(q, 1.0 / 6.0, 1.0 / 3.0);
      break;
    case 3:
    case 4:
      // Dunavant, 6 points
      add_orbit3(q, 0.445948490915965, 0.223381589678011);
      add_orbit3(q, 0.091576213509771, 0.109951743655322);
      break;
    case 5: {
      // Radon's 7-point rule in closed form
      const double s = std::sqrt(15.0);
      q.barycentric.push_back({1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0});
      q.weights.push_back(9.0 / 40.0);
      add_orbit3(q, (6.0 - s) / 21.0, (155.0 - s) / 1200.0);
      add_orbit3(q, (6.0 + s) / 21.0, (155.0 + s) / 1200.0);
      break;
    }
    default:
      throw ParameterError("triangle quadrature degree must lie in 1..5");
  }
  return q;
}

QuadratureRule make_edge_rule(int degree) {
  if (degree < 1 || degree > 5) throw ParameterError("edge quadrature degree must lie in 1..5");
  QuadratureRule q{QuadratureDomain::Edge, degree, {}, {}, {}};
  const GaussRule g = gauss_legendre_unit((degree + 2) / 2);
  q.params = g.nodes;
  q.weights = g.weights;
  return q;
}

}  // namespace

const QuadratureRule& quadrature_rule(QuadratureDomain domain, int degree) {
  static const std::array<QuadratureRule, 5> triangle_rules = {
      make_triangle_rule(1), make_triangle_rule(2), make_triangle_rule(3), make_triangle_rule(4),
      make_triangle_rule(5)};
  static const std::array<QuadratureRule, 5> edge_rules = {make_edge_rule(1), make_edge_rule(2),
                                                           make_edge_rule(3), make_edge_rule(4),
                                                           make_edge_rule(5)};
  if (degree < 1 || degree > 5) throw ParameterError("quadrature degree must lie in 1..5");
  return domain == QuadratureDomain::Triangle ? triangle_rules[degree - 1] : edge_rules[degree - 1];
}

GaussRule gauss_legendre_unit(int n) {
  if (n < 1) throw ParameterError("Gauss rule needs at least one point");
  GaussRule g;
  g.nodes.resize(n);
  g.weights.resize(n);
  // Newton iteration on P_n from the Chebyshev-like initial guess
  for (int i = 0; i < (n + 1) / 2; ++i) {
    double x = std::cos(std::numbers::pi * (i + 0.75) / (n + 0.5));
    double dp = 0.0;
    for (int iter = 0; iter < 100; ++iter) {
      double p0 = 1.0;
      double p1 = x;
      for (int k = 2; k <= n; ++k) {
        const double p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
      }
      if (n == 1) {
        p1 = x;
        p0 = 1.0;
      }
      dp = n * (x * p1 - p0) / (x * x - 1.0);
      const double dx = p1 / dp;
      x -= dx;
      if (std::abs(dx) < 1e-16) break;
    }
    {
      // recompute derivative at the converged node
      double p0 = 1.0;
      double p1 = x;
      for (int k = 2; k <= n; ++k) {
        const double p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
      }
      if (n == 1) p0 = 1.0;
      dp = n * (x * p1 - p0) / (x * x - 1.0);
    }
    const double w = 2.0 / ((1.0 - x * x) * dp * dp);
    // map [-1, 1] -> [0, 1]; halve weights so they sum to 1
    g.nodes[i] = 0.5 * (1.0 - x);
    g.nodes[n - 1 - i] = 0.5 * (1.0 + x);
    g.weights[i] = 0.5 * w;
    g.weights[n - 1 - i] = 0.5 * w;
  }
  if (n % 2 == 1) g.nodes[n / 2] = 0.5;
  return g;
}

}  // namespace gcfem
