#pragma once

#include <array>
#include <vector>

#include "gcfem/types.hpp"

namespace gcfem {

enum class QuadratureDomain { Triangle, Edge };

/// Weights are normalised to the reference measure (they sum to 1), so a rule
/// applied to f returns the mean of f.
struct QuadratureRule {
  QuadratureDomain domain;
  int degree;
  /// Barycentric coordinates (triangle rules).
  std::vector<std::array<double, 3>> barycentric;
  /// Affine parameters in [0, 1] (edge rules).
  std::vector<double> params;
  std::vector<double> weights;

  int size() const { return static_cast<int>(weights.size()); }
};

/// Rule exact for polynomials up to `degree` (1..5). Throws ParameterError.
const QuadratureRule& quadrature_rule(QuadratureDomain domain, int degree);

/// n-point Gauss-Legendre rule on [0, 1] with weights summing to 1.
struct GaussRule {
  std::vector<double> nodes;
  std::vector<double> weights;
};
GaussRule gauss_legendre_unit(int n);

/// Mean of f over the triangle (a, b, c).
template <class F>
double triangle_mean(const Vec2& a, const Vec2& b, const Vec2& c, F&& f, int degree = 4) {
  const QuadratureRule& q = quadrature_rule(QuadratureDomain::Triangle, degree);
  double sum = 0.0;
  for (int k = 0; k < q.size(); ++k) {
    const auto& l = q.barycentric[k];
    sum += q.weights[k] * f(Vec2(l[0] * a + l[1] * b + l[2] * c));
  }
  return sum;
}

/// Mean of f over the segment [a, b].
template <class F>
double edge_mean(const Vec2& a, const Vec2& b, F&& f, int degree = 4) {
  const QuadratureRule& q = quadrature_rule(QuadratureDomain::Edge, degree);
  double sum = 0.0;
  for (int k = 0; k < q.size(); ++k) sum += q.weights[k] * f(Vec2(a + q.params[k] * (b - a)));
  return sum;
}

}  // namespace gcfem
