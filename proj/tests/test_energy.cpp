#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <random>

#include "gcfem/energy.hpp"

using namespace gcfem;

namespace {

std::mt19937 rng(12345);

Vec2 random_vec(double scale) {
  std::uniform_real_distribution<double> u(-scale, scale);
  return {u(rng), u(rng)};
}

double random_zeta() { return std::uniform_real_distribution<double>(0.2, 3.0)(rng); }

ProblemData single_triangle(const ScalarFunction& u_d, double f) {
  const Discretization disc(Mesh({{0, 0}, {1, 0}, {0, 1}}, {{{0, 1, 2}}}));
  return project_data([f](const Vec2&) { return f; }, [](const Vec2&) { return 0.0; }, u_d,
                      [](const Vec2&) { return 1.0; }, disc);
}

}  // namespace

TEST_CASE("phi_star branches") {
  CHECK(phi_star({0.6, 0.8}, 1.0) == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(phi_star({3, 4}, 1.0) == doctest::Approx(4.5).epsilon(1e-15));
  CHECK(phi_star({0, 0}, 2.0) == 0.0);
}

TEST_CASE("dphi_star is the clamp") {
  CHECK((dphi_star({0.3, 0.4}, 1.0) - Vec2(0.3, 0.4)).norm() < 1e-15);
  CHECK((dphi_star({3, 4}, 1.0) - Vec2(0.6, 0.8)).norm() < 1e-15);
  CHECK(dphi_star({0, 0}, 1.0).norm() == 0.0);
}

TEST_CASE("d2phi_star") {
  const Hessian out = d2phi_star({2, 0}, 1.0);
  CHECK((out.value - (Mat2() << 0, 0, 0, 0.5).finished()).norm() < 1e-15);
  CHECK_FALSE(out.near_kink);
  const Hessian in = d2phi_star({0.1, 0.1}, 1.0);
  CHECK((in.value - Mat2::Identity()).norm() == 0.0);
  const Hessian kink = d2phi_star({1.0 + 1e-13, 0.0}, 1.0);
  CHECK(kink.near_kink);
  CHECK((kink.value - Mat2::Identity()).norm() == 0.0);
}

TEST_CASE("flow_weight") {
  CHECK(flow_weight({3, 4}, 1.0) == doctest::Approx(0.2).epsilon(1e-15));
  CHECK(flow_weight({0, 0}, 1.0) == 1.0);
  CHECK(flow_weight({0.3, 0.4}, 1.0) == 1.0);
  for (int k = 0; k < 1000; ++k) {
    const Vec2 s = random_vec(4.0);
    const double zeta = random_zeta();
    const double w = flow_weight(s, zeta);
    CHECK(w > 0.0);
    CHECK(w <= 1.0);
    CHECK((w * s - dphi_star(s, zeta)).norm() <= 1e-15 * (1.0 + s.norm()));
  }
}

TEST_CASE("Fenchel-Young inequality and its equality cases") {
  double worst = 0.0;
  for (int k = 0; k < 1000; ++k) {
    const double zeta = random_zeta();
    Vec2 t = random_vec(zeta);
    if (t.norm() > zeta) t *= zeta / t.norm();
    const Vec2 s = random_vec(3.0 * zeta);
    const double fy = 0.5 * t.squaredNorm() + phi_star(s, zeta) - s.dot(t);
    worst = std::min(worst, fy);
    const Vec2 opt = dphi_star(s, zeta);
    CHECK(std::abs(0.5 * opt.squaredNorm() + phi_star(s, zeta) - s.dot(opt)) < 1e-12);
  }
  CHECK(worst >= 0.0);
}

TEST_CASE("dphi_star is non-expansive") {
  for (int k = 0; k < 1000; ++k) {
    const double zeta = random_zeta();
    const Vec2 a = random_vec(3.0), b = random_vec(3.0);
    CHECK((dphi_star(a, zeta) - dphi_star(b, zeta)).norm() <= (a - b).norm() + 1e-15);
  }
}

TEST_CASE("derivatives agree with finite differences away from the kink") {
  const double h = 1e-6;
  int tested = 0;
  while (tested < 100) {
    const double zeta = random_zeta();
    const Vec2 s = random_vec(3.0);
    if (std::abs(s.norm() - zeta) <= 1e-3 || s.norm() < 1e-3) continue;
    ++tested;
    Vec2 fd;
    Mat2 hfd;
    for (int i = 0; i < 2; ++i) {
      Vec2 e = Vec2::Zero();
      e[i] = h;
      fd[i] = (phi_star(s + e, zeta) - phi_star(s - e, zeta)) / (2 * h);
      hfd.col(i) = (dphi_star(s + e, zeta) - dphi_star(s - e, zeta)) / (2 * h);
    }
    CHECK((fd - dphi_star(s, zeta)).norm() <= 1e-6);
    CHECK((hfd - d2phi_star(s, zeta).value).norm() <= 1e-5);
  }
}

TEST_CASE("frozen-weight inequality of the flow") {
  // w(a) b.(b - a) >= phi*(b) - phi*(a) + w(a)/2 |b - a|^2
  double worst = 0.0;
  for (int k = 0; k < 1000; ++k) {
    const double zeta = random_zeta();
    const Vec2 a = random_vec(3.0 * zeta), b = random_vec(3.0 * zeta);
    const double w = flow_weight(a, zeta);
    const double defect = w * b.dot(b - a) - (phi_star(b, zeta) - phi_star(a, zeta)) - 0.5 * w * (b - a).squaredNorm();
    worst = std::min(worst, defect);
  }
  CHECK(worst >= -1e-12);
}

TEST_CASE("discrete primal energy") {
  {
    const Discretization disc(build_disk_mesh(1.0, 1));
    const ProblemData data = project_data([](const Vec2&) { return 10.0; }, [](const Vec2&) { return 0.0; },
                                          [](const Vec2&) { return 0.0; }, [](const Vec2&) { return 1.0; }, disc);
    const EnergyValue e = primal_energy_h(cr_zero(disc), data);
    CHECK(e.feasible);
    CHECK(e.value == 0.0);
  }
  const ProblemData data = single_triangle([](const Vec2& x) { return x.x(); }, 0.0);
  const CRFunction v = cr_interpolate([](const Vec2& x) { return x.x(); }, data.disc);
  const EnergyValue e = primal_energy_h(v, data);
  CHECK(e.feasible);
  CHECK(e.value == doctest::Approx(0.25).epsilon(1e-14));

  const ProblemData steep = single_triangle([](const Vec2& x) { return 2.0 * x.x(); }, 0.0);
  const CRFunction w = cr_interpolate([](const Vec2& x) { return 2.0 * x.x(); }, steep.disc);
  const EnergyValue bad = primal_energy_h(w, steep);
  CHECK_FALSE(bad.feasible);
  CHECK(bad.violation == Violation::GradientConstraint);

  CRFunction off = v;
  off.dofs.array() += 0.1;
  const EnergyValue trace = primal_energy_h(off, data);
  CHECK_FALSE(trace.feasible);
  CHECK(trace.violation == Violation::DirichletTrace);
  CHECK(primal_energy_h(off, data, PrimalTolerance{1e-12, 0.2}).feasible);
}

TEST_CASE("discrete dual energy") {
  {
    const Discretization disc(build_disk_mesh(1.0, 1));
    const ProblemData data = project_data([](const Vec2&) { return 0.0; }, [](const Vec2&) { return 0.0; },
                                          [](const Vec2&) { return 0.0; }, [](const Vec2&) { return 1.0; }, disc);
    const EnergyValue e = dual_energy_h(rt_zero(disc), data);
    CHECK(e.feasible);
    CHECK(e.value == 0.0);
  }
  const ProblemData data = single_triangle([](const Vec2&) { return 0.0; }, 0.0);
  const RTFunction y = rt_interpolate([](const Vec2&) { return Vec2(3, 4); }, data.disc);
  const EnergyValue e = dual_energy_h(y, data);
  CHECK(e.feasible);
  CHECK(e.value == doctest::Approx(-2.25).epsilon(1e-14));

  const RTFunction x = rt_interpolate([](const Vec2& p) { return p; }, data.disc);
  const EnergyValue bad = dual_energy_h(x, data);
  CHECK_FALSE(bad.feasible);
  CHECK(bad.violation == Violation::Divergence);
  CHECK_FALSE(to_string(Violation::Divergence).empty());
}
