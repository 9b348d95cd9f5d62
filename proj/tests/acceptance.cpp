// Acceptance suite: one line per criterion, tolerances fixed below.
//
// The flow runs with tau = 1000 in the study criteria. The converged discrete
// solution does not depend on tau; the large step only reduces the iteration
// count (see README).

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "gcfem/dual_solver.hpp"
#include "gcfem/duality.hpp"
#include "gcfem/energy.hpp"
#include "gcfem/experiments.hpp"

using namespace gcfem;

namespace {

constexpr double kStudyTau = 1000.0;
constexpr double kStudyEps = 1e-8;
const std::vector<int> kLevels{1, 2, 3, 4, 5};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

struct Outcome {
  bool pass;
  std::string detail;
};

std::string fmt(const char* f, double a) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

int failures = 0;
std::map<int, std::string> summary;

void report(int id, const Outcome& o, double secs) {
  char head[48];
  std::snprintf(head, sizeof head, "criterion %2d: %s  ", id, o.pass ? "PASS" : "FAIL");
  summary[id] = head + o.detail + fmt("  (%.1f s)", secs);
  std::printf("%s\n", summary[id].c_str());
  std::fflush(stdout);
  failures += !o.pass;
}

FlowParams study_flow(double eps = kStudyEps) { return FlowParams{kStudyTau, eps, 50000, 1e-10, nullptr}; }

bool in_window(double x, double lo, double hi) { return x >= lo && x <= hi; }

// Every recorded run feeds the stability check of criterion 6.
struct StabilityLog {
  int runs = 0;
  int monotone_violations = 0;
  int telescope_violations = 0;
  double worst_monotone = 0.0;
  double worst_telescope = -1e300;

  void add(const FlowReport& rep) {
    ++runs;
    const auto& D = rep.dual_energy_history;
    const double scale = 1.0 + std::abs(D.front());
    double dissipated = 0.0;
    for (size_t k = 1; k < D.size(); ++k) {
      const double drop = (D[k - 1] - D[k]) / scale;
      worst_monotone = std::max(worst_monotone, drop);
      if (drop > 1e-12) ++monotone_violations;
      const double step = rep.step_norm_history[k - 1];
      dissipated += rep.tau * step * step;
      const double excess = (-D[k] + dissipated - (-D.front())) / scale;
      worst_telescope = std::max(worst_telescope, excess);
      if (excess > 1e-9) ++telescope_violations;
    }
  }
};

StabilityLog stability;

std::map<std::pair<double, int>, LevelSolution> solve_all(const std::vector<double>& Cs) {
  std::map<std::pair<double, int>, LevelSolution> out;
  for (double C : Cs) {
    for (int level : kLevels) {
      const auto t0 = Clock::now();
      LevelSolution sol = solve_level({C, 1.0}, level, study_flow());
      std::printf("  solved C = %-4g level %d: %6d iterations, residual %.2e, %.1f s\n", C, level,
                  sol.flow.iterations, sol.flow.residual_norm, seconds_since(t0));
      std::fflush(stdout);
      stability.add(sol.flow);
      out.emplace(std::make_pair(C, level), std::move(sol));
    }
  }
  return out;
}

ConvergenceTable table_for(const std::map<std::pair<double, int>, LevelSolution>& sols, double C, bool apriori) {
  std::vector<ConvergenceRow> rows;
  for (int level : kLevels) {
    const LevelSolution& s = sols.at({C, level});
    rows.push_back(apriori ? apriori_row(s, {C, 1.0}) : aposteriori_row(s, {C, 1.0}));
  }
  return make_table(std::move(rows));
}

void print_table(const char* title, const ConvergenceTable& t) {
  std::printf("  %s\n", title);
  for (const auto& r : t.rows)
    std::printf("    level %d  h %.4e  N %7lld  e_tot %.4e  e_gap %.4e  eoc_gap %6s  identity_gap %.2e\n", r.level, r.h,
                r.N, r.e_tot, r.e_gap, r.eoc_gap ? fmt("%.3f", *r.eoc_gap).c_str() : "-", r.identity_gap);
}

// Criteria 1-3 share one flow solve per (C, level).
void criteria_1_to_3() {
  const auto t0 = Clock::now();
  const auto sols = solve_all({2.5, 10.0});

  std::string detail1, detail2;
  bool pass1 = true, pass2 = true;
  double worst_identity = 0.0;
  for (double C : {2.5, 10.0}) {
    const ConvergenceTable t = table_for(sols, C, true);
    print_table(C == 2.5 ? "a priori, C = 2.5" : "a priori, C = 10", t);
    const double eg = t.mean_eoc_gap(3), et = t.mean_eoc_tot(3);
    pass1 &= in_window(eg, 1.7, 2.3) && in_window(et, 1.7, 2.3);
    detail1 += fmt("C=%g: ", C) + fmt("mean EOC e_gap %.3f, ", eg) + fmt("e_tot %.3f; ", et);
    for (const auto& r : t.rows) {
      worst_identity = std::max(worst_identity, r.identity_gap);
      pass2 &= r.identity_gap <= 1e-6;
    }
  }
  detail1 += "window [1.7, 2.3]";
  detail2 = fmt("max |e_tot - e_gap|/e_gap = %.2e (<= 1e-6)", worst_identity);

  const ConvergenceTable post = table_for(sols, 10.0, false);
  print_table("a posteriori, C = 10", post);
  const double eg = post.mean_eoc_gap(3);
  bool pass3 = in_window(eg, 0.7, 1.3);
  double worst_post = 0.0;
  for (const auto& r : post.rows)
    if (r.level >= 3) worst_post = std::max(worst_post, r.identity_gap);
  pass3 &= worst_post <= 0.10;
  const double secs = seconds_since(t0);
  const std::string detail3 = fmt("mean EOC e_gap %.3f in [0.7, 1.3]; ", eg) +
                              fmt("max identity gap (levels >= 3) %.3e <= 0.10", worst_post);

  report(1, {pass1, detail1}, secs);
  report(2, {pass2, detail2}, 0.0);
  report(3, {pass3, detail3}, 0.0);
  if (secs > 300.0) std::printf("  note: criteria 1-3 took %.0f s, above the 5 min budget\n", secs);
}

Outcome criterion_4() {
  const LevelSolution s = solve_level({10.0, 1.0}, 2, study_flow());
  stability.add(s.flow);
  // the reconstruction meets the constraints to solver accuracy, not to round-off
  const EnergyValue I = primal_energy_h(s.primal.u, s.data, PrimalTolerance{1e-6, 1e-6});
  const EnergyValue D = dual_energy_h(s.flow.z, s.data);
  if (!I.feasible || !D.feasible) return {false, "reconstructed pair is not admissible: " + to_string(I.violation)};
  const double gap = std::abs(I.value - D.value);
  const double bound = 1e-6 * (1.0 + std::abs(I.value));
  return {gap <= bound, fmt("|I - D| = %.2e", gap) + fmt(" <= %.2e", bound)};
}

double max_gradient_ratio(const CRFunction& v, const ProblemData& data) {
  double worst = 0.0;
  for (int t = 0; t < data.disc.num_triangles(); ++t)
    worst = std::max(worst, cr_gradient(v, data.disc, t).norm() / data.zeta.values[t]);
  return worst;
}

Outcome criterion_5() {
  // a tighter stopping tolerance so the discrete pair is exact to the identity's resolution
  const LevelSolution s = solve_level({10.0, 1.0}, 2, study_flow(1e-12));
  stability.add(s.flow);
  const ProblemData& data = s.data;
  const DofLayout layout = make_dof_layout(data);
  if (!layout.kernel) return {false, "no divergence-free basis"};

  // r: Dirichlet dofs from u_D, zero elsewhere
  CRFunction r = cr_zero(data.disc);
  for (int side = 0; side < data.disc.num_sides(); ++side)
    if (data.disc.mesh().label(side) == SideLabel::Dirichlet) r.dofs[side] = data.u_dirichlet.values[side];

  std::mt19937 rng(20240601);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  double worst = 0.0;
  int admissible = 0;
  for (int k = 0; k < 20; ++k) {
    const double mu = 0.3 + 0.6 * (0.5 + 0.5 * u(rng));
    CRFunction v{mu * s.primal.u.dofs + (1.0 - mu) * r.dofs};
    CRFunction w = cr_zero(data.disc);
    for (int side = 0; side < data.disc.num_sides(); ++side)
      if (data.disc.mesh().label(side) != SideLabel::Dirichlet) w.dofs[side] = u(rng);
    const double margin = 1.0 - max_gradient_ratio(v, data);
    if (margin > 0.0) v.dofs += (0.9 * margin / max_gradient_ratio(w, data)) * w.dofs;

    Eigen::VectorXd c(layout.kernel->cols());
    for (int i = 0; i < c.size(); ++i) c[i] = (k % 2 ? 2.0 : 0.1) * u(rng);
    const RTFunction y{s.flow.z.dofs + expand_free(layout, *layout.kernel * c).dofs};

    const GapBreakdown gap = discrete_gap_estimator(v, y, data, PrimalTolerance{1e-12, 1e-6});
    if (!gap.admissible()) continue;
    ++admissible;
    const ConvexityMeasures m = discrete_convexity_measures(v, y, s.primal.u, s.flow.z, data);
    worst = std::max(worst, std::abs(gap.total - m.rho_primal_sq - m.rho_dual_sq) / (1.0 + gap.total));
  }
  return {admissible == 20 && worst <= 1e-9,
          std::to_string(admissible) + "/20 admissible pairs, " + fmt("max relative defect %.2e <= 1e-9", worst)};
}

Outcome criterion_6() {
  // the unit time step, recorded alongside the study runs
  const ProblemData data = manufactured_problem({10.0, 1.0}, 2);
  stability.add(run_flow(data, FlowParams{1.0, 1e-8, 50000, 1e-10, nullptr}));
  const bool pass = stability.monotone_violations == 0 && stability.telescope_violations == 0;
  return {pass, std::to_string(stability.runs) + " runs; " + fmt("worst energy decrease %.2e", stability.worst_monotone) +
                    fmt(" (<= 1e-12), worst telescoping excess %.2e (<= 1e-9)", stability.worst_telescope)};
}

Outcome criterion_7() {
  const ManufacturedCase mc{2.0, 1.0};
  const ExactFields ex = exact_solution(mc);
  const LevelSolution s = solve_level(mc, 2, study_flow());
  stability.add(s.flow);
  bool unit_weight = true;
  for (double w : s.flow.min_weight_history) unit_weight &= w == 1.0;
  const RTFunction zi = rt_interpolate(ex.z, s.data.disc);
  double mismatch = 0.0;
  for (int t = 0; t < s.data.disc.num_triangles(); ++t)
    mismatch = std::max(mismatch, (rt_element_mean(s.flow.z, s.data.disc, t) - rt_element_mean(zi, s.data.disc, t)).norm());

  double worst_gap = 0.0;
  for (int level : kLevels) {
    const LevelSolution sl = solve_level(mc, level, study_flow());
    stability.add(sl.flow);
    worst_gap = std::max(worst_gap, std::abs(apriori_row(sl, mc).e_gap));
  }
  const bool pass = s.flow.converged && unit_weight && mismatch <= 1e-8 && worst_gap <= 1e-12;
  return {pass, std::string(unit_weight ? "w = 1 throughout" : "w < 1 occurred") +
                    fmt(", max |Pi z_h - Pi Pi_rt z| = %.2e (<= 1e-8)", mismatch) +
                    fmt(", max e_gap levels 1-5 = %.2e (<= 1e-12)", worst_gap)};
}

Outcome criterion_8() {
  const Discretization disc(build_disk_mesh(1.0, 2));
  const std::vector<std::pair<ScalarFunction, VectorFunction>> scalars{
      {[](const Vec2&) { return 1.0; }, [](const Vec2&) { return Vec2(0, 0); }},
      {[](const Vec2& x) { return x.x(); }, [](const Vec2&) { return Vec2(1, 0); }},
      {[](const Vec2& x) { return x.y(); }, [](const Vec2&) { return Vec2(0, 1); }},
      {[](const Vec2& x) { return x.x() * x.x(); }, [](const Vec2& x) { return Vec2(2 * x.x(), 0); }},
      {[](const Vec2& x) { return x.x() * x.y(); }, [](const Vec2& x) { return Vec2(x.y(), x.x()); }},
      {[](const Vec2& x) { return std::sin(x.x()); }, [](const Vec2& x) { return Vec2(std::cos(x.x()), 0); }},
  };
  double grad_err = 0.0;
  for (const auto& [v, g] : scalars) {
    const CRFunction vi = cr_interpolate(v, disc);
    const P0VectorField gm = element_means(g, disc);
    for (int t = 0; t < disc.num_triangles(); ++t)
      grad_err = std::max(grad_err, (cr_gradient(vi, disc, t) - gm.values[t]).norm());
  }
  const std::vector<std::pair<VectorFunction, ScalarFunction>> vectors{
      {[](const Vec2&) { return Vec2(1, 0); }, [](const Vec2&) { return 0.0; }},
      {[](const Vec2& x) { return x; }, [](const Vec2&) { return 2.0; }},
      {[](const Vec2& x) { return Vec2(x.y() * x.y(), 0); }, [](const Vec2&) { return 0.0; }},
  };
  double div_err = 0.0;
  for (const auto& [y, d] : vectors) {
    const RTFunction yi = rt_interpolate(y, disc);
    const P0Field dm = element_means(d, disc);
    for (int t = 0; t < disc.num_triangles(); ++t)
      div_err = std::max(div_err, std::abs(rt_divergence(yi, disc, t) - dm.values[t]));
  }
  std::mt19937 rng(8);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  double ibp = 0.0;
  for (int level = 0; level <= 3; ++level) {
    const Discretization d(build_disk_mesh(1.0, level));
    for (int k = 0; k < 50; ++k) {
      CRFunction v = cr_zero(d);
      RTFunction y = rt_zero(d);
      for (int s = 0; s < d.num_sides(); ++s) {
        v.dofs[s] = u(rng);
        y.dofs[s] = u(rng);
      }
      ibp = std::max(ibp, discrete_ibp_defect(v, y, d));
    }
  }
  return {grad_err <= 1e-10 && div_err <= 1e-10 && ibp <= 1e-12,
          fmt("gradient %.2e, ", grad_err) + fmt("divergence %.2e (<= 1e-10), ", div_err) +
              fmt("integration by parts %.2e (<= 1e-12)", ibp)};
}

Outcome criterion_9() {
  std::mt19937 rng(9);
  std::uniform_real_distribution<double> u(-3.0, 3.0);
  std::uniform_real_distribution<double> z(0.2, 3.0);
  double fd_err = 0.0;
  int tested = 0;
  while (tested < 100) {
    const double zeta = z(rng);
    const Vec2 s(u(rng), u(rng));
    if (std::abs(s.norm() - zeta) <= 1e-3) continue;
    ++tested;
    const double h = 1e-6;
    Vec2 fd;
    for (int i = 0; i < 2; ++i) {
      Vec2 e = Vec2::Zero();
      e[i] = h;
      fd[i] = (phi_star(s + e, zeta) - phi_star(s - e, zeta)) / (2 * h);
    }
    fd_err = std::max(fd_err, (fd - dphi_star(s, zeta)).norm());
  }
  double fy = 0.0, lemma = 0.0;
  for (int k = 0; k < 1000; ++k) {
    const double zeta = z(rng);
    Vec2 t(u(rng), u(rng));
    if (t.norm() > zeta) t *= zeta / t.norm();
    const Vec2 s(u(rng), u(rng));
    fy = std::min(fy, 0.5 * t.squaredNorm() + phi_star(s, zeta) - s.dot(t));
  }
  for (int k = 0; k < 1000; ++k) {
    const double zeta = z(rng);
    const Vec2 a(u(rng), u(rng)), b(u(rng), u(rng));
    const double w = flow_weight(a, zeta);
    lemma = std::min(lemma, w * b.dot(b - a) - phi_star(b, zeta) + phi_star(a, zeta) - 0.5 * w * (b - a).squaredNorm());
  }
  return {fd_err <= 1e-6 && fy >= 0.0 && lemma >= -1e-12,
          fmt("finite differences %.2e (<= 1e-6), ", fd_err) + fmt("min Fenchel-Young %.2e (>= 0), ", fy) +
              fmt("min frozen-weight defect %.2e (>= -1e-12)", lemma)};
}

Outcome criterion_10() {
  const LevelSolution s = solve_level({10.0, 1.0}, 2, study_flow());
  stability.add(s.flow);
  const ActiveSetReport rep = active_set_report(s.primal.u, s.flow.z, s.data, 1e-6);
  const int nt = s.data.disc.num_triangles();
  return {rep.n_disagree <= 0.01 * nt, std::to_string(rep.n_disagree) + " of " + std::to_string(nt) +
                                           " elements disagree (<= 1%); active: " +
                                           std::to_string(rep.n_active_primal) + " primal, " +
                                           std::to_string(rep.n_active_dual) + " dual"};
}

template <class F>
void timed(int id, F&& f) {
  const auto t0 = Clock::now();
  const Outcome o = f();
  report(id, o, seconds_since(t0));
}

}  // namespace

int main() {
  const auto start = Clock::now();
  std::printf("acceptance suite (flow tau = %g, eps_stop = %g)\n", kStudyTau, kStudyEps);
  criteria_1_to_3();
  timed(4, criterion_4);
  timed(5, criterion_5);
  timed(7, criterion_7);
  timed(8, criterion_8);
  timed(9, criterion_9);
  timed(10, criterion_10);
  timed(6, criterion_6);
  std::printf("\nsummary\n");
  for (const auto& [id, line] : summary) std::printf("%s\n", line.c_str());
  std::printf("%d criteria failed, total %.1f s\n", failures, seconds_since(start));
  return failures == 0 ? 0 : 1;
}
