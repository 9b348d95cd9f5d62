#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "gcfem/dual_solver.hpp"
#include "gcfem/duality.hpp"

namespace gcfem {

/// Torsion-type model problem on the disk of radius r: f = C, zeta = 1,
/// u = 0 on the circle. Inactive (no contact with the constraint) iff C <= 2/r.
struct ManufacturedCase {
  double C = 10.0;
  double r = 1.0;

  void validate() const;
  bool inactive() const { return C <= 2.0 / r; }
};

/// Closed-form u, grad u, z = -C/2 x and the active set {|x| >= 2/C}.
ExactFields exact_solution(const ManufacturedCase& mc);

/// Disk mesh of the given level with f_h, zeta_h and u_D^h = pi_h u.
ProblemData manufactured_problem(const ManufacturedCase& mc, int level);

enum class StudyKind { Apriori, Aposteriori };

struct StudyConfig {
  ManufacturedCase mc;
  std::vector<int> levels{1, 2, 3, 4, 5};
  FlowParams flow{1.0, 1e-8, 10000, 1e-10, nullptr};
  StudyKind study = StudyKind::Apriori;
  std::string out;
  int jobs = 1;

  /// Throws ParameterError on empty or non-increasing levels, levels outside
  /// 0..6, non-positive jobs, or invalid case/flow parameters.
  void validate() const;
};

/// Parses {case:{C,r}, levels:[...], flow:{tau,eps_stop,max_iter},
/// study:"apriori"|"aposteriori", out:"path"}; missing keys keep defaults.
/// Throws ParseError on malformed input.
StudyConfig parse_study_config(const std::string& text);
StudyConfig load_study_config(const std::filesystem::path& path);

/// Flow solution and Marini reconstruction on one level.
struct LevelSolution {
  int level = 0;
  ProblemData data;
  FlowReport flow;
  Reconstruction primal;
};

/// Throws NonConvergenceError whose message names the level.
LevelSolution solve_level(const ManufacturedCase& mc, int level, const FlowParams& flow);

struct ConvergenceRow {
  int level = 0;
  double h = 0.0;
  long long N = 0;
  double e_tot = 0.0;
  double e_gap = 0.0;
  /// Unset on the first row.
  std::optional<double> eoc_tot;
  std::optional<double> eoc_gap;
  double identity_gap = 0.0;

  // diagnostics (not part of the CSV)
  int iterations = 0;
  double residual_norm = 0.0;
  double conformity_defect = 0.0;
  double scaling = 1.0;
  double boundary_defect = 0.0;
};

struct ConvergenceTable {
  std::vector<ConvergenceRow> rows;

  /// Columns `level,h,N,e_tot,e_gap,eoc_tot,eoc_gap,identity_gap`.
  std::string to_csv() const;
  /// Mean of the last `count` EOC values of e_gap / e_tot.
  double mean_eoc_gap(int count) const;
  double mean_eoc_tot(int count) const;
};

/// e_gap = eta^2_h(Pi^cr u, Pi^rt z), e_tot = rho^2_I + rho^2_{-D} of the same
/// pair against the solved discrete pair.
ConvergenceRow apriori_row(const LevelSolution& sol, const ManufacturedCase& mc);
/// Continuous estimator and total error of the post-processed primal
/// approximation and the discrete dual solution.
ConvergenceRow aposteriori_row(const LevelSolution& sol, const ManufacturedCase& mc);
/// Fills the EOC columns (rows ordered by level).
ConvergenceTable make_table(std::vector<ConvergenceRow> rows);

/// Levels are solved on up to config.jobs threads; results do not depend on it.
ConvergenceTable run_apriori_study(const StudyConfig& config);
ConvergenceTable run_aposteriori_study(const StudyConfig& config);
ConvergenceTable run_study(const StudyConfig& config);

struct ActiveSetReport {
  int n_active_primal = 0;
  int n_active_dual = 0;
  int n_disagree = 0;
};

/// Elements with |grad_h u| >= zeta_h (1 - tol), with |Pi_h z| >= zeta_h (1 - tol),
/// and the size of the symmetric difference.
ActiveSetReport active_set_report(const CRFunction& u_cr, const RTFunction& z_rt, const ProblemData& data,
                                  double tol = 1e-6);

}  // namespace gcfem
