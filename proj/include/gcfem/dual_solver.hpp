#pragma once

#include <iosfwd>
#include <memory>
#include <utility>
#include <vector>

#include <Eigen/Sparse>

#include "gcfem/errors.hpp"
#include "gcfem/problem.hpp"

namespace gcfem {

using SparseMatrix = Eigen::SparseMatrix<double>;

struct FlowParams {
  double tau = 1.0;
  double eps_stop = 1e-4;
  int max_iter = 10000;
  double linear_tol = 1e-10;
  /// Per-iteration residual log (`--verbose`); null disables logging.
  std::ostream* log = nullptr;

  /// Throws ParameterError unless every field is strictly positive.
  void validate() const;
};

/// Free RT dofs (all sides not labelled Neumann) and, for simply connected
/// meshes, a basis of the divergence-free free fields: the curls of vertex
/// hat functions, with vertices joined by Neumann sides merged and one
/// gauge group dropped.
struct DofLayout {
  std::vector<int> free_sides;
  /// side -> free index, -1 for fixed (Neumann) sides.
  std::vector<int> free_index;
  /// Full-length RT dof vector holding g_h on Neumann sides, zero elsewhere.
  Eigen::VectorXd fixed_values;
  std::shared_ptr<const SparseMatrix> kernel;

  int num_free() const { return static_cast<int>(free_sides.size()); }
};

DofLayout make_dof_layout(const ProblemData& data);

/// Block system [[A, B^T], [B, 0]] [z; lambda] = [rhs_momentum; rhs_constraint]
/// over the free RT dofs; B holds the integrated element divergences.
struct SaddleSystem {
  SparseMatrix A;
  SparseMatrix B;
  Eigen::VectorXd rhs_momentum;
  Eigen::VectorXd rhs_constraint;
  /// Optional divergence-free basis (columns span ker B); enables the
  /// nullspace solve path.
  std::shared_ptr<const SparseMatrix> kernel;
};

struct SaddleSolution {
  Eigen::VectorXd z;
  Eigen::VectorXd lambda;
  double relative_residual = 0.0;
};

/// Reusable solver for a fixed constraint matrix B: factorizes B B^T once and
/// the reduced kernel system per call. Falls back to sparse LU on the block
/// system when no kernel basis is given or the nullspace solve misses the
/// residual contract.
class SaddleSolver {
 public:
  SaddleSolver(const SparseMatrix& B, std::shared_ptr<const SparseMatrix> kernel, double linear_tol = 1e-10);
  ~SaddleSolver();
  SaddleSolver(SaddleSolver&&) noexcept;
  SaddleSolver& operator=(SaddleSolver&&) noexcept;

  /// Throws SolverError (with the achieved residual) on failure.
  SaddleSolution solve(const SaddleSystem& system);

  /// True if the last solve used the block LU fallback.
  bool used_fallback() const { return used_fallback_; }

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
  double linear_tol_;
  bool used_fallback_ = false;
};

SaddleSolution solve_saddle(const SaddleSystem& system, double linear_tol = 1e-10);

/// Relative block residual ||[A z + B^T l - b; B z - c]|| / ||[b; c]||.
double saddle_residual(const SaddleSystem& system, const Eigen::VectorXd& z, const Eigen::VectorXd& lambda);

/// Steady linear problem with unit weight and no time-derivative term.
SaddleSystem assemble_initial(const ProblemData& data, const DofLayout& layout);
/// One semi-implicit step from z_prev with weights frozen at z_prev.
SaddleSystem assemble_step(const ProblemData& data, const DofLayout& layout, const RTFunction& z_prev, double tau);
SaddleSystem assemble_step(const ProblemData& data, const RTFunction& z_prev, double tau);

/// Full RT dof vector from the free-dof solution.
RTFunction expand_free(const DofLayout& layout, const Eigen::VectorXd& z_free);

std::pair<RTFunction, P0Field> initial_iterate(const ProblemData& data, double linear_tol = 1e-10);

/// Full L2 mass matrix of the free RT dofs.
SparseMatrix rt_mass_matrix(const ProblemData& data, const DofLayout& layout);

/// Riesz representative (in RT0_N with the L2 inner product) of
///   y -> (y.n, u_D^h)_{Gamma_D} - (w(Pi_h z) Pi_h z, Pi_h y) - (lambda, div y);
/// returns its L2 norm.
double residual_norm(const ProblemData& data, const RTFunction& z, const P0Field& lambda);

/// Same, reusing a factorized RT mass matrix.
class ResidualEvaluator {
 public:
  ResidualEvaluator(const ProblemData& data, const DofLayout& layout);
  ~ResidualEvaluator();
  double operator()(const RTFunction& z, const P0Field& lambda) const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

struct FlowReport {
  RTFunction z;
  P0Field lambda;
  int iterations = 0;
  double residual_norm = 0.0;
  bool converged = false;
  /// D_h(z^k) for k = 0..iterations.
  std::vector<double> dual_energy_history;
  /// ||Pi_h d_tau z^k|| for k = 1..iterations.
  std::vector<double> step_norm_history;
  std::vector<double> residual_history;
  /// min_T w^{k-1}_T used in step k.
  std::vector<double> min_weight_history;
  /// max_T |div z^k + f_h| / (1 + |f_h|) over all iterates.
  double max_divergence_defect = 0.0;
  double tau = 1.0;
};

class NonConvergenceError : public SolverError {
 public:
  NonConvergenceError(const std::string& what, FlowReport report)
      : SolverError(what, report.residual_norm), report_(std::move(report)) {}
  const FlowReport& report() const { return report_; }

 private:
  FlowReport report_;
};

/// Semi-implicit L2 gradient flow for the discrete dual problem. Stops when
/// the residual norm drops to eps_stop; throws NonConvergenceError after
/// max_iter steps.
FlowReport run_flow(const ProblemData& data, const FlowParams& params);

}  // namespace gcfem
