#include "gcfem/dual_solver.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>
#include <sstream>

#include <Eigen/SparseCholesky>
#include <Eigen/SparseLU>

#include "gcfem/energy.hpp"

namespace gcfem {

using Triplet = Eigen::Triplet<double>;

void FlowParams::validate() const {
  if (!(tau > 0.0)) throw ParameterError("tau must be positive");
  if (!(eps_stop > 0.0)) throw ParameterError("eps_stop must be positive");
  if (max_iter <= 0) throw ParameterError("max_iter must be positive");
  if (!(linear_tol > 0.0)) throw ParameterError("linear_tol must be positive");
}

namespace {

int find_root(std::vector<int>& parent, int v) {
  while (parent[v] != v) {
    parent[v] = parent[parent[v]];
    v = parent[v];
  }
  return v;
}

std::shared_ptr<const SparseMatrix> build_kernel_basis(const ProblemData& data, const DofLayout& layout) {
  const Discretization& disc = data.disc;
  const Mesh& mesh = disc.mesh();
  // Curls of hat functions span the divergence-free fields only on simply
  // connected meshes.
  if (mesh.euler_characteristic() != 1) return nullptr;

  const int nv = mesh.num_vertices();
  std::vector<int> parent(nv);
  std::iota(parent.begin(), parent.end(), 0);
  for (int s = 0; s < mesh.num_sides(); ++s) {
    if (mesh.label(s) != SideLabel::Neumann) continue;
    const int a = find_root(parent, mesh.side(s)[0]);
    const int b = find_root(parent, mesh.side(s)[1]);
    if (a != b) parent[std::max(a, b)] = std::min(a, b);
  }
  const int gauge = find_root(parent, 0);
  std::vector<int> column(nv, -1);
  int ncols = 0;
  for (int v = 0; v < nv; ++v) {
    const int r = find_root(parent, v);
    if (r == gauge) continue;
    if (column[r] < 0) column[r] = ncols++;
    column[v] = column[r];
  }

  std::vector<Triplet> trip;
  trip.reserve(2 * static_cast<size_t>(layout.num_free()));
  for (int k = 0; k < layout.num_free(); ++k) {
    const int s = layout.free_sides[k];
    const int a = mesh.side(s)[0];
    const int b = mesh.side(s)[1];
    const Vec2& n = disc.side_normal(s);
    const Vec2 tangent(-n.y(), n.x());
    const double along = (mesh.vertex(b) - mesh.vertex(a)).dot(tangent) > 0.0 ? 1.0 : -1.0;
    const double inv_len = 1.0 / disc.side_length(s);
    // normal flux of curl(phi_v) on S is the tangential derivative of phi_v
    if (column[a] >= 0) trip.emplace_back(k, column[a], -along * inv_len);
    if (column[b] >= 0) trip.emplace_back(k, column[b], along * inv_len);
  }
  auto z = std::make_shared<SparseMatrix>(layout.num_free(), ncols);
  z->setFromTriplets(trip.begin(), trip.end());
  z->makeCompressed();
  // groups with no free side would give empty columns; the kernel is then
  // not a basis and the LU path is used instead
  for (int c = 0; c < ncols; ++c)
    if (z->col(c).nonZeros() == 0) return nullptr;
  return z;
}

// Element-wise system with coefficient coeff[t] on the mean mass and an
// inertia term (coeff_prev, mean_prev) on the right-hand side.
SaddleSystem assemble_system(const ProblemData& data, const DofLayout& layout, const std::vector<double>& coeff,
                             const std::vector<Vec2>* inertia) {
  const Discretization& disc = data.disc;
  const Mesh& mesh = disc.mesh();
  const int nt = disc.num_triangles();
  const int nf = layout.num_free();

  SaddleSystem sys;
  sys.rhs_momentum = Eigen::VectorXd::Zero(nf);
  sys.rhs_constraint = Eigen::VectorXd::Zero(nt);
  std::vector<Triplet> a_trip;
  std::vector<Triplet> b_trip;
  a_trip.reserve(9 * static_cast<size_t>(nt));
  b_trip.reserve(3 * static_cast<size_t>(nt));

  for (int t = 0; t < nt; ++t) {
    const auto& sides = mesh.element_sides(t);
    std::array<Vec2, 3> m;
    for (int i = 0; i < 3; ++i) m[i] = rt_basis_mean(disc, t, i);
    const double area = disc.area(t);
    const double c = area * coeff[t];
    sys.rhs_constraint[t] -= data.f.values[t] * area;
    for (int i = 0; i < 3; ++i) {
      const int si = sides[i];
      const int fi = layout.free_index[si];
      const double bij = mesh.side_sign(t, i) * disc.side_length(si);
      if (fi < 0) {
        sys.rhs_constraint[t] -= bij * layout.fixed_values[si];
        continue;
      }
      b_trip.emplace_back(t, fi, bij);
      if (inertia) sys.rhs_momentum[fi] += area * (*inertia)[t].dot(m[i]);
      for (int j = 0; j < 3; ++j) {
        const int sj = sides[j];
        const int fj = layout.free_index[sj];
        const double aij = c * m[i].dot(m[j]);
        if (fj < 0)
          sys.rhs_momentum[fi] -= aij * layout.fixed_values[sj];
        else
          a_trip.emplace_back(fi, fj, aij);
      }
    }
  }
  for (int k = 0; k < nf; ++k) {
    const int s = layout.free_sides[k];
    if (mesh.label(s) == SideLabel::Dirichlet)
      sys.rhs_momentum[k] += disc.side_length(s) * data.u_dirichlet.values[s];
  }
  sys.A.resize(nf, nf);
  sys.A.setFromTriplets(a_trip.begin(), a_trip.end());
  sys.A.makeCompressed();
  sys.B.resize(nt, nf);
  sys.B.setFromTriplets(b_trip.begin(), b_trip.end());
  sys.B.makeCompressed();
  sys.kernel = layout.kernel;
  return sys;
}

}  // namespace

DofLayout make_dof_layout(const ProblemData& data) {
  data.validate();
  if (!data.has_dirichlet()) throw SolverError("the dual saddle system needs a non-empty Dirichlet boundary");
  const Discretization& disc = data.disc;
  DofLayout layout;
  layout.free_index.assign(disc.num_sides(), -1);
  layout.fixed_values = Eigen::VectorXd::Zero(disc.num_sides());
  for (int s = 0; s < disc.num_sides(); ++s) {
    if (disc.mesh().label(s) == SideLabel::Neumann) {
      layout.fixed_values[s] = data.g.values[s];
    } else {
      layout.free_index[s] = static_cast<int>(layout.free_sides.size());
      layout.free_sides.push_back(s);
    }
  }
  layout.kernel = build_kernel_basis(data, layout);
  return layout;
}

RTFunction expand_free(const DofLayout& layout, const Eigen::VectorXd& z_free) {
  RTFunction z{layout.fixed_values};
  for (int k = 0; k < layout.num_free(); ++k) z.dofs[layout.free_sides[k]] = z_free[k];
  return z;
}

SaddleSystem assemble_initial(const ProblemData& data, const DofLayout& layout) {
  const std::vector<double> coeff(data.disc.num_triangles(), 1.0);
  return assemble_system(data, layout, coeff, nullptr);
}

SaddleSystem assemble_step(const ProblemData& data, const DofLayout& layout, const RTFunction& z_prev, double tau) {
  const Discretization& disc = data.disc;
  const int nt = disc.num_triangles();
  std::vector<double> coeff(nt);
  std::vector<Vec2> inertia(nt);
  for (int t = 0; t < nt; ++t) {
    const Vec2 mean = rt_element_mean(z_prev, disc, t);
    coeff[t] = 1.0 / tau + flow_weight(mean, data.zeta.values[t]);
    inertia[t] = mean / tau;
  }
  return assemble_system(data, layout, coeff, &inertia);
}

SaddleSystem assemble_step(const ProblemData& data, const RTFunction& z_prev, double tau) {
  return assemble_step(data, make_dof_layout(data), z_prev, tau);
}

double saddle_residual(const SaddleSystem& sys, const Eigen::VectorXd& z, const Eigen::VectorXd& lambda) {
  const Eigen::VectorXd r1 = sys.A * z + sys.B.transpose() * lambda - sys.rhs_momentum;
  const Eigen::VectorXd r2 = sys.B * z - sys.rhs_constraint;
  const double num = std::sqrt(r1.squaredNorm() + r2.squaredNorm());
  const double den = std::sqrt(sys.rhs_momentum.squaredNorm() + sys.rhs_constraint.squaredNorm());
  if (den == 0.0) return num;
  return num / den;
}

struct SaddleSolver::Impl {
  SparseMatrix B;
  SparseMatrix Bt;
  std::shared_ptr<const SparseMatrix> kernel;
  SparseMatrix kernel_t;
  Eigen::SimplicialLLT<SparseMatrix> bbt;
  bool bbt_ok = false;
  Eigen::SimplicialLLT<SparseMatrix> reduced;
  Eigen::Index reduced_pattern_nnz = -1;

  // One nullspace solve of [[A, B^T], [B, 0]] [z; l] = [b; c].
  bool nullspace_solve(const SparseMatrix& A, const Eigen::VectorXd& b, const Eigen::VectorXd& c,
                       Eigen::VectorXd& z, Eigen::VectorXd& lambda) {
    const Eigen::VectorXd mu = bbt.solve(c);
    if (bbt.info() != Eigen::Success) return false;
    const Eigen::VectorXd zp = Bt * mu;
    const Eigen::VectorXd az_p = A * zp;
    if (kernel->cols() > 0) {
      const SparseMatrix k = kernel_t * (A * *kernel);
      if (k.nonZeros() != reduced_pattern_nnz) {
        reduced.analyzePattern(k);
        reduced_pattern_nnz = k.nonZeros();
      }
      reduced.factorize(k);
      if (reduced.info() != Eigen::Success) return false;
      const Eigen::VectorXd psi = reduced.solve(kernel_t * (b - az_p));
      z = zp + *kernel * psi;
    } else {
      z = zp;
    }
    lambda = bbt.solve(B * (b - A * z));
    return bbt.info() == Eigen::Success;
  }
};

SaddleSolver::SaddleSolver(const SparseMatrix& B, std::shared_ptr<const SparseMatrix> kernel, double linear_tol)
    : impl_(std::make_unique<Impl>()), linear_tol_(linear_tol) {
  impl_->B = B;
  impl_->Bt = B.transpose();
  impl_->kernel = std::move(kernel);
  if (impl_->kernel) {
    impl_->kernel_t = impl_->kernel->transpose();
    const SparseMatrix bbt = impl_->B * impl_->Bt;
    impl_->bbt.compute(bbt);
    impl_->bbt_ok = impl_->bbt.info() == Eigen::Success;
  }
}

SaddleSolver::~SaddleSolver() = default;
SaddleSolver::SaddleSolver(SaddleSolver&&) noexcept = default;
SaddleSolver& SaddleSolver::operator=(SaddleSolver&&) noexcept = default;

SaddleSolution SaddleSolver::solve(const SaddleSystem& sys) {
  const int nf = static_cast<int>(sys.A.rows());
  const int nt = static_cast<int>(sys.B.rows());
  SaddleSolution sol;
  used_fallback_ = false;

  if (sys.rhs_momentum.isZero(0.0) && sys.rhs_constraint.isZero(0.0)) {
    sol.z = Eigen::VectorXd::Zero(nf);
    sol.lambda = Eigen::VectorXd::Zero(nt);
    sol.relative_residual = 0.0;
    return sol;
  }

  if (impl_->kernel && impl_->bbt_ok) {
    Eigen::VectorXd z, lambda;
    if (impl_->nullspace_solve(sys.A, sys.rhs_momentum, sys.rhs_constraint, z, lambda)) {
      double res = saddle_residual(sys, z, lambda);
      // iterative refinement with the same factorizations
      for (int round = 0; round < 3 && res > 0.01 * linear_tol_; ++round) {
        const Eigen::VectorXd r1 = sys.rhs_momentum - sys.A * z - sys.B.transpose() * lambda;
        const Eigen::VectorXd r2 = sys.rhs_constraint - sys.B * z;
        Eigen::VectorXd dz, dl;
        if (!impl_->nullspace_solve(sys.A, r1, r2, dz, dl)) break;
        z += dz;
        lambda += dl;
        res = saddle_residual(sys, z, lambda);
      }
      if (res <= linear_tol_) {
        sol.z = std::move(z);
        sol.lambda = std::move(lambda);
        sol.relative_residual = res;
        return sol;
      }
    }
  }

  // block LU fallback
  used_fallback_ = true;
  std::vector<Triplet> trip;
  trip.reserve(sys.A.nonZeros() + 2 * sys.B.nonZeros());
  for (int k = 0; k < sys.A.outerSize(); ++k)
    for (SparseMatrix::InnerIterator it(sys.A, k); it; ++it) trip.emplace_back(it.row(), it.col(), it.value());
  for (int k = 0; k < sys.B.outerSize(); ++k)
    for (SparseMatrix::InnerIterator it(sys.B, k); it; ++it) {
      trip.emplace_back(nf + it.row(), it.col(), it.value());
      trip.emplace_back(it.col(), nf + it.row(), it.value());
    }
  SparseMatrix K(nf + nt, nf + nt);
  K.setFromTriplets(trip.begin(), trip.end());
  K.makeCompressed();
  Eigen::SparseLU<SparseMatrix, Eigen::COLAMDOrdering<int>> lu;
  lu.compute(K);
  if (lu.info() != Eigen::Success) throw SolverError("block LU factorization failed: " + lu.lastErrorMessage());
  Eigen::VectorXd rhs(nf + nt);
  rhs << sys.rhs_momentum, sys.rhs_constraint;
  Eigen::VectorXd x = lu.solve(rhs);
  double res = saddle_residual(sys, x.head(nf), x.tail(nt));
  for (int round = 0; round < 3 && res > 0.01 * linear_tol_; ++round) {
    Eigen::VectorXd r = rhs - K * x;
    x += lu.solve(r);
    res = saddle_residual(sys, x.head(nf), x.tail(nt));
  }
  if (!(res <= linear_tol_)) {
    std::ostringstream msg;
    msg << "saddle solve missed the relative residual contract (" << res << " > " << linear_tol_ << ")";
    throw SolverError(msg.str(), res);
  }
  sol.z = x.head(nf);
  sol.lambda = x.tail(nt);
  sol.relative_residual = res;
  return sol;
}

SaddleSolution solve_saddle(const SaddleSystem& system, double linear_tol) {
  SaddleSolver solver(system.B, system.kernel, linear_tol);
  return solver.solve(system);
}

std::pair<RTFunction, P0Field> initial_iterate(const ProblemData& data, double linear_tol) {
  const DofLayout layout = make_dof_layout(data);
  const SaddleSystem sys = assemble_initial(data, layout);
  const SaddleSolution sol = solve_saddle(sys, linear_tol);
  return {expand_free(layout, sol.z), P0Field{sol.lambda}};
}

SparseMatrix rt_mass_matrix(const ProblemData& data, const DofLayout& layout) {
  const Discretization& disc = data.disc;
  const Mesh& mesh = disc.mesh();
  std::vector<Triplet> trip;
  trip.reserve(9 * static_cast<size_t>(disc.num_triangles()));
  for (int t = 0; t < disc.num_triangles(); ++t) {
    const auto& tri = mesh.triangle(t);
    const auto& sides = mesh.element_sides(t);
    const double area = disc.area(t);
    const Vec2& xc = disc.centroid(t);
    double edge_sq = 0.0;
    for (int i = 0; i < 3; ++i) edge_sq += (mesh.vertex(tri[(i + 1) % 3]) - mesh.vertex(tri[i])).squaredNorm();
    // int_T |x - x_T|^2 = |T| (sum of squared edge lengths) / 36
    const double second_moment = area * edge_sq / 36.0;
    std::array<double, 3> coef;
    std::array<Vec2, 3> offset;
    for (int i = 0; i < 3; ++i) {
      coef[i] = mesh.side_sign(t, i) * disc.side_length(sides[i]) / (2.0 * area);
      offset[i] = xc - mesh.vertex(tri[i]);
    }
    for (int i = 0; i < 3; ++i) {
      const int fi = layout.free_index[sides[i]];
      if (fi < 0) continue;
      for (int j = 0; j < 3; ++j) {
        const int fj = layout.free_index[sides[j]];
        if (fj < 0) continue;
        trip.emplace_back(fi, fj, coef[i] * coef[j] * (area * offset[i].dot(offset[j]) + second_moment));
      }
    }
  }
  SparseMatrix m(layout.num_free(), layout.num_free());
  m.setFromTriplets(trip.begin(), trip.end());
  m.makeCompressed();
  return m;
}

struct ResidualEvaluator::Impl {
  const ProblemData* data;
  const DofLayout* layout;
  Eigen::SimplicialLDLT<SparseMatrix> mass;
  std::vector<std::array<Vec2, 3>> basis_mean;
  Eigen::VectorXd dirichlet;
};

ResidualEvaluator::ResidualEvaluator(const ProblemData& data, const DofLayout& layout)
    : impl_(std::make_unique<Impl>()) {
  impl_->data = &data;
  impl_->layout = &layout;
  impl_->mass.compute(rt_mass_matrix(data, layout));
  if (impl_->mass.info() != Eigen::Success) throw SolverError("RT mass matrix factorization failed");
  const Discretization& disc = data.disc;
  impl_->basis_mean.resize(disc.num_triangles());
  for (int t = 0; t < disc.num_triangles(); ++t)
    for (int i = 0; i < 3; ++i) impl_->basis_mean[t][i] = rt_basis_mean(disc, t, i);
  impl_->dirichlet = Eigen::VectorXd::Zero(layout.num_free());
  for (int k = 0; k < layout.num_free(); ++k) {
    const int s = layout.free_sides[k];
    if (disc.mesh().label(s) == SideLabel::Dirichlet)
      impl_->dirichlet[k] = disc.side_length(s) * data.u_dirichlet.values[s];
  }
}

ResidualEvaluator::~ResidualEvaluator() = default;

double ResidualEvaluator::operator()(const RTFunction& z, const P0Field& lambda) const {
  const ProblemData& data = *impl_->data;
  const DofLayout& layout = *impl_->layout;
  const Discretization& disc = data.disc;
  const Mesh& mesh = disc.mesh();
  Eigen::VectorXd functional = impl_->dirichlet;
  for (int t = 0; t < disc.num_triangles(); ++t) {
    const auto& sides = mesh.element_sides(t);
    const auto& m = impl_->basis_mean[t];
    const Vec2 mean = z.dofs[sides[0]] * m[0] + z.dofs[sides[1]] * m[1] + z.dofs[sides[2]] * m[2];
    const Vec2 flux = disc.area(t) * flow_weight(mean, data.zeta.values[t]) * mean;
    for (int i = 0; i < 3; ++i) {
      const int fi = layout.free_index[sides[i]];
      if (fi < 0) continue;
      functional[fi] -= flux.dot(m[i]) + lambda.values[t] * mesh.side_sign(t, i) * disc.side_length(sides[i]);
    }
  }
  const Eigen::VectorXd riesz = impl_->mass.solve(functional);
  if (impl_->mass.info() != Eigen::Success) throw SolverError("RT mass solve failed");
  return std::sqrt(std::max(0.0, functional.dot(riesz)));
}

double residual_norm(const ProblemData& data, const RTFunction& z, const P0Field& lambda) {
  const DofLayout layout = make_dof_layout(data);
  return ResidualEvaluator(data, layout)(z, lambda);
}

namespace {

// Per-step solver for the flow. Every step shares the constraint rows, so the
// iterates differ from a fixed particular solution by divergence-free fields
// Z psi. The reduced matrix Z^T A Z = sum_T c_T K_T has a fixed pattern and is
// refilled from precomputed element contributions; it is solved by PCG with
// the most recent Cholesky factor and refactorized when PCG stalls.
class FlowStepper {
 public:
  FlowStepper(const ProblemData& data, const DofLayout& layout, double linear_tol)
      : data_(data), layout_(layout), linear_tol_(linear_tol), nt_(data.disc.num_triangles()) {
    const Discretization& disc = data.disc;
    const Mesh& mesh = disc.mesh();
    elements_.resize(nt_);
    for (int t = 0; t < nt_; ++t) {
      Element& e = elements_[t];
      e.area = disc.area(t);
      for (int i = 0; i < 3; ++i) {
        const int s = mesh.element_sides(t)[i];
        e.side[i] = s;
        e.free[i] = layout.free_index[s];
        e.m[i] = rt_basis_mean(disc, t, i);
        e.b[i] = mesh.side_sign(t, i) * disc.side_length(s);
      }
    }
    const SaddleSystem base = assemble_initial(data, layout);
    B_ = base.B;
    rhs_constraint_ = base.rhs_constraint;
    dirichlet_ = Eigen::VectorXd::Zero(layout.num_free());
    for (int k = 0; k < layout.num_free(); ++k) {
      const int s = layout.free_sides[k];
      if (mesh.label(s) == SideLabel::Dirichlet) dirichlet_[k] = disc.side_length(s) * data.u_dirichlet.values[s];
    }
    fallback_ = std::make_unique<SaddleSolver>(B_, layout.kernel, linear_tol);
    if (!layout.kernel) return;

    bbt_.compute(SparseMatrix(B_ * B_.transpose()));
    if (bbt_.info() != Eigen::Success) return;
    const Eigen::VectorXd mu = bbt_.solve(rhs_constraint_);
    particular_ = layout.fixed_values;
    const Eigen::VectorXd zp = B_.transpose() * mu;
    for (int k = 0; k < layout.num_free(); ++k) particular_[layout.free_sides[k]] = zp[k];
    particular_mean_ = rt_element_mean(RTFunction{particular_}, disc);

    const SparseMatrix& Z = *layout.kernel;
    const Eigen::SparseMatrix<double, Eigen::RowMajor> zrows = Z;
    nk_ = static_cast<int>(Z.cols());
    dirichlet_reduced_ = Z.transpose() * dirichlet_;

    // Z^T m_T per element: element mean of each kernel basis field
    std::vector<Triplet> pattern;
    for (int t = 0; t < nt_; ++t) {
      Element& e = elements_[t];
      for (int i = 0; i < 3; ++i) {
        if (e.free[i] < 0) continue;
        for (Eigen::SparseMatrix<double, Eigen::RowMajor>::InnerIterator it(zrows, e.free[i]); it; ++it) {
          auto pos = std::find_if(e.kernel.begin(), e.kernel.end(),
                                  [&](const auto& p) { return p.first == it.col(); });
          if (pos == e.kernel.end()) {
            e.kernel.emplace_back(static_cast<int>(it.col()), Vec2::Zero());
            pos = std::prev(e.kernel.end());
          }
          pos->second += it.value() * e.m[i];
        }
      }
      for (const auto& [a, ga] : e.kernel)
        for (const auto& [b, gb] : e.kernel) pattern.emplace_back(a, b, 0.0);
    }
    reduced_.resize(nk_, nk_);
    reduced_.setFromTriplets(pattern.begin(), pattern.end());
    reduced_.makeCompressed();
    for (int t = 0; t < nt_; ++t) {
      Element& e = elements_[t];
      for (const auto& [a, ga] : e.kernel)
        for (const auto& [b, gb] : e.kernel) {
          const int* begin = reduced_.innerIndexPtr() + reduced_.outerIndexPtr()[b];
          const int* end = reduced_.innerIndexPtr() + reduced_.outerIndexPtr()[b + 1];
          const int* hit = std::lower_bound(begin, end, a);
          e.slots.emplace_back(static_cast<int>(hit - reduced_.innerIndexPtr()), e.area * ga.dot(gb));
        }
    }
    llt_.analyzePattern(reduced_);
    fast_ = true;
  }

  bool used_fallback() const { return used_fallback_; }

  std::vector<Vec2> means(const RTFunction& z) const {
    std::vector<Vec2> out(nt_);
    for (int t = 0; t < nt_; ++t) {
      const Element& e = elements_[t];
      out[t] = z.dofs[e.side[0]] * e.m[0] + z.dofs[e.side[1]] * e.m[1] + z.dofs[e.side[2]] * e.m[2];
    }
    return out;
  }

  // D_h(z) from precomputed element means; z is assumed admissible.
  double dual_energy(const RTFunction& z, const std::vector<Vec2>& zmean) const {
    double value = 0.0;
    for (int t = 0; t < nt_; ++t) value -= elements_[t].area * phi_star(zmean[t], data_.zeta.values[t]);
    for (int k = 0; k < layout_.num_free(); ++k) value += dirichlet_[k] * z.dofs[layout_.free_sides[k]];
    return value;
  }

  double divergence_defect(const RTFunction& z) const {
    double worst = 0.0;
    for (int t = 0; t < nt_; ++t) {
      const Element& e = elements_[t];
      const double div = (e.b[0] * z.dofs[e.side[0]] + e.b[1] * z.dofs[e.side[1]] + e.b[2] * z.dofs[e.side[2]]) / e.area;
      const double f = data_.f.values[t];
      worst = std::max(worst, std::abs(div + f) / (1.0 + std::abs(f)));
    }
    return worst;
  }

  // Solves the step with element coefficients coeff and inertia |T| * inertia_T
  // (zero for the initial problem).
  SaddleSolution solve(const std::vector<double>& coeff, const std::vector<Vec2>& inertia) {
    used_fallback_ = false;
    if (fast_) {
      SaddleSolution sol;
      if (fast_solve(coeff, inertia, sol)) return sol;
    }
    used_fallback_ = true;
    return fallback_->solve(assemble(coeff, inertia));
  }

 private:
  struct Element {
    double area = 0.0;
    std::array<int, 3> side{};
    std::array<int, 3> free{};
    std::array<Vec2, 3> m;
    std::array<double, 3> b{};
    std::vector<std::pair<int, Vec2>> kernel;
    std::vector<std::pair<int, double>> slots;
  };

  SaddleSystem assemble(const std::vector<double>& coeff, const std::vector<Vec2>& inertia) const {
    SaddleSystem sys;
    const int nf = layout_.num_free();
    std::vector<Triplet> trip;
    trip.reserve(9 * static_cast<size_t>(nt_));
    sys.rhs_momentum = dirichlet_;
    for (int t = 0; t < nt_; ++t) {
      const Element& e = elements_[t];
      for (int i = 0; i < 3; ++i) {
        if (e.free[i] < 0) continue;
        sys.rhs_momentum[e.free[i]] += e.area * inertia[t].dot(e.m[i]);
        for (int j = 0; j < 3; ++j) {
          const double aij = e.area * coeff[t] * e.m[i].dot(e.m[j]);
          if (e.free[j] < 0)
            sys.rhs_momentum[e.free[i]] -= aij * layout_.fixed_values[e.side[j]];
          else
            trip.emplace_back(e.free[i], e.free[j], aij);
        }
      }
    }
    sys.A.resize(nf, nf);
    sys.A.setFromTriplets(trip.begin(), trip.end());
    sys.B = B_;
    sys.rhs_constraint = rhs_constraint_;
    sys.kernel = layout_.kernel;
    return sys;
  }

  // Momentum defect b - A z over free dofs for the full field z with element
  // means zmean; also returns ||b||^2 in b_sq.
  Eigen::VectorXd momentum_defect(const std::vector<double>& coeff, const std::vector<Vec2>& inertia,
                                  const std::vector<Vec2>& zmean, double& b_sq) const {
    Eigen::VectorXd defect = dirichlet_;
    Eigen::VectorXd b = dirichlet_;
    for (int t = 0; t < nt_; ++t) {
      const Element& e = elements_[t];
      Vec2 fixed_mean = Vec2::Zero();
      for (int j = 0; j < 3; ++j)
        if (e.free[j] < 0) fixed_mean += layout_.fixed_values[e.side[j]] * e.m[j];
      const Vec2 q = e.area * (inertia[t] - coeff[t] * zmean[t]);
      const Vec2 qb = e.area * (inertia[t] - coeff[t] * fixed_mean);
      for (int i = 0; i < 3; ++i) {
        if (e.free[i] < 0) continue;
        defect[e.free[i]] += q.dot(e.m[i]);
        b[e.free[i]] += qb.dot(e.m[i]);
      }
    }
    b_sq = b.squaredNorm();
    return defect;
  }

  Eigen::VectorXd reduced_rhs(const std::vector<double>& coeff, const std::vector<Vec2>& inertia,
                              const std::vector<Vec2>& zmean) const {
    Eigen::VectorXd r = dirichlet_reduced_;
    for (int t = 0; t < nt_; ++t) {
      const Element& e = elements_[t];
      const Vec2 q = e.area * (inertia[t] - coeff[t] * zmean[t]);
      for (const auto& [a, ga] : e.kernel) r[a] += ga.dot(q);
    }
    return r;
  }

  Eigen::VectorXd apply_reduced(const std::vector<double>& coeff, const Eigen::VectorXd& x) const {
    Eigen::VectorXd y = Eigen::VectorXd::Zero(nk_);
    for (int t = 0; t < nt_; ++t) {
      const Element& e = elements_[t];
      Vec2 g = Vec2::Zero();
      for (const auto& [a, ga] : e.kernel) g += x[a] * ga;
      g *= coeff[t] * e.area;
      for (const auto& [a, ga] : e.kernel) y[a] += ga.dot(g);
    }
    return y;
  }

  void refactorize(const std::vector<double>& coeff) {
    double* values = reduced_.valuePtr();
    std::fill(values, values + reduced_.nonZeros(), 0.0);
    for (int t = 0; t < nt_; ++t)
      for (const auto& [slot, value] : elements_[t].slots) values[slot] += coeff[t] * value;
    llt_.factorize(reduced_);
    factor_ok_ = llt_.info() == Eigen::Success;
  }

  // Preconditioned CG on the reduced system with the current factor.
  bool pcg(const std::vector<double>& coeff, const Eigen::VectorXd& rhs, Eigen::VectorXd& x, int max_steps) {
    const double target = 1e-1 * linear_tol_ * rhs.norm();
    x = llt_.solve(rhs);
    Eigen::VectorXd r = rhs - apply_reduced(coeff, x);
    pcg_steps_ = 0;
    if (r.norm() <= target) return true;
    Eigen::VectorXd p = llt_.solve(r);
    Eigen::VectorXd zr = p;
    double rz = r.dot(zr);
    for (int step = 0; step < max_steps; ++step) {
      const Eigen::VectorXd ap = apply_reduced(coeff, p);
      const double alpha = rz / p.dot(ap);
      x += alpha * p;
      r -= alpha * ap;
      pcg_steps_ = step + 1;
      if (r.norm() <= target) return true;
      zr = llt_.solve(r);
      const double rz_next = r.dot(zr);
      p = zr + (rz_next / rz) * p;
      rz = rz_next;
    }
    return false;
  }

  bool fast_solve(const std::vector<double>& coeff, const std::vector<Vec2>& inertia, SaddleSolution& sol) {
    const Discretization& disc = data_.disc;
    // a stale factor that costs too many PCG steps is renewed
    if (!factor_ok_ || pcg_steps_ > kRefactorSteps) refactorize(coeff);
    if (!factor_ok_) return false;
    const Eigen::VectorXd rhs = reduced_rhs(coeff, inertia, particular_mean_.values);
    Eigen::VectorXd psi;
    if (!pcg(coeff, rhs, psi, 12)) {
      refactorize(coeff);
      if (!factor_ok_ || !pcg(coeff, rhs, psi, 12)) return false;
    }
    Eigen::VectorXd z = particular_;
    const Eigen::VectorXd zk = *layout_.kernel * psi;
    for (int k = 0; k < layout_.num_free(); ++k) z[layout_.free_sides[k]] += zk[k];
    const P0VectorField zmean = rt_element_mean(RTFunction{z}, disc);

    double b_sq = 0.0;
    const Eigen::VectorXd defect = momentum_defect(coeff, inertia, zmean.values, b_sq);
    Eigen::VectorXd lambda = bbt_.solve(B_ * defect);
    Eigen::VectorXd z_free(layout_.num_free());
    for (int k = 0; k < layout_.num_free(); ++k) z_free[k] = z[layout_.free_sides[k]];
    const Eigen::VectorXd r1 = defect - B_.transpose() * lambda;
    const Eigen::VectorXd r2 = B_ * z_free - rhs_constraint_;
    const double den = std::sqrt(b_sq + rhs_constraint_.squaredNorm());
    const double num = std::sqrt(r1.squaredNorm() + r2.squaredNorm());
    const double res = den > 0.0 ? num / den : num;
    if (!(res <= linear_tol_)) return false;
    sol.z = std::move(z_free);
    sol.lambda = std::move(lambda);
    sol.relative_residual = res;
    return true;
  }

  const ProblemData& data_;
  const DofLayout& layout_;
  double linear_tol_;
  int nt_;
  int nk_ = 0;
  std::vector<Element> elements_;
  SparseMatrix B_;
  Eigen::VectorXd rhs_constraint_;
  Eigen::VectorXd dirichlet_;
  Eigen::VectorXd dirichlet_reduced_;
  Eigen::VectorXd particular_;
  P0VectorField particular_mean_;
  Eigen::SimplicialLLT<SparseMatrix> bbt_;
  SparseMatrix reduced_;
  Eigen::SimplicialLLT<SparseMatrix> llt_;
  std::unique_ptr<SaddleSolver> fallback_;
  static constexpr int kRefactorSteps = 2;
  int pcg_steps_ = 0;
  bool fast_ = false;
  bool factor_ok_ = false;
  bool used_fallback_ = false;
};

}  // namespace

FlowReport run_flow(const ProblemData& data, const FlowParams& params) {
  params.validate();
  const int nt = data.disc.num_triangles();
  const DofLayout layout = make_dof_layout(data);
  const ResidualEvaluator residual(data, layout);
  FlowStepper stepper(data, layout, params.linear_tol);

  FlowReport report;
  report.tau = params.tau;

  std::vector<double> coeff(nt, 1.0);
  std::vector<Vec2> inertia(nt, Vec2::Zero());
  SaddleSolution sol = stepper.solve(coeff, inertia);
  report.z = expand_free(layout, sol.z);
  report.lambda = P0Field{sol.lambda};
  report.max_divergence_defect = stepper.divergence_defect(report.z);
  std::vector<Vec2> mean_prev = stepper.means(report.z);
  report.dual_energy_history.push_back(stepper.dual_energy(report.z, mean_prev));

  for (int k = 1; k <= params.max_iter; ++k) {
    double min_weight = 1.0;
    for (int t = 0; t < nt; ++t) {
      const double w = flow_weight(mean_prev[t], data.zeta.values[t]);
      min_weight = std::min(min_weight, w);
      coeff[t] = 1.0 / params.tau + w;
      inertia[t] = mean_prev[t] / params.tau;
    }
    sol = stepper.solve(coeff, inertia);
    report.z = expand_free(layout, sol.z);
    report.lambda = P0Field{sol.lambda};
    report.iterations = k;

    std::vector<Vec2> mean = stepper.means(report.z);
    double step_sq = 0.0;
    for (int t = 0; t < nt; ++t) step_sq += data.disc.area(t) * (mean[t] - mean_prev[t]).squaredNorm();
    mean_prev = std::move(mean);

    report.step_norm_history.push_back(std::sqrt(step_sq) / params.tau);
    report.min_weight_history.push_back(min_weight);
    report.dual_energy_history.push_back(stepper.dual_energy(report.z, mean_prev));
    report.max_divergence_defect = std::max(report.max_divergence_defect, stepper.divergence_defect(report.z));
    report.residual_norm = residual(report.z, report.lambda);
    report.residual_history.push_back(report.residual_norm);
    if (params.log)
      *params.log << "iter " << k << " residual " << report.residual_norm << " dual_energy "
                  << report.dual_energy_history.back() << '\n';
    if (report.residual_norm <= params.eps_stop) {
      report.converged = true;
      return report;
    }
  }
  std::ostringstream msg;
  msg << "gradient flow did not reach eps_stop = " << params.eps_stop << " within " << params.max_iter
      << " iterations (residual " << report.residual_norm << ")";
  throw NonConvergenceError(msg.str(), std::move(report));
}

}  // namespace gcfem
