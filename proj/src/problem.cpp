#include "gcfem/problem.hpp"

#include <string>

#include "gcfem/errors.hpp"

namespace gcfem {

void ProblemData::validate() const {
  const int nt = disc.num_triangles();
  const int ns = disc.num_sides();
  if (zeta.values.size() != nt || f.values.size() != nt) throw DataError("element data has wrong size");
  if (g.values.size() != ns || u_dirichlet.values.size() != ns) throw DataError("side data has wrong size");
  for (int t = 0; t < nt; ++t) {
    if (!(zeta.values[t] > 0.0))
      throw DataError("obstacle zeta_h is not positive on element " + std::to_string(t));
  }
}

bool ProblemData::has_neumann() const {
  for (int s = 0; s < disc.num_sides(); ++s)
    if (disc.mesh().label(s) == SideLabel::Neumann) return true;
  return false;
}

bool ProblemData::has_dirichlet() const {
  for (int s = 0; s < disc.num_sides(); ++s)
    if (disc.mesh().label(s) == SideLabel::Dirichlet) return true;
  return false;
}

ProblemData project_data(const ScalarFunction& f, const ScalarFunction& g, const ScalarFunction& u_dirichlet,
                         const ScalarFunction& zeta, const Discretization& disc) {
  ProblemData data{disc, element_means(zeta, disc), element_means(f, disc),
                   side_means(g, disc, SideLabel::Neumann), side_means(u_dirichlet, disc, SideLabel::Dirichlet)};
  data.validate();
  return data;
}

}  // namespace gcfem
