#pragma once

#include "gcfem/mesh.hpp"
#include "gcfem/spaces.hpp"

namespace gcfem {

/// Discrete data: element-wise obstacle zeta_h > 0 and load f_h, Neumann
/// data g_h and Dirichlet data u_D^h as side constants.
struct ProblemData {
  Discretization disc;
  P0Field zeta;
  P0Field f;
  SideData g{SideLabel::Neumann, {}};
  SideData u_dirichlet{SideLabel::Dirichlet, {}};

  /// Throws DataError if zeta_h <= 0 somewhere or a field has the wrong size.
  void validate() const;
  bool has_neumann() const;
  bool has_dirichlet() const;
};

/// f_h, zeta_h as element means; g_h, u_D^h as side means on the Neumann and
/// Dirichlet sides (degree-4 rules). Throws DataError if zeta_h <= 0.
ProblemData project_data(const ScalarFunction& f, const ScalarFunction& g, const ScalarFunction& u_dirichlet,
                         const ScalarFunction& zeta, const Discretization& disc);

}  // namespace gcfem
