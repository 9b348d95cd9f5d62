#pragma once

#include <array>
#include <filesystem>
#include <map>
#include <memory>
#include <utility>
#include <vector>

#include "gcfem/types.hpp"

namespace gcfem {

enum class SideLabel : int { Interior = 0, Dirichlet = 1, Neumann = 2 };

/// Triangle mesh of a planar domain with its side table.
///
/// Sides are stored as sorted vertex pairs in lexicographic order. Local side i
/// of a triangle is the side opposite its local vertex i. The global side
/// normal n_S points from the lower-index neighbour (T-) to the higher-index
/// one (T+); on boundary sides it is the outward normal.
class Mesh {
 public:
  using BoundaryLabels = std::map<std::pair<int, int>, SideLabel>;

  Mesh() = default;

  /// Builds the side table. Boundary sides missing from `labels` (keyed by
  /// sorted vertex pair) are labelled Dirichlet. Throws GeometryError on bad
  /// indices, non-positive signed areas or sides shared by more than two
  /// triangles.
  Mesh(std::vector<Vec2> vertices, std::vector<std::array<int, 3>> triangles,
       const BoundaryLabels& labels = {});

  int num_vertices() const { return static_cast<int>(vertices_.size()); }
  int num_triangles() const { return static_cast<int>(triangles_.size()); }
  int num_sides() const { return static_cast<int>(sides_.size()); }

  const Vec2& vertex(int v) const { return vertices_[v]; }
  const std::array<int, 3>& triangle(int t) const { return triangles_[t]; }
  const std::array<int, 2>& side(int s) const { return sides_[s]; }
  /// {T-, T+}; T+ is -1 on boundary sides.
  const std::array<int, 2>& side_elements(int s) const { return side_elements_[s]; }
  SideLabel label(int s) const { return labels_[s]; }
  bool is_boundary(int s) const { return side_elements_[s][1] < 0; }

  /// Global side index of local side i (opposite local vertex i).
  const std::array<int, 3>& element_sides(int t) const { return element_sides_[t]; }
  /// +1 if n_S is the outward normal of t on its local side i, -1 otherwise.
  int side_sign(int t, int i) const { return element_side_signs_[t][i]; }

  const std::vector<Vec2>& vertices() const { return vertices_; }
  const std::vector<std::array<int, 3>>& triangles() const { return triangles_; }

  /// V - E + F.
  int euler_characteristic() const { return num_vertices() - num_sides() + num_triangles(); }

 private:
  std::vector<Vec2> vertices_;
  std::vector<std::array<int, 3>> triangles_;
  std::vector<std::array<int, 2>> sides_;
  std::vector<std::array<int, 2>> side_elements_;
  std::vector<SideLabel> labels_;
  std::vector<std::array<int, 3>> element_sides_;
  std::vector<std::array<int, 3>> element_side_signs_;
};

struct GeometryCache {
  std::vector<double> area;
  std::vector<Vec2> centroid;
  std::vector<double> side_length;
  std::vector<Vec2> side_midpoint;
  std::vector<Vec2> side_normal;
  /// Outward unit normal of each triangle on its local side i.
  std::vector<std::array<Vec2, 3>> outward_normal;
};

/// Throws GeometryError naming the first degenerate triangle.
GeometryCache compute_geometry(const Mesh& mesh);

/// Immutable mesh + geometry bundle shared by fields and problem data.
class Discretization {
 public:
  explicit Discretization(Mesh mesh);

  const Mesh& mesh() const { return *mesh_; }
  const GeometryCache& geometry() const { return *geometry_; }

  int num_triangles() const { return mesh_->num_triangles(); }
  int num_sides() const { return mesh_->num_sides(); }
  int num_vertices() const { return mesh_->num_vertices(); }

  double area(int t) const { return geometry_->area[t]; }
  const Vec2& centroid(int t) const { return geometry_->centroid[t]; }
  double side_length(int s) const { return geometry_->side_length[s]; }
  const Vec2& side_midpoint(int s) const { return geometry_->side_midpoint[s]; }
  const Vec2& side_normal(int s) const { return geometry_->side_normal[s]; }

  /// |Omega_h|.
  double total_area() const;
  /// Averaged mesh size (|Omega_h| / #vertices)^(1/2).
  double mesh_size() const;

 private:
  std::shared_ptr<const Mesh> mesh_;
  std::shared_ptr<const GeometryCache> geometry_;
};

/// Concentric-ring triangulation of the disk of the given radius. Level L uses
/// 3 * 2^L rings; ring j carries 6j vertices, the outermost on the circle.
/// All boundary sides are Dirichlet. Requires radius > 0 and level <= 8.
Mesh build_disk_mesh(double radius, int level);

/// Smallest interior angle over all triangles, in degrees.
double min_angle_degrees(const Mesh& mesh);

/// Plain-text format: `NV NT NS`, NV lines `x y`, NT lines `i j k`, NS lines
/// `a b label` (0 interior, 1 Dirichlet, 2 Neumann). Indices are 0-based.
Mesh load_mesh(const std::filesystem::path& path);
void save_mesh(const Mesh& mesh, const std::filesystem::path& path);

}  // namespace gcfem
