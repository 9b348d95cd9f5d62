#include "gcfem/mesh.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>
#include <string>

#include "gcfem/errors.hpp"
#include "gcfem/io.hpp"

namespace gcfem {

namespace {

double signed_area(const Vec2& a, const Vec2& b, const Vec2& c) {
  return 0.5 * ((b - a).x() * (c - a).y() - (b - a).y() * (c - a).x());
}

}  // namespace

Mesh::Mesh(std::vector<Vec2> vertices, std::vector<std::array<int, 3>> triangles,
           const BoundaryLabels& labels)
    : vertices_(std::move(vertices)), triangles_(std::move(triangles)) {
  const int nv = num_vertices();
  const int nt = num_triangles();

  for (int t = 0; t < nt; ++t) {
    const auto& tri = triangles_[t];
    for (int v : tri) {
      if (v < 0 || v >= nv)
        throw GeometryError("triangle " + std::to_string(t) + " references vertex " +
                            std::to_string(v) + " of " + std::to_string(nv));
    }
    if (tri[0] == tri[1] || tri[1] == tri[2] || tri[0] == tri[2])
      throw GeometryError("triangle " + std::to_string(t) + " has repeated vertices");
    if (!(signed_area(vertices_[tri[0]], vertices_[tri[1]], vertices_[tri[2]]) > 0.0))
      throw GeometryError("triangle " + std::to_string(t) + " is inverted or degenerate");
  }

  // (vertex pair, triangle, local side)
  struct Incidence {
    std::array<int, 2> key;
    int element;
    int local;
  };
  std::vector<Incidence> inc;
  inc.reserve(3 * static_cast<size_t>(nt));
  for (int t = 0; t < nt; ++t) {
    const auto& tri = triangles_[t];
    for (int i = 0; i < 3; ++i) {
      int a = tri[(i + 1) % 3];
      int b = tri[(i + 2) % 3];
      if (a > b) std::swap(a, b);
      inc.push_back({{a, b}, t, i});
    }
  }
  std::sort(inc.begin(), inc.end(), [](const Incidence& l, const Incidence& r) {
    if (l.key != r.key) return l.key < r.key;
    return l.element < r.element;
  });

  element_sides_.assign(nt, {-1, -1, -1});
  element_side_signs_.assign(nt, {0, 0, 0});
  for (size_t k = 0; k < inc.size();) {
    size_t m = k + 1;
    while (m < inc.size() && inc[m].key == inc[k].key) ++m;
    if (m - k > 2)
      throw GeometryError("side (" + std::to_string(inc[k].key[0]) + "," +
                          std::to_string(inc[k].key[1]) + ") shared by more than two triangles");
    const int s = num_sides();
    sides_.push_back(inc[k].key);
    const int minus = inc[k].element;
    const int plus = (m - k == 2) ? inc[k + 1].element : -1;
    side_elements_.push_back({minus, plus});
    element_sides_[minus][inc[k].local] = s;
    element_side_signs_[minus][inc[k].local] = 1;
    if (plus >= 0) {
      element_sides_[plus][inc[k + 1].local] = s;
      element_side_signs_[plus][inc[k + 1].local] = -1;
      labels_.push_back(SideLabel::Interior);
    } else {
      auto it = labels.find({inc[k].key[0], inc[k].key[1]});
      SideLabel lab = (it == labels.end()) ? SideLabel::Dirichlet : it->second;
      if (lab == SideLabel::Interior)
        throw GeometryError("boundary side (" + std::to_string(inc[k].key[0]) + "," +
                            std::to_string(inc[k].key[1]) + ") labelled interior");
      labels_.push_back(lab);
    }
    k = m;
  }
}

GeometryCache compute_geometry(const Mesh& mesh) {
  GeometryCache g;
  const int nt = mesh.num_triangles();
  const int ns = mesh.num_sides();
  g.area.resize(nt);
  g.centroid.resize(nt);
  g.outward_normal.resize(nt);
  g.side_length.resize(ns);
  g.side_midpoint.resize(ns);
  g.side_normal.resize(ns);

  for (int t = 0; t < nt; ++t) {
    const auto& tri = mesh.triangle(t);
    const Vec2& a = mesh.vertex(tri[0]);
    const Vec2& b = mesh.vertex(tri[1]);
    const Vec2& c = mesh.vertex(tri[2]);
    const double area = signed_area(a, b, c);
    const double scale = std::max({(b - a).squaredNorm(), (c - b).squaredNorm(), (a - c).squaredNorm()});
    if (!(area > 1e-14 * scale))
      throw GeometryError("triangle " + std::to_string(t) + " is degenerate (area " +
                          std::to_string(area) + ")");
    g.area[t] = area;
    g.centroid[t] = (a + b + c) / 3.0;
    for (int i = 0; i < 3; ++i) {
      const Vec2& p = mesh.vertex(tri[(i + 1) % 3]);
      const Vec2& q = mesh.vertex(tri[(i + 2) % 3]);
      const Vec2 e = q - p;
      // counter-clockwise triangle: outward normal is e rotated by -90 degrees
      g.outward_normal[t][i] = Vec2(e.y(), -e.x()).normalized();
    }
  }

  for (int s = 0; s < ns; ++s) {
    const auto& sd = mesh.side(s);
    const Vec2& p = mesh.vertex(sd[0]);
    const Vec2& q = mesh.vertex(sd[1]);
    g.side_length[s] = (q - p).norm();
    g.side_midpoint[s] = 0.5 * (p + q);
    const int minus = mesh.side_elements(s)[0];
    const auto& es = mesh.element_sides(minus);
    const int local = static_cast<int>(std::find(es.begin(), es.end(), s) - es.begin());
    g.side_normal[s] = g.outward_normal[minus][local];
  }
  return g;
}

Discretization::Discretization(Mesh mesh)
    : mesh_(std::make_shared<const Mesh>(std::move(mesh))),
      geometry_(std::make_shared<const GeometryCache>(compute_geometry(*mesh_))) {}

double Discretization::total_area() const {
  double sum = 0.0;
  for (double a : geometry_->area) sum += a;
  return sum;
}

double Discretization::mesh_size() const {
  return std::sqrt(total_area() / static_cast<double>(num_vertices()));
}

Mesh build_disk_mesh(double radius, int level) {
  if (!(radius > 0.0)) throw ParameterError("disk radius must be positive");
  if (level < 0 || level > 8) throw ParameterError("disk level must lie in 0..8");

  const int rings = 3 << level;
  const double dr = radius / rings;
  const double two_pi = 2.0 * std::numbers::pi;

  std::vector<Vec2> vertices;
  vertices.reserve(1 + 3 * static_cast<size_t>(rings) * (rings + 1));
  vertices.emplace_back(0.0, 0.0);
  std::vector<int> ring_start(rings + 1, 0);
  for (int j = 1; j <= rings; ++j) {
    ring_start[j] = static_cast<int>(vertices.size());
    const int count = 6 * j;
    const double rho = (j == rings) ? radius : j * dr;
    for (int i = 0; i < count; ++i) {
      const double theta = two_pi * i / count;
      vertices.emplace_back(rho * std::cos(theta), rho * std::sin(theta));
    }
  }

  std::vector<std::array<int, 3>> triangles;
  triangles.reserve(6 * static_cast<size_t>(rings) * rings);
  auto push = [&](int a, int b, int c) {
    if (signed_area(vertices[a], vertices[b], vertices[c]) < 0.0) std::swap(b, c);
    triangles.push_back({a, b, c});
  };

  // fan around the centre
  for (int i = 0; i < 6; ++i) push(0, ring_start[1] + i, ring_start[1] + (i + 1) % 6);

  // strips between ring j-1 and ring j, merged by angle
  for (int j = 2; j <= rings; ++j) {
    const int n_in = 6 * (j - 1);
    const int n_out = 6 * j;
    auto in = [&](int i) { return ring_start[j - 1] + (i % n_in); };
    auto out = [&](int o) { return ring_start[j] + (o % n_out); };
    int i = 0;
    int o = 0;
    while (i < n_in || o < n_out) {
      const double next_in = static_cast<double>(i + 1) / n_in;
      const double next_out = static_cast<double>(o + 1) / n_out;
      const bool advance_outer = (i == n_in) || (o < n_out && next_out <= next_in);
      if (advance_outer) {
        push(in(i), out(o), out(o + 1));
        ++o;
      } else {
        push(in(i), out(o), in(i + 1));
        ++i;
      }
    }
  }

  return Mesh(std::move(vertices), std::move(triangles));
}

double min_angle_degrees(const Mesh& mesh) {
  double min_angle = 180.0;
  for (int t = 0; t < mesh.num_triangles(); ++t) {
    const auto& tri = mesh.triangle(t);
    for (int i = 0; i < 3; ++i) {
      const Vec2 u = mesh.vertex(tri[(i + 1) % 3]) - mesh.vertex(tri[i]);
      const Vec2 w = mesh.vertex(tri[(i + 2) % 3]) - mesh.vertex(tri[i]);
      const double c = std::clamp(u.dot(w) / (u.norm() * w.norm()), -1.0, 1.0);
      min_angle = std::min(min_angle, std::acos(c) * 180.0 / std::numbers::pi);
    }
  }
  return min_angle;
}

namespace {

// Reads the next non-empty line; returns false at EOF.
bool next_line(std::istream& in, std::string& line, int& line_no) {
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") != std::string::npos) return true;
  }
  return false;
}

}  // namespace

Mesh load_mesh(const std::filesystem::path& path) {
  std::istringstream in(read_file(path));
  std::string line;
  int line_no = 0;

  if (!next_line(in, line, line_no)) throw ParseError("missing header `NV NT NS`", line_no + 1);
  long long nv = -1, nt = -1, ns = -1;
  {
    std::istringstream ls(line);
    if (!(ls >> nv >> nt >> ns) || nv < 3 || nt < 1 || ns < 3)
      throw ParseError("malformed header `" + line + "`", line_no);
  }

  std::vector<Vec2> vertices;
  vertices.reserve(nv);
  for (long long k = 0; k < nv; ++k) {
    if (!next_line(in, line, line_no)) throw ParseError("expected vertex line", line_no + 1);
    std::istringstream ls(line);
    double x, y;
    if (!(ls >> x >> y) || !std::isfinite(x) || !std::isfinite(y))
      throw ParseError("malformed vertex `" + line + "`", line_no);
    vertices.emplace_back(x, y);
  }

  std::vector<std::array<int, 3>> triangles;
  triangles.reserve(nt);
  for (long long k = 0; k < nt; ++k) {
    if (!next_line(in, line, line_no)) throw ParseError("expected triangle line", line_no + 1);
    std::istringstream ls(line);
    long long a, b, c;
    if (!(ls >> a >> b >> c)) throw ParseError("malformed triangle `" + line + "`", line_no);
    for (long long v : {a, b, c}) {
      if (v < 0 || v >= nv)
        throw ParseError("vertex index " + std::to_string(v) + " out of range (NV = " +
                             std::to_string(nv) + ")",
                         line_no);
    }
    const std::array<int, 3> tri{static_cast<int>(a), static_cast<int>(b), static_cast<int>(c)};
    if (!(signed_area(vertices[tri[0]], vertices[tri[1]], vertices[tri[2]]) > 0.0))
      throw ParseError("inverted or degenerate triangle", line_no);
    triangles.push_back(tri);
  }

  Mesh::BoundaryLabels labels;
  std::vector<std::pair<std::pair<int, int>, int>> listed;  // (side, line)
  for (long long k = 0; k < ns; ++k) {
    if (!next_line(in, line, line_no)) throw ParseError("expected side line", line_no + 1);
    std::istringstream ls(line);
    long long a, b, lab;
    if (!(ls >> a >> b >> lab)) throw ParseError("malformed side `" + line + "`", line_no);
    if (a < 0 || a >= nv || b < 0 || b >= nv)
      throw ParseError("side vertex index out of range", line_no);
    if (lab < 0 || lab > 2) throw ParseError("side label must be 0, 1 or 2", line_no);
    std::pair<int, int> key{static_cast<int>(std::min(a, b)), static_cast<int>(std::max(a, b))};
    labels[key] = static_cast<SideLabel>(lab);
    listed.push_back({key, line_no});
  }
  if (next_line(in, line, line_no)) throw ParseError("trailing content", line_no);

  Mesh mesh;
  try {
    mesh = Mesh(std::move(vertices), std::move(triangles), labels);
  } catch (const GeometryError& e) {
    throw ParseError(e.what(), line_no);
  }
  if (mesh.num_sides() != ns)
    throw ParseError("header declares " + std::to_string(ns) + " sides, triangles define " +
                         std::to_string(mesh.num_sides()),
                     1);

  std::map<std::pair<int, int>, int> index;
  for (int s = 0; s < mesh.num_sides(); ++s) index[{mesh.side(s)[0], mesh.side(s)[1]}] = s;
  for (const auto& [key, ln] : listed) {
    auto it = index.find(key);
    if (it == index.end()) throw ParseError("side is not an edge of any triangle", ln);
    const bool boundary = mesh.is_boundary(it->second);
    const SideLabel lab = labels.at(key);
    if (boundary == (lab == SideLabel::Interior))
      throw ParseError(boundary ? "boundary side labelled interior" : "interior side labelled boundary", ln);
  }
  return mesh;
}

void save_mesh(const Mesh& mesh, const std::filesystem::path& path) {
  std::ostringstream out;
  out.precision(17);
  out << mesh.num_vertices() << ' ' << mesh.num_triangles() << ' ' << mesh.num_sides() << '\n';
  for (const Vec2& v : mesh.vertices()) out << v.x() << ' ' << v.y() << '\n';
  for (const auto& t : mesh.triangles()) out << t[0] << ' ' << t[1] << ' ' << t[2] << '\n';
  for (int s = 0; s < mesh.num_sides(); ++s)
    out << mesh.side(s)[0] << ' ' << mesh.side(s)[1] << ' ' << static_cast<int>(mesh.label(s)) << '\n';
  write_file_atomic(path, out.str());
}

}  // namespace gcfem
