#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <map>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

namespace oldroyd {

enum class BoundaryTag { wall, inflow, outflow, none };

inline const char* to_string(BoundaryTag t) {
  switch (t) {
    case BoundaryTag::wall: return "wall";
    case BoundaryTag::inflow: return "inflow";
    case BoundaryTag::outflow: return "outflow";
    default: return "interior-none";
  }
}

inline BoundaryTag tag_from_string(const std::string& s) {
  if (s == "wall") return BoundaryTag::wall;
  if (s == "inflow") return BoundaryTag::inflow;
  if (s == "outflow") return BoundaryTag::outflow;
  if (s == "interior-none") return BoundaryTag::none;
  throw std::invalid_argument("unknown boundary tag: " + s);
}

struct BoundaryEdge {
  int a, b;
  BoundaryTag tag;
};

/// Triangulated 2D domain. Triangles are counterclockwise; the mesh is
/// immutable once built and safe to share across threads.
struct TriMesh {
  std::vector<std::array<double, 2>> vertices;
  std::vector<std::array<int, 3>> triangles;
  std::vector<BoundaryEdge> boundary_edges;

  int n_vertices() const { return static_cast<int>(vertices.size()); }
  int n_triangles() const { return static_cast<int>(triangles.size()); }

  double signed_area(int t) const {
    const auto& tr = triangles[t];
    const auto& p0 = vertices[tr[0]];
    const auto& p1 = vertices[tr[1]];
    const auto& p2 = vertices[tr[2]];
    return 0.5 * ((p1[0] - p0[0]) * (p2[1] - p0[1]) - (p2[0] - p0[0]) * (p1[1] - p0[1]));
  }

  double area() const {
    double s = 0;
    for (int t = 0; t < n_triangles(); ++t) s += signed_area(t);
    return s;
  }

  double diameter(int t) const {
    const auto& tr = triangles[t];
    double d = 0;
    for (int e = 0; e < 3; ++e) {
      const auto& p = vertices[tr[e]];
      const auto& q = vertices[tr[(e + 1) % 3]];
      d = std::max(d, std::hypot(q[0] - p[0], q[1] - p[1]));
    }
    return d;
  }

  std::array<double, 2> barycenter(int t) const {
    const auto& tr = triangles[t];
    return {(vertices[tr[0]][0] + vertices[tr[1]][0] + vertices[tr[2]][0]) / 3.0,
            (vertices[tr[0]][1] + vertices[tr[1]][1] + vertices[tr[2]][1]) / 3.0};
  }
};

struct DomainSpec {
  enum class Kind { unit_square, contraction } kind = Kind::unit_square;
  int n_per_side = 2;
  double upstream_len = 8.0;
  double downstream_len = 8.0;
  int corner_refine_levels = 0;

  static DomainSpec unit_square(int n) {
    DomainSpec s;
    s.kind = Kind::unit_square;
    s.n_per_side = n;
    return s;
  }
  static DomainSpec contraction(double up = 8.0, double down = 8.0, int levels = 0) {
    DomainSpec s;
    s.kind = Kind::contraction;
    s.upstream_len = up;
    s.downstream_len = down;
    s.corner_refine_levels = levels;
    return s;
  }
};

namespace detail {

struct MeshBuilder {
  std::vector<std::array<double, 2>> verts;
  std::vector<std::array<int, 3>> tris;
  std::vector<bool> alive;
  std::map<std::pair<int, int>, BoundaryTag> bedges;
  std::map<std::pair<int, int>, int> midpoints;

  static std::pair<int, int> key(int a, int b) { return {std::min(a, b), std::max(a, b)}; }

  int longest_edge(int t) const {
    const auto& tr = tris[t];
    double best = -1;
    int which = 0;
    for (int e = 0; e < 3; ++e) {
      const auto& p = verts[tr[e]];
      const auto& q = verts[tr[(e + 1) % 3]];
      const double len = std::hypot(q[0] - p[0], q[1] - p[1]);
      // deterministic tie-break on vertex indices
      if (len > best * (1.0 + 1e-12)) {
        best = len;
        which = e;
      }
    }
    return which;
  }

  int find_neighbor(int t, int a, int b) const {
    const auto k = key(a, b);
    for (int i = 0; i < static_cast<int>(tris.size()); ++i) {
      if (!alive[i] || i == t) continue;
      const auto& tr = tris[i];
      for (int e = 0; e < 3; ++e) {
        if (key(tr[e], tr[(e + 1) % 3]) == k) return i;
      }
    }
    return -1;
  }

  int midpoint(int a, int b) {
    const auto k = key(a, b);
    auto it = midpoints.find(k);
    if (it != midpoints.end()) return it->second;
    const int id = static_cast<int>(verts.size());
    verts.push_back({0.5 * (verts[a][0] + verts[b][0]), 0.5 * (verts[a][1] + verts[b][1])});
    midpoints.emplace(k, id);
    return id;
  }

  void split_at(int t, int e) {
    const auto tr = tris[t];
    const int a = tr[e], b = tr[(e + 1) % 3], c = tr[(e + 2) % 3];
    const int m = midpoint(a, b);
    alive[t] = false;
    tris.push_back({a, m, c});
    alive.push_back(true);
    tris.push_back({m, b, c});
    alive.push_back(true);
    auto bit = bedges.find(key(a, b));
    if (bit != bedges.end()) {
      const BoundaryTag tag = bit->second;
      bedges.erase(bit);
      bedges.emplace(key(a, m), tag);
      bedges.emplace(key(m, b), tag);
    }
  }

  // Rivara longest-edge bisection with conformity recursion.
  void bisect(int t, int depth = 0) {
    if (depth > 64) throw std::runtime_error("mesh refinement recursion too deep");
    while (alive[t]) {
      const int e = longest_edge(t);
      const int a = tris[t][e], b = tris[t][(e + 1) % 3];
      const int nbr = find_neighbor(t, a, b);
      if (nbr < 0) {
        split_at(t, e);
        return;
      }
      const int ne = longest_edge(nbr);
      if (key(tris[nbr][ne], tris[nbr][(ne + 1) % 3]) == key(a, b)) {
        split_at(t, e);
        split_at(nbr, ne);
        return;
      }
      bisect(nbr, depth + 1);
    }
  }

  TriMesh finish() const {
    TriMesh mesh;
    mesh.vertices = verts;
    for (int i = 0; i < static_cast<int>(tris.size()); ++i) {
      if (alive[i]) mesh.triangles.push_back(tris[i]);
    }
    for (const auto& [k, tag] : bedges) mesh.boundary_edges.push_back({k.first, k.second, tag});
    return mesh;
  }
};

}  // namespace detail

/// Builds the unit square meshed by a uniform n x n grid, every cell split
/// along the same diagonal, or the planar 4:1 contraction with optional
/// local bisection refinement around the two reentrant corners.
inline TriMesh build_mesh(const DomainSpec& spec) {
  if (spec.kind == DomainSpec::Kind::unit_square) {
    const int n = spec.n_per_side;
    if (n < 1) throw std::invalid_argument("unit_square: n_per_side must be positive");
    TriMesh mesh;
    const int np = n + 1;
    mesh.vertices.reserve(np * np);
    for (int j = 0; j < np; ++j) {
      for (int i = 0; i < np; ++i) {
        mesh.vertices.push_back({double(i) / n, double(j) / n});
      }
    }
    auto vid = [np](int i, int j) { return j * np + i; };
    mesh.triangles.reserve(2 * n * n);
    for (int j = 0; j < n; ++j) {
      for (int i = 0; i < n; ++i) {
        const int v00 = vid(i, j), v10 = vid(i + 1, j);
        const int v01 = vid(i, j + 1), v11 = vid(i + 1, j + 1);
        mesh.triangles.push_back({v00, v10, v11});
        mesh.triangles.push_back({v00, v11, v01});
      }
    }
    for (int i = 0; i < n; ++i) {
      mesh.boundary_edges.push_back({vid(i, 0), vid(i + 1, 0), BoundaryTag::wall});
      mesh.boundary_edges.push_back({vid(i, n), vid(i + 1, n), BoundaryTag::wall});
      mesh.boundary_edges.push_back({vid(0, i), vid(0, i + 1), BoundaryTag::wall});
      mesh.boundary_edges.push_back({vid(n, i), vid(n, i + 1), BoundaryTag::wall});
    }
    return mesh;
  }

  // Contraction: upstream [0,up] x [0,8], downstream [up, up+down] x [3,5].
  if (spec.corner_refine_levels < 0) throw std::invalid_argument("corner_refine_levels must be >= 0");
  const double up = spec.upstream_len, down = spec.downstream_len;
  if (up <= 0 || down <= 0) throw std::invalid_argument("contraction: lengths must be positive");
  const double cell = 0.5;
  const double xmax = up + down;
  const int nx = static_cast<int>(std::lround(xmax / cell));
  const int ny = static_cast<int>(std::lround(8.0 / cell));

  detail::MeshBuilder mb;
  auto inside = [&](double xc, double yc) { return xc <= up || (yc >= 3.0 && yc <= 5.0); };
  std::vector<int> vmap((nx + 1) * (ny + 1), -1);
  auto lid = [nx](int i, int j) { return j * (nx + 1) + i; };
  auto getv = [&](int i, int j) {
    int& v = vmap[lid(i, j)];
    if (v < 0) {
      v = static_cast<int>(mb.verts.size());
      mb.verts.push_back({i * cell, j * cell});
    }
    return v;
  };
  std::vector<bool> used(nx * ny, false);
  for (int j = 0; j < ny; ++j) {
    for (int i = 0; i < nx; ++i) {
      if (!inside((i + 0.5) * cell, (j + 0.5) * cell)) continue;
      used[j * nx + i] = true;
      const int v00 = getv(i, j), v10 = getv(i + 1, j);
      const int v01 = getv(i, j + 1), v11 = getv(i + 1, j + 1);
      mb.tris.push_back({v00, v10, v11});
      mb.tris.push_back({v00, v11, v01});
    }
  }
  mb.alive.assign(mb.tris.size(), true);

  auto cell_used = [&](int i, int j) { return i >= 0 && j >= 0 && i < nx && j < ny && used[j * nx + i]; };
  auto classify = [&](double x0, double x1) {
    if (x0 == 0.0 && x1 == 0.0) return BoundaryTag::inflow;
    if (x0 == xmax && x1 == xmax) return BoundaryTag::outflow;
    return BoundaryTag::wall;
  };
  for (int j = 0; j < ny; ++j) {
    for (int i = 0; i < nx; ++i) {
      if (!cell_used(i, j)) continue;
      struct Side {
        int di, dj, a0, a1, b0, b1;
      };
      // (neighbor offset, edge endpoints in lattice coords)
      const Side sides[4] = {{0, -1, i, j, i + 1, j},
                             {1, 0, i + 1, j, i + 1, j + 1},
                             {0, 1, i + 1, j + 1, i, j + 1},
                             {-1, 0, i, j + 1, i, j}};
      for (const auto& s : sides) {
        if (cell_used(i + s.di, j + s.dj)) continue;
        const int a = getv(s.a0, s.a1), b = getv(s.b0, s.b1);
        mb.bedges.emplace(detail::MeshBuilder::key(a, b), classify(mb.verts[a][0], mb.verts[b][0]));
      }
    }
  }

  // Locate the two reentrant corners and refine around them. One level is
  // two bisection passes of the corner-incident triangles, which halves the
  // local diameter.
  std::vector<int> corners;
  for (int v = 0; v < static_cast<int>(mb.verts.size()); ++v) {
    const auto& p = mb.verts[v];
    if (std::abs(p[0] - up) < 1e-12 && (std::abs(p[1] - 3.0) < 1e-12 || std::abs(p[1] - 5.0) < 1e-12)) {
      corners.push_back(v);
    }
  }
  for (int level = 0; level < spec.corner_refine_levels; ++level) {
    for (int pass = 0; pass < 2; ++pass) {
      std::vector<int> marked;
      for (int t = 0; t < static_cast<int>(mb.tris.size()); ++t) {
        if (!mb.alive[t]) continue;
        for (int c : corners) {
          if (mb.tris[t][0] == c || mb.tris[t][1] == c || mb.tris[t][2] == c) {
            marked.push_back(t);
            break;
          }
        }
      }
      for (int t : marked) {
        if (mb.alive[t]) mb.bisect(t);
      }
    }
  }
  return mb.finish();
}

/// All vertex indices lying on boundary edges with the given tag, sorted.
inline std::vector<int> boundary_dofs(const TriMesh& mesh, BoundaryTag tag) {
  std::vector<int> out;
  for (const auto& e : mesh.boundary_edges) {
    if (e.tag == tag) {
      out.push_back(e.a);
      out.push_back(e.b);
    }
  }
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

/// Plain-text export: header `nv nt nb`, vertex lines, triangle lines,
/// boundary lines `i j tag`.
inline void write_mesh(const TriMesh& mesh, std::ostream& os) {
  os << mesh.n_vertices() << ' ' << mesh.n_triangles() << ' ' << mesh.boundary_edges.size() << '\n';
  os.precision(17);
  for (const auto& v : mesh.vertices) os << v[0] << ' ' << v[1] << '\n';
  for (const auto& t : mesh.triangles) os << t[0] << ' ' << t[1] << ' ' << t[2] << '\n';
  for (const auto& e : mesh.boundary_edges) os << e.a << ' ' << e.b << ' ' << to_string(e.tag) << '\n';
}

}  // namespace oldroyd
