#include "smhd/mesh.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <ostream>

namespace smhd {

namespace {

double signed_volume_of(const Vec3& a, const Vec3& b, const Vec3& c, const Vec3& d) {
  return (b - a).dot((c - a).cross(d - a)) / 6.0;
}

double circumdiameter(const Vec3& a, const Vec3& b, const Vec3& c, const Vec3& d) {
  Mat3 m;
  m.row(0) = (b - a).transpose();
  m.row(1) = (c - a).transpose();
  m.row(2) = (d - a).transpose();
  const Vec3 rhs(0.5 * (b - a).squaredNorm(), 0.5 * (c - a).squaredNorm(),
                 0.5 * (d - a).squaredNorm());
  const Vec3 center = m.partialPivLu().solve(rhs);
  return 2.0 * center.norm();
}

}  // namespace

double Mesh::signed_volume(Index t) const {
  const auto& v = tets[t];
  return signed_volume_of(vertices[v[0]], vertices[v[1]], vertices[v[2]], vertices[v[3]]);
}

int Mesh::face_edge_sign(const std::array<Index, 3>& face, const std::array<Index, 2>& edge) {
  if (edge[0] == face[0] && edge[1] == face[1]) return 1;
  if (edge[0] == face[1] && edge[1] == face[2]) return 1;
  if (edge[0] == face[0] && edge[1] == face[2]) return -1;
  return 0;
}

Mesh build_box_mesh(int nx, int ny, int nz, const Box& box) {
  if (nx < 1 || ny < 1 || nz < 1) {
    throw InvalidArgument("build_box_mesh: subdivision counts must be >= 1");
  }
  const Vec3 ext = box.extent();
  if (!(ext.x() > 0.0 && ext.y() > 0.0 && ext.z() > 0.0)) {
    throw InvalidArgument("build_box_mesh: box must have positive side lengths");
  }

  std::vector<Vec3> vertices;
  vertices.reserve(static_cast<std::size_t>(nx + 1) * (ny + 1) * (nz + 1));
  for (int k = 0; k <= nz; ++k) {
    for (int j = 0; j <= ny; ++j) {
      for (int i = 0; i <= nx; ++i) {
        vertices.emplace_back(box.lo.x() + ext.x() * i / nx, box.lo.y() + ext.y() * j / ny,
                              box.lo.z() + ext.z() * k / nz);
      }
    }
  }
  auto vid = [&](int i, int j, int k) -> Index { return i + (nx + 1) * (j + (ny + 1) * k); };

  // Every tet runs from the cell's (0,0,0) corner to its (1,1,1) corner along
  // one permutation of the axes, so all cells share the same diagonal.
  constexpr std::array<std::array<int, 3>, 6> perms = {
      {{0, 1, 2}, {0, 2, 1}, {1, 0, 2}, {1, 2, 0}, {2, 0, 1}, {2, 1, 0}}};

  std::vector<std::array<Index, 4>> tets;
  tets.reserve(static_cast<std::size_t>(6) * nx * ny * nz);
  for (int k = 0; k < nz; ++k) {
    for (int j = 0; j < ny; ++j) {
      for (int i = 0; i < nx; ++i) {
        for (const auto& p : perms) {
          std::array<int, 3> c{i, j, k};
          std::array<Index, 4> tet{};
          tet[0] = vid(c[0], c[1], c[2]);
          for (int s = 0; s < 3; ++s) {
            ++c[p[s]];
            tet[s + 1] = vid(c[0], c[1], c[2]);
          }
          tets.push_back(tet);
        }
      }
    }
  }
  return derive_topology(std::move(vertices), std::move(tets));
}

Mesh derive_topology(std::vector<Vec3> vertices, std::vector<std::array<Index, 4>> tets) {
  Mesh mesh;
  mesh.vertices = std::move(vertices);
  mesh.tets = std::move(tets);
  const Index nv = mesh.num_vertices();

  for (auto& t : mesh.tets) {
    for (Index v : t) {
      if (v < 0 || v >= nv) throw InvalidArgument("derive_topology: tet references invalid vertex");
    }
    const double vol = signed_volume_of(mesh.vertices[t[0]], mesh.vertices[t[1]],
                                        mesh.vertices[t[2]], mesh.vertices[t[3]]);
    if (vol == 0.0) throw InvalidArgument("derive_topology: degenerate tet");
    if (vol < 0.0) std::swap(t[2], t[3]);
  }
  {
    std::vector<std::array<Index, 4>> keys;
    keys.reserve(mesh.tets.size());
    for (auto t : mesh.tets) {
      std::sort(t.begin(), t.end());
      keys.push_back(t);
    }
    std::sort(keys.begin(), keys.end());
    if (std::adjacent_find(keys.begin(), keys.end()) != keys.end()) {
      throw InvalidArgument("derive_topology: duplicate tets");
    }
  }

  const Index nt = mesh.num_tets();

  // Edges and faces are enumerated in lexicographic order of their sorted keys.
  std::vector<std::array<Index, 2>> edge_keys;
  std::vector<std::array<Index, 3>> face_keys;
  edge_keys.reserve(6 * static_cast<std::size_t>(nt));
  face_keys.reserve(4 * static_cast<std::size_t>(nt));
  for (const auto& t : mesh.tets) {
    for (const auto& le : kTetEdges) {
      std::array<Index, 2> e{t[le[0]], t[le[1]]};
      std::sort(e.begin(), e.end());
      edge_keys.push_back(e);
    }
    for (const auto& lf : kTetFaces) {
      std::array<Index, 3> f{t[lf[0]], t[lf[1]], t[lf[2]]};
      std::sort(f.begin(), f.end());
      face_keys.push_back(f);
    }
  }
  mesh.edges = edge_keys;
  std::sort(mesh.edges.begin(), mesh.edges.end());
  mesh.edges.erase(std::unique(mesh.edges.begin(), mesh.edges.end()), mesh.edges.end());
  mesh.faces = face_keys;
  std::sort(mesh.faces.begin(), mesh.faces.end());
  mesh.faces.erase(std::unique(mesh.faces.begin(), mesh.faces.end()), mesh.faces.end());

  auto edge_index = [&](const std::array<Index, 2>& e) {
    return static_cast<Index>(std::lower_bound(mesh.edges.begin(), mesh.edges.end(), e) -
                              mesh.edges.begin());
  };
  auto face_index = [&](const std::array<Index, 3>& f) {
    return static_cast<Index>(std::lower_bound(mesh.faces.begin(), mesh.faces.end(), f) -
                              mesh.faces.begin());
  };

  mesh.tet_edges.resize(nt);
  mesh.tet_edge_signs.resize(nt);
  mesh.tet_faces.resize(nt);
  mesh.tet_face_signs.resize(nt);
  mesh.face_tets.assign(mesh.faces.size(), {-1, -1});

  for (Index t = 0; t < nt; ++t) {
    const auto& tv = mesh.tets[t];
    for (int le = 0; le < 6; ++le) {
      const std::size_t k = 6 * static_cast<std::size_t>(t) + le;
      mesh.tet_edges[t][le] = edge_index(edge_keys[k]);
      mesh.tet_edge_signs[t][le] = tv[kTetEdges[le][0]] < tv[kTetEdges[le][1]] ? 1 : -1;
    }
    for (int lf = 0; lf < 4; ++lf) {
      const std::size_t k = 4 * static_cast<std::size_t>(t) + lf;
      const Index f = face_index(face_keys[k]);
      mesh.tet_faces[t][lf] = f;
      const auto& fv = mesh.faces[f];
      const Vec3& a = mesh.vertices[fv[0]];
      const Vec3 normal = (mesh.vertices[fv[1]] - a).cross(mesh.vertices[fv[2]] - a);
      const Vec3& opposite = mesh.vertices[tv[lf]];
      mesh.tet_face_signs[t][lf] = normal.dot(a - opposite) > 0.0 ? 1 : -1;
      auto& ft = mesh.face_tets[f];
      if (ft[0] < 0) {
        ft[0] = t;
      } else if (ft[1] < 0) {
        ft[1] = t;
      } else {
        throw NonManifoldError("derive_topology: face shared by more than two tets");
      }
    }
  }

  mesh.boundary_vertex.assign(mesh.vertices.size(), 0);
  mesh.boundary_edge.assign(mesh.edges.size(), 0);
  mesh.boundary_face.assign(mesh.faces.size(), 0);
  for (Index f = 0; f < mesh.num_faces(); ++f) {
    if (mesh.face_tets[f][1] >= 0) continue;
    mesh.boundary_face[f] = 1;
    const auto& fv = mesh.faces[f];
    for (Index v : fv) mesh.boundary_vertex[v] = 1;
    mesh.boundary_edge[edge_index({fv[0], fv[1]})] = 1;
    mesh.boundary_edge[edge_index({fv[1], fv[2]})] = 1;
    mesh.boundary_edge[edge_index({fv[0], fv[2]})] = 1;
  }

  mesh.h = 0.0;
  for (const auto& t : mesh.tets) {
    mesh.h = std::max(mesh.h, circumdiameter(mesh.vertices[t[0]], mesh.vertices[t[1]],
                                             mesh.vertices[t[2]], mesh.vertices[t[3]]));
  }
  return mesh;
}

Box bounding_box(const Mesh& mesh) {
  Box b{Vec3::Constant(std::numeric_limits<double>::infinity()),
        Vec3::Constant(-std::numeric_limits<double>::infinity())};
  for (const auto& v : mesh.vertices) {
    b.lo = b.lo.cwiseMin(v);
    b.hi = b.hi.cwiseMax(v);
  }
  return b;
}

void write_vtk(std::ostream& out, const Mesh& mesh, const std::vector<CellField>& fields) {
  out << "# vtk DataFile Version 3.0\n";
  out << "smhd mesh\n";
  out << "ASCII\n";
  out << "DATASET UNSTRUCTURED_GRID\n";
  out.precision(17);
  out << "POINTS " << mesh.num_vertices() << " double\n";
  for (const auto& v : mesh.vertices) out << v.x() << ' ' << v.y() << ' ' << v.z() << '\n';
  out << "CELLS " << mesh.num_tets() << ' ' << 5 * mesh.num_tets() << '\n';
  for (const auto& t : mesh.tets) out << "4 " << t[0] << ' ' << t[1] << ' ' << t[2] << ' ' << t[3] << '\n';
  out << "CELL_TYPES " << mesh.num_tets() << '\n';
  for (Index t = 0; t < mesh.num_tets(); ++t) out << "10\n";
  if (fields.empty()) return;
  out << "CELL_DATA " << mesh.num_tets() << '\n';
  for (const auto& field : fields) {
    if (field.components == 3) {
      out << "VECTORS " << field.name << " double\n";
    } else {
      out << "SCALARS " << field.name << " double 1\nLOOKUP_TABLE default\n";
    }
    for (Index t = 0; t < mesh.num_tets(); ++t) {
      for (int c = 0; c < field.components; ++c) {
        out << field.values[static_cast<std::size_t>(field.components) * t + c]
            << (c + 1 == field.components ? '\n' : ' ');
      }
    }
  }
}

}  // namespace smhd
