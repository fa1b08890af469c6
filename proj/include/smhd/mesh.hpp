#pragma once

#include "smhd/common.hpp"

#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

namespace smhd {

/// Axis-aligned box [lo, hi].
struct Box {
  Vec3 lo = Vec3::Zero();
  Vec3 hi = Vec3::Ones();

  Vec3 extent() const { return hi - lo; }
  double volume() const { return extent().prod(); }
};

/// Local tet edge (i, j) for i < j, in the order used by every tet-local edge table.
inline constexpr std::array<std::array<int, 2>, 6> kTetEdges = {
    {{0, 1}, {0, 2}, {0, 3}, {1, 2}, {1, 3}, {2, 3}}};

/// Local face k is the face opposite local vertex k.
inline constexpr std::array<std::array<int, 3>, 4> kTetFaces = {
    {{1, 2, 3}, {0, 2, 3}, {0, 1, 3}, {0, 1, 2}}};

/// Tetrahedral complex. Edges and faces are stored with ascending vertex
/// indices; that ordering is the global orientation (edge tangent from the
/// lower to the higher vertex, face normal by the right-hand rule on the
/// sorted triple).
struct Mesh {
  std::vector<Vec3> vertices;
  std::vector<std::array<Index, 4>> tets;
  std::vector<std::array<Index, 2>> edges;
  std::vector<std::array<Index, 3>> faces;

  std::vector<std::array<Index, 6>> tet_edges;
  /// +1 when the local edge direction (local i -> local j) agrees with the global one.
  std::vector<std::array<int, 6>> tet_edge_signs;
  std::vector<std::array<Index, 4>> tet_faces;
  /// +1 when the global face normal points out of the tet.
  std::vector<std::array<int, 4>> tet_face_signs;
  /// Incident tets per face; second entry is -1 on the boundary.
  std::vector<std::array<Index, 2>> face_tets;

  std::vector<char> boundary_vertex;
  std::vector<char> boundary_edge;
  std::vector<char> boundary_face;

  double h = 0.0;

  Index num_vertices() const { return static_cast<Index>(vertices.size()); }
  Index num_edges() const { return static_cast<Index>(edges.size()); }
  Index num_faces() const { return static_cast<Index>(faces.size()); }
  Index num_tets() const { return static_cast<Index>(tets.size()); }

  double signed_volume(Index t) const;
  double volume(Index t) const { return signed_volume(t); }
  Index euler_characteristic() const {
    return num_vertices() - num_edges() + num_faces() - num_tets();
  }
  /// Edge e = (a, b), a < b, has sign +1 in face f = (x, y, z) for (x,y), (y,z)
  /// and -1 for (x,z).
  static int face_edge_sign(const std::array<Index, 3>& face, const std::array<Index, 2>& edge);
};

/// Kuhn subdivision of an nx*ny*nz grid of boxes into 6 tets per cell.
Mesh build_box_mesh(int nx, int ny, int nz, const Box& box = {});

/// Fills edges, faces, incidences, orientation signs, boundary flags and h.
/// The tets are reordered, if necessary, so that each has positive volume.
Mesh derive_topology(std::vector<Vec3> vertices, std::vector<std::array<Index, 4>> tets);

/// Smallest axis-aligned box containing the vertices.
Box bounding_box(const Mesh& mesh);

/// Legacy ASCII VTK unstructured grid with optional per-cell fields.
struct CellField {
  std::string name;
  int components = 1;
  std::vector<double> values;  // components * num_tets
};
void write_vtk(std::ostream& out, const Mesh& mesh, const std::vector<CellField>& fields = {});

}  // namespace smhd
