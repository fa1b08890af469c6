#include "doctest.h"
#include "smhd/mesh.hpp"

#include <algorithm>
#include <map>
#include <numeric>
#include <sstream>

using namespace smhd;

namespace {

Index count(const std::vector<char>& flags) { return static_cast<Index>(std::count(flags.begin(), flags.end(), 1)); }

Mesh single_tet() {
  return derive_topology({Vec3(0, 0, 0), Vec3(1, 0, 0), Vec3(0, 1, 0), Vec3(0, 0, 1)}, {{0, 1, 2, 3}});
}

}  // namespace

TEST_CASE("unit cube splits into six tets") {
  const Mesh m = build_box_mesh(1, 1, 1);
  CHECK(m.num_vertices() == 8);
  CHECK(m.num_edges() == 19);
  CHECK(m.num_faces() == 18);
  CHECK(m.num_tets() == 6);
  CHECK(count(m.boundary_face) == 12);
  CHECK(count(m.boundary_edge) == 18);
  CHECK(m.num_faces() - count(m.boundary_face) == 6);
  CHECK(m.euler_characteristic() == 1);

  // The only interior edge is the main diagonal.
  for (Index e = 0; e < m.num_edges(); ++e) {
    if (m.boundary_edge[e]) continue;
    const Vec3 d = m.vertices[m.edges[e][1]] - m.vertices[m.edges[e][0]];
    CHECK((d - Vec3(1, 1, 1)).norm() == doctest::Approx(0.0));
  }
  CHECK(m.h == doctest::Approx(std::sqrt(3.0)));
}

TEST_CASE("tet volumes partition the box") {
  const Box box{Vec3(-1, 0, 2), Vec3(1, 0.5, 3.5)};
  for (auto [nx, ny, nz] : {std::array{2, 1, 1}, std::array{3, 2, 4}}) {
    const Mesh m = build_box_mesh(nx, ny, nz, box);
    CHECK(m.num_tets() == 6 * nx * ny * nz);
    double total = 0.0;
    for (Index t = 0; t < m.num_tets(); ++t) {
      CHECK(m.signed_volume(t) > 0.0);
      total += m.volume(t);
    }
    CHECK(std::abs(total - box.volume()) <= 1e-13 * box.volume());
    CHECK(m.euler_characteristic() == 1);
  }
}

TEST_CASE("refined box counts") {
  const Mesh m = build_box_mesh(4, 4, 4);
  CHECK(m.num_vertices() == 125);
  CHECK(m.num_tets() == 384);
  CHECK(m.num_edges() == 604);
  CHECK(m.num_faces() == 864);
  CHECK(m.num_edges() - count(m.boundary_edge) == 316);
  CHECK(m.num_faces() - count(m.boundary_face) == 672);
  CHECK(m.num_vertices() - count(m.boundary_vertex) == 27);
}

TEST_CASE("faces have one or two tets and consistent orientation") {
  const Mesh m = build_box_mesh(3, 2, 2);
  for (Index f = 0; f < m.num_faces(); ++f) {
    const auto& ft = m.face_tets[f];
    REQUIRE(ft[0] >= 0);
    CHECK((ft[1] < 0) == static_cast<bool>(m.boundary_face[f]));
    if (ft[1] < 0) continue;
    // An interior face points out of exactly one of its two tets.
    int sum = 0;
    for (Index t : ft) {
      for (int lf = 0; lf < 4; ++lf)
        if (m.tet_faces[t][lf] == f) sum += m.tet_face_signs[t][lf];
    }
    CHECK(sum == 0);
  }
  for (const auto& e : m.edges) CHECK(e[0] < e[1]);
  for (const auto& f : m.faces) CHECK((f[0] < f[1] && f[1] < f[2]));
}

TEST_CASE("boundary of a boundary vanishes") {
  const Mesh m = build_box_mesh(2, 3, 2);
  for (Index t = 0; t < m.num_tets(); ++t) {
    std::map<Index, int> edge_sum;
    for (int lf = 0; lf < 4; ++lf) {
      const auto& face = m.faces[m.tet_faces[t][lf]];
      for (int le = 0; le < 6; ++le) {
        const Index e = m.tet_edges[t][le];
        edge_sum[e] += m.tet_face_signs[t][lf] * Mesh::face_edge_sign(face, m.edges[e]);
      }
    }
    for (const auto& [e, s] : edge_sum) CHECK(s == 0);
  }
}

TEST_CASE("single tet and glued pair") {
  const Mesh one = single_tet();
  CHECK(one.num_edges() == 6);
  CHECK(one.num_faces() == 4);
  CHECK(count(one.boundary_face) == 4);
  CHECK(count(one.boundary_edge) == 6);
  CHECK(count(one.boundary_vertex) == 4);

  // Negative orientation is repaired.
  const Mesh flipped = derive_topology({Vec3(0, 0, 0), Vec3(1, 0, 0), Vec3(0, 1, 0), Vec3(0, 0, 1)}, {{0, 2, 1, 3}});
  CHECK(flipped.signed_volume(0) > 0.0);

  const Mesh two = derive_topology({Vec3(0, 0, 0), Vec3(1, 0, 0), Vec3(0, 1, 0), Vec3(0, 0, 1), Vec3(1, 1, 1)},
                                   {{0, 1, 2, 3}, {1, 2, 3, 4}});
  CHECK(two.num_faces() - count(two.boundary_face) == 1);
}

TEST_CASE("invalid meshes are rejected") {
  CHECK_THROWS_AS(build_box_mesh(0, 1, 1), InvalidArgument);
  CHECK_THROWS_AS(build_box_mesh(1, -2, 1), InvalidArgument);
  CHECK_THROWS_AS(build_box_mesh(1, 1, 1, Box{Vec3(0, 0, 0), Vec3(1, 0, 1)}), InvalidArgument);
  const std::vector<Vec3> pts = {Vec3(0, 0, 0), Vec3(1, 0, 0), Vec3(0, 1, 0), Vec3(0, 0, 1),
                                 Vec3(0, 0, -1), Vec3(0.2, 0.2, 1)};
  CHECK_THROWS_AS(derive_topology(pts, {{0, 1, 2, 3}, {0, 1, 2, 5}, {0, 1, 2, 4}}), NonManifoldError);
  CHECK_THROWS_AS(derive_topology(pts, {{0, 1, 2, 3}, {3, 2, 1, 0}}), InvalidArgument);
  CHECK_THROWS_AS(derive_topology(pts, {{0, 1, 2, 9}}), InvalidArgument);
  CHECK_THROWS_AS(derive_topology({Vec3(0, 0, 0), Vec3(1, 0, 0), Vec3(2, 0, 0), Vec3(0, 0, 1)}, {{0, 1, 2, 3}}),
                  InvalidArgument);
}

TEST_CASE("vtk output") {
  const Mesh m = build_box_mesh(1, 1, 1);
  std::vector<double> vol;
  for (Index t = 0; t < m.num_tets(); ++t) vol.push_back(m.volume(t));
  std::ostringstream os;
  write_vtk(os, m, {{"volume", 1, vol}});
  const std::string s = os.str();
  CHECK(s.find("CELLS 6 30") != std::string::npos);
  CHECK(s.find("CELL_TYPES 6") != std::string::npos);
  CHECK(s.find("SCALARS volume double 1") != std::string::npos);
}
