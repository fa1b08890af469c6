#include "smhd/derham.hpp"

#include "smhd/quadrature.hpp"

#include <algorithm>
#include <cmath>

namespace smhd {

std::string to_string(SpaceKind kind) {
  switch (kind) {
    case SpaceKind::LagrangeP1: return "P1";
    case SpaceKind::LagrangeP2: return "P2";
    case SpaceKind::NedelecEdge0: return "N0";
    case SpaceKind::RaviartThomas0: return "RT0";
    case SpaceKind::DG0: return "DG0";
    case SpaceKind::DG1: return "DG1";
  }
  return "?";
}

TetGeometry tet_geometry(const Mesh& mesh, Index t) {
  TetGeometry g;
  const auto& tv = mesh.tets[t];
  for (int k = 0; k < 4; ++k) g.x[k] = mesh.vertices[tv[k]];
  Mat3 jac;
  jac.col(0) = g.x[1] - g.x[0];
  jac.col(1) = g.x[2] - g.x[0];
  jac.col(2) = g.x[3] - g.x[0];
  const Mat3 inv = jac.inverse();
  g.grad[0] = Vec3::Zero();
  for (int k = 1; k < 4; ++k) {
    g.grad[k] = inv.row(k - 1).transpose();
    g.grad[0] -= g.grad[k];
  }
  g.volume = jac.determinant() / 6.0;
  return g;
}

FeSpace::FeSpace(std::shared_ptr<const Mesh> mesh, SpaceKind kind, bool essential_bc, int components,
                 bool zero_mean)
    : mesh_(std::move(mesh)), kind_(kind), essential_bc_(essential_bc), components_(components),
      zero_mean_(zero_mean) {
  if (!mesh_) throw InvalidArgument("FeSpace: null mesh");
  if (components_ != 1 && components_ != 3) throw InvalidArgument("FeSpace: components must be 1 or 3");
  if (components_ != 1 && !is_scalar_kind()) {
    throw InvalidArgument("FeSpace: only Lagrange and DG spaces take several components");
  }
  const Mesh& m = *mesh_;
  std::vector<char> scalar_boundary;
  switch (kind_) {
    case SpaceKind::LagrangeP1:
      scalar_dofs_ = m.num_vertices();
      local_scalar_ = 4;
      scalar_boundary = m.boundary_vertex;
      break;
    case SpaceKind::LagrangeP2:
      scalar_dofs_ = m.num_vertices() + m.num_edges();
      local_scalar_ = 10;
      scalar_boundary = m.boundary_vertex;
      scalar_boundary.insert(scalar_boundary.end(), m.boundary_edge.begin(), m.boundary_edge.end());
      break;
    case SpaceKind::NedelecEdge0:
      scalar_dofs_ = m.num_edges();
      local_scalar_ = 6;
      scalar_boundary = m.boundary_edge;
      break;
    case SpaceKind::RaviartThomas0:
      scalar_dofs_ = m.num_faces();
      local_scalar_ = 4;
      scalar_boundary = m.boundary_face;
      break;
    case SpaceKind::DG0:
      scalar_dofs_ = m.num_tets();
      local_scalar_ = 1;
      scalar_boundary.assign(static_cast<std::size_t>(scalar_dofs_), 0);
      break;
    case SpaceKind::DG1:
      scalar_dofs_ = 4 * m.num_tets();
      local_scalar_ = 4;
      scalar_boundary.assign(static_cast<std::size_t>(scalar_dofs_), 0);
      break;
  }
  boundary_.reserve(static_cast<std::size_t>(num_dofs()));
  for (int c = 0; c < components_; ++c) {
    boundary_.insert(boundary_.end(), scalar_boundary.begin(), scalar_boundary.end());
  }
  constrained_ = essential_bc_ ? boundary_ : std::vector<char>(boundary_.size(), 0);
  free_index_.assign(boundary_.size(), -1);
  for (Index i = 0; i < num_dofs(); ++i) {
    if (constrained_[i]) continue;
    free_index_[i] = static_cast<Index>(free_dofs_.size());
    free_dofs_.push_back(i);
  }
}

bool FeSpace::is_scalar_kind() const {
  return kind_ == SpaceKind::LagrangeP1 || kind_ == SpaceKind::LagrangeP2 || kind_ == SpaceKind::DG0 ||
         kind_ == SpaceKind::DG1;
}

int FeSpace::value_dim() const { return is_scalar_kind() ? components_ : 3; }

void FeSpace::cell_dofs(Index t, std::vector<Index>& out) const {
  const Mesh& m = *mesh_;
  out.clear();
  std::array<Index, 10> s{};
  switch (kind_) {
    case SpaceKind::LagrangeP1:
      for (int k = 0; k < 4; ++k) s[k] = m.tets[t][k];
      break;
    case SpaceKind::LagrangeP2:
      for (int k = 0; k < 4; ++k) s[k] = m.tets[t][k];
      for (int e = 0; e < 6; ++e) s[4 + e] = m.num_vertices() + m.tet_edges[t][e];
      break;
    case SpaceKind::NedelecEdge0:
      for (int e = 0; e < 6; ++e) s[e] = m.tet_edges[t][e];
      break;
    case SpaceKind::RaviartThomas0:
      for (int f = 0; f < 4; ++f) s[f] = m.tet_faces[t][f];
      break;
    case SpaceKind::DG0:
      s[0] = t;
      break;
    case SpaceKind::DG1:
      for (int k = 0; k < 4; ++k) s[k] = 4 * t + k;
      break;
  }
  for (int c = 0; c < components_; ++c) {
    for (int k = 0; k < local_scalar_; ++k) out.push_back(c * scalar_dofs_ + s[k]);
  }
}

void FeSpace::eval_basis(const TetGeometry& g, Index t, const Bary& b, LocalBasis& out) const {
  out.size = local_scalar_;
  switch (kind_) {
    case SpaceKind::LagrangeP1:
    case SpaceKind::DG1:
      for (int k = 0; k < 4; ++k) {
        out.phi[k] = b[k];
        out.grad[k] = g.grad[k];
      }
      break;
    case SpaceKind::LagrangeP2:
      for (int k = 0; k < 4; ++k) {
        out.phi[k] = b[k] * (2.0 * b[k] - 1.0);
        out.grad[k] = (4.0 * b[k] - 1.0) * g.grad[k];
      }
      for (int e = 0; e < 6; ++e) {
        const int i = kTetEdges[e][0], j = kTetEdges[e][1];
        out.phi[4 + e] = 4.0 * b[i] * b[j];
        out.grad[4 + e] = 4.0 * (b[i] * g.grad[j] + b[j] * g.grad[i]);
      }
      break;
    case SpaceKind::DG0:
      out.phi[0] = 1.0;
      out.grad[0] = Vec3::Zero();
      break;
    case SpaceKind::NedelecEdge0: {
      const auto& signs = mesh_->tet_edge_signs[t];
      for (int e = 0; e < 6; ++e) {
        const int i = kTetEdges[e][0], j = kTetEdges[e][1];
        const double s = signs[e];
        out.value[e] = s * (b[i] * g.grad[j] - b[j] * g.grad[i]);
        out.curl[e] = 2.0 * s * g.grad[i].cross(g.grad[j]);
      }
      break;
    }
    case SpaceKind::RaviartThomas0: {
      const auto& signs = mesh_->tet_face_signs[t];
      const Vec3 x = g.point(b);
      for (int f = 0; f < 4; ++f) {
        const double s = signs[f];
        out.value[f] = s * (x - g.x[f]) / (3.0 * g.volume);
        out.div[f] = s / g.volume;
      }
      break;
    }
  }
}

Vector FeSpace::mean_weights() const {
  if (!zero_mean_) return Vector();
  Vector w = Vector::Zero(num_dofs());
  const auto& rule = base_tet_rule();
  std::vector<Index> dofs;
  LocalBasis basis;
  for (Index t = 0; t < mesh_->num_tets(); ++t) {
    const TetGeometry g = tet_geometry(*mesh_, t);
    cell_dofs(t, dofs);
    for (std::size_t q = 0; q < rule.size(); ++q) {
      eval_basis(g, t, rule.points[q], basis);
      const double jw = 6.0 * g.volume * rule.weights[q];
      for (int c = 0; c < components_; ++c) {
        for (int k = 0; k < basis.size; ++k) w[dofs[c * basis.size + k]] += jw * basis.phi[k];
      }
    }
  }
  return w;
}

Vector expand_free(const FeSpace& space, const Vector& reduced) {
  if (reduced.size() != space.num_free()) throw InvalidArgument("expand_free: size mismatch");
  Vector full = Vector::Zero(space.num_dofs());
  const auto& free = space.free_dofs();
  for (Index i = 0; i < space.num_free(); ++i) full[free[i]] = reduced[i];
  return full;
}

Vector restrict_free(const FeSpace& space, const Vector& full) {
  if (full.size() != space.num_dofs()) throw InvalidArgument("restrict_free: size mismatch");
  Vector reduced(space.num_free());
  const auto& free = space.free_dofs();
  for (Index i = 0; i < space.num_free(); ++i) reduced[i] = full[free[i]];
  return reduced;
}

Field analytic_scalar(ScalarFunction f) {
  return {1, [f = std::move(f)](Index, const Bary&, const Vec3& x) { return Vec3(f(x), 0.0, 0.0); }};
}

Field analytic_vector(VectorFunction f) {
  return {3, [f = std::move(f)](Index, const Bary&, const Vec3& x) { return f(x); }};
}

Field fe_field(const FeSpace& space, const Vector& coeffs) {
  if (coeffs.size() != space.num_dofs()) throw InvalidArgument("fe_field: coefficient size mismatch");
  return {space.value_dim(), [&space, coeffs](Index t, const Bary& b, const Vec3&) {
            const TetGeometry g = tet_geometry(space.mesh(), t);
            LocalBasis basis;
            space.eval_basis(g, t, b, basis);
            std::vector<Index> dofs;
            return evaluate(space, coeffs, t, basis, dofs);
          }};
}

Vec3 evaluate(const FeSpace& space, const Vector& coeffs, Index t, const LocalBasis& basis,
              std::vector<Index>& dofs) {
  space.cell_dofs(t, dofs);
  Vec3 v = Vec3::Zero();
  if (space.is_scalar_kind()) {
    for (int c = 0; c < space.components(); ++c) {
      double s = 0.0;
      for (int k = 0; k < basis.size; ++k) s += coeffs[dofs[c * basis.size + k]] * basis.phi[k];
      v[c] = s;
    }
  } else {
    for (int k = 0; k < basis.size; ++k) v += coeffs[dofs[k]] * basis.value[k];
  }
  return v;
}

Mat3 evaluate_gradient(const FeSpace& space, const Vector& coeffs, Index t, const LocalBasis& basis,
                       std::vector<Index>& dofs) {
  if (!space.is_scalar_kind()) throw InvalidArgument("evaluate_gradient: needs a Lagrange or DG space");
  space.cell_dofs(t, dofs);
  Mat3 m = Mat3::Zero();
  for (int c = 0; c < space.components(); ++c) {
    Vec3 gsum = Vec3::Zero();
    for (int k = 0; k < basis.size; ++k) gsum += coeffs[dofs[c * basis.size + k]] * basis.grad[k];
    m.row(c) = gsum.transpose();
  }
  return m;
}

namespace {

Bary vertex_bary(int k) {
  Bary b{0.0, 0.0, 0.0, 0.0};
  b[k] = 1.0;
  return b;
}

// First tet (and local position) seen for each vertex, edge and face.
struct Owners {
  std::vector<std::pair<Index, int>> vertex, edge, face;
};

Owners find_owners(const Mesh& m) {
  Owners o;
  o.vertex.assign(m.vertices.size(), {-1, 0});
  o.edge.assign(m.edges.size(), {-1, 0});
  o.face.assign(m.faces.size(), {-1, 0});
  for (Index t = 0; t < m.num_tets(); ++t) {
    for (int k = 0; k < 4; ++k) {
      if (o.vertex[m.tets[t][k]].first < 0) o.vertex[m.tets[t][k]] = {t, k};
      if (o.face[m.tet_faces[t][k]].first < 0) o.face[m.tet_faces[t][k]] = {t, k};
    }
    for (int e = 0; e < 6; ++e) {
      if (o.edge[m.tet_edges[t][e]].first < 0) o.edge[m.tet_edges[t][e]] = {t, e};
    }
  }
  return o;
}

}  // namespace

Vector interpolate(const FeSpace& space, const Field& field) {
  const Mesh& m = space.mesh();
  const int vd = space.value_dim();
  if (field.components != vd) {
    throw InvalidArgument("interpolate: field has " + std::to_string(field.components) +
                          " components, space " + to_string(space.kind()) + " needs " + std::to_string(vd));
  }
  Vector out = Vector::Zero(space.num_dofs());
  const Index ns = space.scalar_dofs();
  const int nc = space.components();

  switch (space.kind()) {
    case SpaceKind::LagrangeP1:
    case SpaceKind::LagrangeP2: {
      const Owners own = find_owners(m);
      for (Index v = 0; v < m.num_vertices(); ++v) {
        const auto [t, k] = own.vertex[v];
        const Bary b = vertex_bary(k);
        const Vec3 val = field.eval(t, b, m.vertices[v]);
        for (int c = 0; c < nc; ++c) out[c * ns + v] = val[c];
      }
      if (space.kind() == SpaceKind::LagrangeP2) {
        for (Index e = 0; e < m.num_edges(); ++e) {
          const auto [t, le] = own.edge[e];
          Bary b{0.0, 0.0, 0.0, 0.0};
          b[kTetEdges[le][0]] = b[kTetEdges[le][1]] = 0.5;
          const Vec3 x = 0.5 * (m.vertices[m.edges[e][0]] + m.vertices[m.edges[e][1]]);
          const Vec3 val = field.eval(t, b, x);
          for (int c = 0; c < nc; ++c) out[c * ns + m.num_vertices() + e] = val[c];
        }
      }
      break;
    }
    case SpaceKind::NedelecEdge0: {
      const Owners own = find_owners(m);
      const QuadratureRule rule = edge_rule(9);
      for (Index e = 0; e < m.num_edges(); ++e) {
        const auto [t, le] = own.edge[e];
        // Local endpoints ordered along the global tangent.
        int la = kTetEdges[le][0], lb = kTetEdges[le][1];
        if (m.tet_edge_signs[t][le] < 0) std::swap(la, lb);
        const Vec3& xa = m.vertices[m.edges[e][0]];
        const Vec3& xb = m.vertices[m.edges[e][1]];
        const Vec3 tangent = xb - xa;
        double sum = 0.0;
        for (std::size_t q = 0; q < rule.size(); ++q) {
          const double s = rule.points[q][1];
          Bary b{0.0, 0.0, 0.0, 0.0};
          b[la] = 1.0 - s;
          b[lb] = s;
          sum += rule.weights[q] * field.eval(t, b, xa + s * tangent).dot(tangent);
        }
        out[e] = sum;
      }
      break;
    }
    case SpaceKind::RaviartThomas0: {
      const Owners own = find_owners(m);
      const QuadratureRule rule = triangle_rule(8);
      for (Index f = 0; f < m.num_faces(); ++f) {
        const auto [t, lf] = own.face[f];
        const auto& fv = m.faces[f];
        std::array<int, 3> local{};
        for (int i = 0; i < 3; ++i) {
          local[i] = static_cast<int>(std::find(m.tets[t].begin(), m.tets[t].end(), fv[i]) - m.tets[t].begin());
        }
        const Vec3& xa = m.vertices[fv[0]];
        const Vec3& xb = m.vertices[fv[1]];
        const Vec3& xc = m.vertices[fv[2]];
        const Vec3 normal = (xb - xa).cross(xc - xa);
        double sum = 0.0;
        for (std::size_t q = 0; q < rule.size(); ++q) {
          const auto& p = rule.points[q];
          Bary b{0.0, 0.0, 0.0, 0.0};
          for (int i = 0; i < 3; ++i) b[local[i]] = p[i];
          const Vec3 x = p[0] * xa + p[1] * xb + p[2] * xc;
          sum += rule.weights[q] * field.eval(t, b, x).dot(normal);
        }
        out[f] = sum;
      }
      break;
    }
    case SpaceKind::DG0: {
      const QuadratureRule rule = tet_rule(8);
      for (Index t = 0; t < m.num_tets(); ++t) {
        const TetGeometry g = tet_geometry(m, t);
        Vec3 sum = Vec3::Zero();
        for (std::size_t q = 0; q < rule.size(); ++q) {
          sum += 6.0 * rule.weights[q] * field.eval(t, rule.points[q], g.point(rule.points[q]));
        }
        for (int c = 0; c < nc; ++c) out[c * ns + t] = sum[c];
      }
      break;
    }
    case SpaceKind::DG1: {
      const QuadratureRule rule = tet_rule(8);
      // P1 mass matrix on a tet of unit volume.
      Eigen::Matrix4d mass;
      for (int i = 0; i < 4; ++i)
        for (int j = 0; j < 4; ++j) mass(i, j) = (i == j ? 2.0 : 1.0) / 20.0;
      const Eigen::Matrix4d inv = mass.inverse();
      for (Index t = 0; t < m.num_tets(); ++t) {
        const TetGeometry g = tet_geometry(m, t);
        Eigen::Matrix<double, 4, 3> rhs = Eigen::Matrix<double, 4, 3>::Zero();
        for (std::size_t q = 0; q < rule.size(); ++q) {
          const auto& b = rule.points[q];
          const Vec3 val = field.eval(t, b, g.point(b));
          for (int k = 0; k < 4; ++k) rhs.row(k) += 6.0 * rule.weights[q] * b[k] * val.transpose();
        }
        const Eigen::Matrix<double, 4, 3> coef = inv * rhs;
        for (int c = 0; c < nc; ++c)
          for (int k = 0; k < 4; ++k) out[c * ns + 4 * t + k] = coef(k, c);
      }
      break;
    }
  }
  return out;
}

double l2_norm(const FeSpace& space, const Vector& coeffs) {
  const Mesh& m = space.mesh();
  const auto& rule = base_tet_rule();
  std::vector<Index> dofs;
  LocalBasis basis;
  double sum = 0.0;
  for (Index t = 0; t < m.num_tets(); ++t) {
    const TetGeometry g = tet_geometry(m, t);
    for (std::size_t q = 0; q < rule.size(); ++q) {
      space.eval_basis(g, t, rule.points[q], basis);
      sum += 6.0 * g.volume * rule.weights[q] * evaluate(space, coeffs, t, basis, dofs).squaredNorm();
    }
  }
  return std::sqrt(sum);
}

double h1_seminorm(const FeSpace& space, const Vector& coeffs) {
  const Mesh& m = space.mesh();
  const auto& rule = base_tet_rule();
  std::vector<Index> dofs;
  LocalBasis basis;
  double sum = 0.0;
  for (Index t = 0; t < m.num_tets(); ++t) {
    const TetGeometry g = tet_geometry(m, t);
    for (std::size_t q = 0; q < rule.size(); ++q) {
      space.eval_basis(g, t, rule.points[q], basis);
      sum += 6.0 * g.volume * rule.weights[q] * evaluate_gradient(space, coeffs, t, basis, dofs).squaredNorm();
    }
  }
  return std::sqrt(sum);
}

SparseMatrix grad_incidence(const Mesh& mesh) {
  std::vector<Triplet> trips;
  for (Index e = 0; e < mesh.num_edges(); ++e) {
    trips.push_back({e, mesh.edges[e][0], -1.0});
    trips.push_back({e, mesh.edges[e][1], 1.0});
  }
  return finalize_assembly(mesh.num_edges(), mesh.num_vertices(), std::move(trips));
}

SparseMatrix curl_incidence(const Mesh& mesh) {
  // Local faces of a tet know their edges only through the tet tables, so the
  // face -> edge map is rebuilt from any incident tet.
  std::vector<Triplet> trips;
  std::vector<char> done(mesh.faces.size(), 0);
  for (Index t = 0; t < mesh.num_tets(); ++t) {
    for (int lf = 0; lf < 4; ++lf) {
      const Index f = mesh.tet_faces[t][lf];
      if (done[f]) continue;
      done[f] = 1;
      for (int le = 0; le < 6; ++le) {
        const Index e = mesh.tet_edges[t][le];
        const int s = Mesh::face_edge_sign(mesh.faces[f], mesh.edges[e]);
        if (s != 0) trips.push_back({f, e, static_cast<double>(s)});
      }
    }
  }
  return finalize_assembly(mesh.num_faces(), mesh.num_edges(), std::move(trips));
}

SparseMatrix div_incidence(const Mesh& mesh) {
  std::vector<Triplet> trips;
  for (Index t = 0; t < mesh.num_tets(); ++t) {
    for (int lf = 0; lf < 4; ++lf) {
      trips.push_back({t, mesh.tet_faces[t][lf], static_cast<double>(mesh.tet_face_signs[t][lf])});
    }
  }
  return finalize_assembly(mesh.num_tets(), mesh.num_faces(), std::move(trips));
}

Vector cell_divergence(const Mesh& mesh, const Vector& rt_coeffs) {
  if (rt_coeffs.size() != mesh.num_faces()) throw InvalidArgument("cell_divergence: size mismatch");
  Vector d(mesh.num_tets());
  for (Index t = 0; t < mesh.num_tets(); ++t) {
    double s = 0.0;
    for (int lf = 0; lf < 4; ++lf) s += mesh.tet_face_signs[t][lf] * rt_coeffs[mesh.tet_faces[t][lf]];
    d[t] = s / mesh.volume(t);
  }
  return d;
}

CommutingDefects check_commuting(const Mesh& mesh, const VectorFunction& f, const VectorFunction& curl_f,
                                 const VectorFunction& c, const ScalarFunction& div_c) {
  auto shared = std::make_shared<const Mesh>(mesh);
  const FeSpace ned(shared, SpaceKind::NedelecEdge0, false);
  const FeSpace rt(shared, SpaceKind::RaviartThomas0, false);
  const FeSpace dg(shared, SpaceKind::DG0, false);

  CommutingDefects out;
  const Vector pi_curl = interpolate(ned, analytic_vector(f));
  const Vector pi_div_curl = interpolate(rt, analytic_vector(curl_f));
  const Vector curl_part = curl_incidence(mesh) * pi_curl - pi_div_curl;
  out.curl_defect = l2_norm(rt, curl_part);
  out.curl_scale = l2_norm(rt, pi_div_curl);

  const Vector pi_div = interpolate(rt, analytic_vector(c));
  const Vector pi_0 = interpolate(dg, analytic_scalar(div_c));
  out.div_defect = l2_norm(dg, cell_divergence(mesh, pi_div) - pi_0);
  out.div_scale = l2_norm(dg, pi_0);
  return out;
}

ExactnessCount exactness_count(const std::shared_ptr<const Mesh>& mesh) {
  ExactnessCount n;
  n.grad = FeSpace(mesh, SpaceKind::LagrangeP1, true).num_free();
  n.curl = FeSpace(mesh, SpaceKind::NedelecEdge0, true).num_free();
  n.div = FeSpace(mesh, SpaceKind::RaviartThomas0, true).num_free();
  // The zero-mean constraint removes one dimension from the cell space.
  n.l2 = FeSpace(mesh, SpaceKind::DG0, false).num_free() - 1;
  return n;
}

}  // namespace smhd
