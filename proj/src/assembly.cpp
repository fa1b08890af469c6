#include "smhd/assembly.hpp"

namespace smhd {

void ShapeTable::fill(const FeSpace& space, const TetGeometry& geom, Index t, const Bary& b) {
  LocalBasis basis;
  space.eval_basis(geom, t, b, basis);
  const int ns = basis.size;
  if (space.is_scalar_kind()) {
    const int nc = space.components();
    size = nc * ns;
    for (int c = 0; c < nc; ++c) {
      for (int s = 0; s < ns; ++s) {
        const int k = c * ns + s;
        scalar[k] = basis.phi[s];
        value[k] = Vec3::Zero();
        value[k][c] = basis.phi[s];
        jac[k] = Mat3::Zero();
        jac[k].row(c) = basis.grad[s].transpose();
        div[k] = basis.grad[s][c];
      }
    }
  } else {
    size = ns;
    for (int s = 0; s < ns; ++s) {
      value[s] = basis.value[s];
      curl[s] = basis.curl[s];
      div[s] = basis.div[s];
    }
  }
}

namespace {

void require_same_mesh(const FeSpace& a, const FeSpace& b) {
  if (&a.mesh() != &b.mesh()) throw InvalidArgument("assemble: trial and test spaces live on different meshes");
}

void require_coefficient(const FeFunction& f, const FeSpace& trial, const char* what) {
  if (f.space == nullptr) throw InvalidArgument(std::string("assemble: missing coefficient for ") + what);
  if (&f.space->mesh() != &trial.mesh()) throw InvalidArgument(std::string("assemble: ") + what + " coefficient on a different mesh");
  if (f.coeffs.size() != f.space->num_dofs()) throw InvalidArgument(std::string("assemble: ") + what + " coefficient size mismatch");
}

bool is_vector(const FeSpace& s) { return s.value_dim() == 3; }

// Generic element loop: `kernel(jw, trial, test, a)` adds contributions to the
// local matrix a(test, trial) at one quadrature point; jw is the quadrature
// weight times the Jacobian.
template <class Setup, class Kernel>
SparseMatrix element_loop(const FeSpace& trial, const FeSpace& test, const QuadratureRule& rule, Setup setup,
                          Kernel kernel) {
  const Mesh& m = trial.mesh();
  std::vector<Triplet> trips;
  trips.reserve(static_cast<std::size_t>(m.num_tets()) * trial.local_dofs() * test.local_dofs());
  std::vector<Index> trial_dofs, test_dofs;
  ShapeTable st, ss;
  Eigen::MatrixXd a(test.local_dofs(), trial.local_dofs());
  for (Index t = 0; t < m.num_tets(); ++t) {
    const TetGeometry g = tet_geometry(m, t);
    trial.cell_dofs(t, trial_dofs);
    test.cell_dofs(t, test_dofs);
    a.setZero();
    for (std::size_t q = 0; q < rule.size(); ++q) {
      const Bary& b = rule.points[q];
      const double jw = 6.0 * g.volume * rule.weights[q];
      st.fill(trial, g, t, b);
      ss.fill(test, g, t, b);
      setup(t, g, b);
      kernel(jw, st, ss, a);
    }
    for (int i = 0; i < a.rows(); ++i)
      for (int j = 0; j < a.cols(); ++j)
        if (a(i, j) != 0.0) trips.push_back({test_dofs[i], trial_dofs[j], a(i, j)});
  }
  return finalize_assembly(test.num_dofs(), trial.num_dofs(), std::move(trips));
}

auto no_setup = [](Index, const TetGeometry&, const Bary&) {};

// Cell-local evaluator of an FE coefficient.
struct CoefficientEval {
  const FeFunction& f;
  std::vector<Index> dofs;
  LocalBasis basis;
  Vec3 value(Index t, const TetGeometry& g, const Bary& b) {
    f.space->eval_basis(g, t, b, basis);
    return evaluate(*f.space, f.coeffs, t, basis, dofs);
  }
};

}  // namespace

SparseMatrix assemble(const FormKind& form, const FeSpace& trial, const FeSpace& test) {
  require_same_mesh(trial, test);
  return std::visit(
      [&](const auto& f) -> SparseMatrix {
        using F = std::decay_t<decltype(f)>;
        if constexpr (std::is_same_v<F, VectorLaplacian>) {
          if (!trial.is_scalar_kind() || trial.kind() == SpaceKind::DG0 || trial.kind() != test.kind() ||
              trial.components() != test.components())
            throw InvalidArgument("assemble: vector Laplacian needs one Lagrange space");
          return element_loop(trial, test, base_tet_rule(), no_setup,
                              [](double jw, const ShapeTable& u, const ShapeTable& v, Eigen::MatrixXd& a) {
                                for (int i = 0; i < v.size; ++i)
                                  for (int j = 0; j < u.size; ++j)
                                    a(i, j) += jw * (v.jac[i].cwiseProduct(u.jac[j])).sum();
                              });
        } else if constexpr (std::is_same_v<F, Mass>) {
          if (trial.value_dim() != test.value_dim()) throw InvalidArgument("assemble: mass needs equal value dimensions");
          return element_loop(trial, test, base_tet_rule(), no_setup,
                              [](double jw, const ShapeTable& u, const ShapeTable& v, Eigen::MatrixXd& a) {
                                for (int i = 0; i < v.size; ++i)
                                  for (int j = 0; j < u.size; ++j) a(i, j) += jw * v.value[i].dot(u.value[j]);
                              });
        } else if constexpr (std::is_same_v<F, MixedDiv>) {
          const bool ok_trial = trial.kind() == SpaceKind::RaviartThomas0 ||
                                (trial.kind() == SpaceKind::LagrangeP2 && trial.components() == 3);
          if (!ok_trial || test.value_dim() != 1) throw InvalidArgument("assemble: mixed divergence needs RT0 or vector P2 trial and a scalar test");
          return element_loop(trial, test, base_tet_rule(), no_setup,
                              [](double jw, const ShapeTable& u, const ShapeTable& v, Eigen::MatrixXd& a) {
                                for (int i = 0; i < v.size; ++i)
                                  for (int j = 0; j < u.size; ++j) a(i, j) += jw * v.scalar[i] * u.div[j];
                              });
        } else if constexpr (std::is_same_v<F, CurlPairing>) {
          const bool curl_on_test = test.kind() == SpaceKind::NedelecEdge0;
          const bool curl_on_trial = trial.kind() == SpaceKind::NedelecEdge0;
          if (curl_on_test == curl_on_trial || !is_vector(trial) || !is_vector(test))
            throw InvalidArgument("assemble: curl pairing needs exactly one Nedelec space and a vector partner");
          return element_loop(trial, test, base_tet_rule(), no_setup,
                              [curl_on_test](double jw, const ShapeTable& u, const ShapeTable& v, Eigen::MatrixXd& a) {
                                for (int i = 0; i < v.size; ++i)
                                  for (int j = 0; j < u.size; ++j)
                                    a(i, j) += jw * (curl_on_test ? u.value[j].dot(v.curl[i]) : u.curl[j].dot(v.value[i]));
                              });
        } else if constexpr (std::is_same_v<F, Convection>) {
          require_coefficient(f.w, trial, "convection");
          if (&trial != &test && !(trial.kind() == test.kind() && trial.components() == test.components()))
            throw InvalidArgument("assemble: convection needs equal trial and test spaces");
          if (trial.kind() != SpaceKind::LagrangeP2 || trial.components() != 3)
            throw InvalidArgument("assemble: convection acts on vector P2");
          CoefficientEval w{f.w, {}, {}};
          Vec3 wq;
          const SparseMatrix n = element_loop(
              trial, test, rich_tet_rule(), [&](Index t, const TetGeometry& g, const Bary& b) { wq = w.value(t, g, b); },
              [&](double jw, const ShapeTable& u, const ShapeTable& v, Eigen::MatrixXd& a) {
                for (int j = 0; j < u.size; ++j) {
                  const Vec3 dw = jw * (u.jac[j] * wq);
                  for (int i = 0; i < v.size; ++i) a(i, j) += dw.dot(v.value[i]);
                }
              });
          return add(n, n.transpose(), 0.5, -0.5);
        } else {
          require_coefficient(f.g, trial, "cross coupling");
          if (!is_vector(trial) || !is_vector(test)) throw InvalidArgument("assemble: cross coupling needs vector spaces");
          CoefficientEval g{f.g, {}, {}};
          Vec3 gq;
          const bool both = f.both;
          return element_loop(
              trial, test, rich_tet_rule(), [&](Index t, const TetGeometry& geo, const Bary& b) { gq = g.value(t, geo, b); },
              [&](double jw, const ShapeTable& u, const ShapeTable& v, Eigen::MatrixXd& a) {
                for (int j = 0; j < u.size; ++j) {
                  const Vec3 ug = u.value[j].cross(gq);
                  for (int i = 0; i < v.size; ++i)
                    a(i, j) += jw * (both ? ug.dot(v.value[i].cross(gq)) : ug.dot(v.value[i]));
                }
              });
        }
      },
      form);
}

Vector assemble_load(const FeSpace& test, const Field& f) {
  if (f.components != test.value_dim()) throw InvalidArgument("assemble_load: field and space dimensions differ");
  const Mesh& m = test.mesh();
  const auto& rule = rich_tet_rule();
  Vector out = Vector::Zero(test.num_dofs());
  std::vector<Index> dofs;
  ShapeTable s;
  for (Index t = 0; t < m.num_tets(); ++t) {
    const TetGeometry g = tet_geometry(m, t);
    test.cell_dofs(t, dofs);
    for (std::size_t q = 0; q < rule.size(); ++q) {
      const Bary& b = rule.points[q];
      const double jw = 6.0 * g.volume * rule.weights[q];
      const Vec3 fq = f.eval(t, b, g.point(b));
      s.fill(test, g, t, b);
      for (int i = 0; i < s.size; ++i) {
        out[dofs[i]] += jw * (f.components == 1 ? fq[0] * s.scalar[i] : fq.dot(s.value[i]));
      }
    }
  }
  return out;
}

BlockField block_field(const std::string& name, const FeSpace& space) {
  BlockField f;
  f.name = name;
  f.size = space.num_dofs();
  f.constrained = space.constrained();
  f.mean_weights = space.mean_weights();
  return f;
}

}  // namespace smhd
