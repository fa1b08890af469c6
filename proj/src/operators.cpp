#include "smhd/operators.hpp"

#include "smhd/quadrature.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/SVD>
#include <Eigen/SparseCholesky>

#include <cmath>
#include <numbers>

namespace smhd {

struct DiscreteOps::Factors {
  Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> mc, mg;
};

namespace {

SparseMatrix restrict_to_free(const SparseMatrix& a, const FeSpace& rows, const FeSpace& cols) {
  return restrict_matrix(a, rows.free_index(), rows.num_free(), cols.free_index(), cols.num_free());
}

template <class Solver>
void factor(Solver& s, const SparseMatrix& m, const char* what) {
  s.compute(m.to_eigen());
  if (s.info() != Eigen::Success) {
    throw SingularSystemError(std::string("mass matrix factorization failed (") + what + "); the mesh is invalid", -1);
  }
}

double uniform01(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

}  // namespace

DiscreteOps::DiscreteOps(std::shared_ptr<const Mesh> mesh)
    : mesh_(mesh),
      ned_(mesh, SpaceKind::NedelecEdge0, true),
      rt_(mesh, SpaceKind::RaviartThomas0, true),
      p1_(mesh, SpaceKind::LagrangeP1, true),
      dg0_(mesh, SpaceKind::DG0, false),
      factors_(std::make_unique<Factors>()) {
  mc_ = restrict_to_free(assemble(Mass{}, ned_, ned_), ned_, ned_);
  md_ = restrict_to_free(assemble(Mass{}, rt_, rt_), rt_, rt_);
  mg_ = restrict_to_free(assemble(Mass{}, p1_, p1_), p1_, p1_);
  kcd_ = restrict_to_free(assemble(CurlPairing{}, ned_, rt_), rt_, ned_);
  // (grad v, w): pair each Nedelec function with the gradient of a scalar P1 function.
  {
    std::vector<Triplet> trips;
    const auto& rule = base_tet_rule();
    std::vector<Index> nd, pd;
    LocalBasis nb, pb;
    for (Index t = 0; t < mesh->num_tets(); ++t) {
      const TetGeometry g = tet_geometry(*mesh, t);
      ned_.cell_dofs(t, nd);
      p1_.cell_dofs(t, pd);
      Eigen::Matrix<double, 6, 4> a = Eigen::Matrix<double, 6, 4>::Zero();
      for (std::size_t q = 0; q < rule.size(); ++q) {
        ned_.eval_basis(g, t, rule.points[q], nb);
        p1_.eval_basis(g, t, rule.points[q], pb);
        const double jw = 6.0 * g.volume * rule.weights[q];
        for (int i = 0; i < 6; ++i)
          for (int j = 0; j < 4; ++j) a(i, j) += jw * nb.value[i].dot(pb.grad[j]);
      }
      for (int i = 0; i < 6; ++i)
        for (int j = 0; j < 4; ++j)
          if (a(i, j) != 0.0) trips.push_back({nd[i], pd[j], a(i, j)});
    }
    kgc_ = restrict_to_free(finalize_assembly(ned_.num_dofs(), p1_.num_dofs(), std::move(trips)), ned_, p1_);
  }
  factor(factors_->mc, mc_, "Nedelec");
  if (mg_.rows() > 0) factor(factors_->mg, mg_, "Lagrange");
}

DiscreteOps::~DiscreteOps() = default;
DiscreteOps::DiscreteOps(DiscreteOps&&) noexcept = default;
DiscreteOps& DiscreteOps::operator=(DiscreteOps&&) noexcept = default;

Vector DiscreteOps::solve_mass_curl(const Vector& rhs_free) const {
  if (rhs_free.size() == 0) return Vector();
  return factors_->mc.solve(rhs_free);
}

Vector DiscreteOps::solve_mass_grad(const Vector& rhs_free) const {
  if (rhs_free.size() == 0) return Vector();
  return factors_->mg.solve(rhs_free);
}

Vector DiscreteOps::weak_curl(const Vector& b) const {
  const Vector rhs = kcd_.transpose_multiply(restrict_free(rt_, b));
  return expand_free(ned_, solve_mass_curl(rhs));
}

Vector DiscreteOps::weak_div(const Vector& w) const {
  const Vector rhs = -kgc_.transpose_multiply(restrict_free(ned_, w));
  return expand_free(p1_, solve_mass_grad(rhs));
}

Vector DiscreteOps::l2_project_curl(const Field& field) const {
  const Vector load = restrict_free(ned_, assemble_load(ned_, field));
  return expand_free(ned_, solve_mass_curl(load));
}

double DiscreteOps::curl_h_norm(const Vector& b) const {
  const Vector rhs = kcd_.transpose_multiply(restrict_free(rt_, b));
  const Vector x = solve_mass_curl(rhs);
  return std::sqrt(std::max(0.0, x.dot(rhs)));
}

double DiscreteOps::norm_d(const Vector& b) const {
  const Vector bf = restrict_free(rt_, b);
  const double l2 = bf.dot(md_ * bf);
  const Vector d = cell_divergence(*mesh_, b);
  double div2 = 0.0;
  for (Index t = 0; t < mesh_->num_tets(); ++t) div2 += mesh_->volume(t) * d[t] * d[t];
  const double c = curl_h_norm(b);
  return std::sqrt(std::max(0.0, l2) + div2 + c * c);
}

double DiscreteOps::norm_c(const Vector& j) const {
  const Vector jf = restrict_free(ned_, j);
  return std::sqrt(std::max(0.0, jf.dot(mc_ * jf)));
}

double h1_norm(const FeSpace& space, const Vector& u) {
  const double a = l2_norm(space, u), b = h1_seminorm(space, u);
  return std::sqrt(a * a + b * b);
}

double norm_A(const DiscreteOps& ops, const FeSpace& velocity, const Vector& u, const Vector& b,
              const FeSpace& pressure, const Vector& p, const Vector& r) {
  const double nu = h1_norm(velocity, u), nb = ops.norm_d(b), np = l2_norm(pressure, p),
               nr = l2_norm(ops.dg0(), r);
  return std::sqrt(nu * nu + nb * nb + np * np + nr * nr);
}

double estimate_poincare_constant(const DiscreteOps& ops) {
  const Index nf = ops.rt().num_free();
  if (nf > kMaxDensePoincareDofs) {
    throw CapabilityError("estimate_poincare_constant: " + std::to_string(nf) +
                          " free RT DOFs exceed the dense limit of " + std::to_string(kMaxDensePoincareDofs) +
                          "; use a coarser mesh");
  }
  // Divergence matrix on free faces.
  std::vector<Index> rows(ops.mesh().num_tets());
  for (Index t = 0; t < ops.mesh().num_tets(); ++t) rows[t] = t;
  const SparseMatrix d = restrict_matrix(div_incidence(ops.mesh()), rows, ops.mesh().num_tets(), ops.rt().free_index(), nf);
  const Eigen::MatrixXd dd = Eigen::MatrixXd(d.to_eigen());
  Eigen::BDCSVD<Eigen::MatrixXd> svd(dd, Eigen::ComputeFullV);
  const auto& sv = svd.singularValues();
  const double tol = 1e-10 * (sv.size() ? sv[0] : 1.0);
  Index rank = 0;
  for (Index k = 0; k < sv.size(); ++k)
    if (sv[k] > tol) ++rank;
  const Eigen::MatrixXd z = svd.matrixV().rightCols(nf - rank);
  if (z.cols() == 0) throw CapabilityError("estimate_poincare_constant: no divergence-free functions on this mesh");

  const Eigen::MatrixXd md = Eigen::MatrixXd(ops.mass_div().to_eigen());
  const Eigen::MatrixXd a = z.transpose() * md * z;
  // ||curl_h B||^2 = B^T K M_c^-1 K^T B.
  const Eigen::SparseMatrix<double> k = ops.curl_pairing().to_eigen();
  const Eigen::MatrixXd ktz = Eigen::MatrixXd(k.transpose()) * z;
  Eigen::MatrixXd minv_ktz(ktz.rows(), ktz.cols());
  for (Index c = 0; c < ktz.cols(); ++c) minv_ktz.col(c) = ops.solve_mass_curl(ktz.col(c));
  Eigen::MatrixXd b = ktz.transpose() * minv_ktz;
  b = 0.5 * (b + b.transpose()).eval();
  Eigen::GeneralizedSelfAdjointEigenSolver<Eigen::MatrixXd> eig(a, b, Eigen::EigenvaluesOnly);
  if (eig.info() != Eigen::Success) throw SingularSystemError("estimate_poincare_constant: eigensolve failed", -1);
  return std::sqrt(eig.eigenvalues().maxCoeff());
}

VectorFunction ProbeFactory::sine_modes(const Box& box) {
  // Three components, each a random combination of sin(k pi x) products with k in {1, 2}.
  struct Mode {
    std::array<int, 3> k;
    Vec3 amp;
  };
  std::vector<Mode> modes;
  for (int a = 1; a <= 2; ++a)
    for (int b = 1; b <= 2; ++b)
      for (int c = 1; c <= 2; ++c) {
        Vec3 amp;
        for (int i = 0; i < 3; ++i) amp[i] = 2.0 * uniform01(rng_) - 1.0;
        modes.push_back({{a, b, c}, amp});
      }
  const Vec3 lo = box.lo, ext = box.extent();
  return [modes, lo, ext](const Vec3& x) {
    const Vec3 s = (x - lo).cwiseQuotient(ext);
    Vec3 v = Vec3::Zero();
    for (const auto& m : modes) {
      const double w = std::sin(m.k[0] * std::numbers::pi * s.x()) * std::sin(m.k[1] * std::numbers::pi * s.y()) *
                       std::sin(m.k[2] * std::numbers::pi * s.z());
      v += w * m.amp;
    }
    return v;
  };
}

Vector ProbeFactory::velocity(const FeSpace& velocity_space) {
  Vector u = interpolate(velocity_space, analytic_vector(sine_modes(bounding_box(velocity_space.mesh()))));
  for (Index i = 0; i < u.size(); ++i)
    if (velocity_space.constrained()[i]) u[i] = 0.0;
  return u;
}

Vector ProbeFactory::solenoidal(const DiscreteOps& ops) {
  // Shifted potential so that the tangential trace does not vanish identically.
  const VectorFunction base = sine_modes(bounding_box(ops.mesh()));
  const Vec3 shift(uniform01(rng_), uniform01(rng_), uniform01(rng_));
  const Box box = bounding_box(ops.mesh());
  auto potential = [base, shift, box](const Vec3& x) { return base(x + 0.25 * shift.cwiseProduct(box.extent())); };
  Vector a = interpolate(ops.ned(), analytic_vector(potential));
  for (Index i = 0; i < a.size(); ++i)
    if (ops.ned().constrained()[i]) a[i] = 0.0;
  return curl_incidence(ops.mesh()) * a;
}

namespace {

double cross_norm(const FeSpace& velocity, const Vector& u, const FeSpace& rt, const Vector& b) {
  const Mesh& m = velocity.mesh();
  const auto& rule = rich_tet_rule();
  std::vector<Index> dofs;
  LocalBasis ub, bb;
  double sum = 0.0;
  for (Index t = 0; t < m.num_tets(); ++t) {
    const TetGeometry g = tet_geometry(m, t);
    for (std::size_t q = 0; q < rule.size(); ++q) {
      velocity.eval_basis(g, t, rule.points[q], ub);
      rt.eval_basis(g, t, rule.points[q], bb);
      const Vec3 uq = evaluate(velocity, u, t, ub, dofs);
      const Vec3 bq = evaluate(rt, b, t, bb, dofs);
      sum += 6.0 * g.volume * rule.weights[q] * uq.cross(bq).squaredNorm();
    }
  }
  return std::sqrt(sum);
}

}  // namespace

CrossBound estimate_cross_bound(const DiscreteOps& ops, const FeSpace& velocity, int trials, std::uint64_t seed) {
  if (trials < 1) throw InvalidArgument("estimate_cross_bound: trials must be >= 1");
  ProbeFactory probes(seed);
  CrossBound out;
  int attempts = 0;
  while (out.trials < trials) {
    if (++attempts > 10 * trials) throw CapabilityError("estimate_cross_bound: probes keep degenerating");
    const Vector u = probes.velocity(velocity);
    const Vector b = probes.solenoidal(ops);
    const double cb = ops.curl_h_norm(b);
    const double gu = h1_seminorm(velocity, u);
    if (!(cb > 0.0) || !(gu > 0.0)) continue;  // resample
    const double cross = cross_norm(velocity, u, ops.rt(), b);
    const double hu = h1_norm(velocity, u);
    out.c2 = std::max(out.c2, cross / (gu * cb));
    out.c2_full_h1 = std::max(out.c2_full_h1, cross / (hu * cb));
    ++out.trials;
  }
  return out;
}

double sobolev_l6_constant() {
  // Sharp constant for R^3: (1 / sqrt(3)) (2 / pi)^(2/3).
  return std::pow(2.0 / std::numbers::pi, 2.0 / 3.0) / std::sqrt(3.0);
}

double sample_l6_ratio(const FeSpace& velocity, int trials, std::uint64_t seed) {
  ProbeFactory probes(seed);
  const Mesh& m = velocity.mesh();
  const auto& rule = rich_tet_rule();
  double best = 0.0;
  std::vector<Index> dofs;
  LocalBasis basis;
  for (int k = 0; k < trials; ++k) {
    const Vector u = probes.velocity(velocity);
    double s6 = 0.0;
    for (Index t = 0; t < m.num_tets(); ++t) {
      const TetGeometry g = tet_geometry(m, t);
      for (std::size_t q = 0; q < rule.size(); ++q) {
        velocity.eval_basis(g, t, rule.points[q], basis);
        s6 += 6.0 * g.volume * rule.weights[q] * std::pow(evaluate(velocity, u, t, basis, dofs).squaredNorm(), 3);
      }
    }
    const double gu = h1_seminorm(velocity, u);
    if (gu > 0.0) best = std::max(best, std::pow(s6, 1.0 / 6.0) / gu);
  }
  return best;
}

double box_poincare_constant(const Box& box) {
  const Vec3 e = box.extent();
  const double s = 1.0 / (e.x() * e.x()) + 1.0 / (e.y() * e.y()) + 1.0 / (e.z() * e.z());
  return 1.0 / (std::numbers::pi * std::sqrt(s));
}

}  // namespace smhd
