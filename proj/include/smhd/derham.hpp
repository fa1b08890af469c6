#pragma once

#include "smhd/common.hpp"
#include "smhd/linalg.hpp"
#include "smhd/mesh.hpp"

#include <functional>
#include <memory>
#include <string>
#include <vector>

namespace smhd {

enum class SpaceKind { LagrangeP1, LagrangeP2, NedelecEdge0, RaviartThomas0, DG0, DG1 };

std::string to_string(SpaceKind kind);

/// Vertex coordinates, barycentric gradients and volume of one tet.
struct TetGeometry {
  std::array<Vec3, 4> x;
  std::array<Vec3, 4> grad;
  double volume = 0.0;

  Vec3 point(const Bary& b) const { return b[0] * x[0] + b[1] * x[1] + b[2] * x[2] + b[3] * x[3]; }
};

TetGeometry tet_geometry(const Mesh& mesh, Index t);

/// Values of the local shape functions at one point of a tet. Orientation
/// signs of edge and face DOFs are already folded in. Lagrange spaces with
/// several components report the scalar basis only; local DOF c*size + s is
/// component c of scalar function s.
struct LocalBasis {
  static constexpr int kMax = 10;
  int size = 0;
  std::array<double, kMax> phi{};   // scalar spaces
  std::array<Vec3, kMax> grad{};    // scalar spaces
  std::array<Vec3, kMax> value{};   // Nedelec / RT
  std::array<Vec3, kMax> curl{};    // Nedelec
  std::array<double, kMax> div{};   // RT
};

class FeSpace {
 public:
  FeSpace(std::shared_ptr<const Mesh> mesh, SpaceKind kind, bool essential_bc, int components = 1,
          bool zero_mean = false);

  const Mesh& mesh() const { return *mesh_; }
  const std::shared_ptr<const Mesh>& mesh_ptr() const { return mesh_; }
  SpaceKind kind() const { return kind_; }
  bool essential_bc() const { return essential_bc_; }
  bool zero_mean() const { return zero_mean_; }
  int components() const { return components_; }
  /// 3 for Nedelec/RT and vector Lagrange, 1 otherwise.
  int value_dim() const;
  bool is_scalar_kind() const;

  Index scalar_dofs() const { return scalar_dofs_; }
  Index num_dofs() const { return scalar_dofs_ * components_; }
  /// Scalar shape functions per tet.
  int local_scalar_dofs() const { return local_scalar_; }
  int local_dofs() const { return local_scalar_ * components_; }

  /// Local-to-global map (component-major for vector Lagrange spaces).
  void cell_dofs(Index t, std::vector<Index>& out) const;

  /// Nonzero on DOFs located on the boundary (eliminated when essential_bc).
  const std::vector<char>& boundary_mask() const { return boundary_; }
  /// DOFs removed from the solve: the boundary mask when essential_bc, else none.
  const std::vector<char>& constrained() const { return constrained_; }
  Index num_free() const { return static_cast<Index>(free_dofs_.size()); }
  const std::vector<Index>& free_dofs() const { return free_dofs_; }
  /// Reduced index of each DOF, -1 when constrained.
  const std::vector<Index>& free_index() const { return free_index_; }

  /// Integral of every basis function; empty unless zero_mean.
  Vector mean_weights() const;

  void eval_basis(const TetGeometry& geom, Index t, const Bary& b, LocalBasis& out) const;

 private:
  std::shared_ptr<const Mesh> mesh_;
  SpaceKind kind_;
  bool essential_bc_;
  int components_;
  bool zero_mean_;
  Index scalar_dofs_ = 0;
  int local_scalar_ = 0;
  std::vector<char> boundary_;
  std::vector<char> constrained_;
  std::vector<Index> free_dofs_;
  std::vector<Index> free_index_;
};

/// Reduced vector -> full DOF vector (zeros on constrained DOFs), and back.
Vector expand_free(const FeSpace& space, const Vector& reduced);
Vector restrict_free(const FeSpace& space, const Vector& full);

using ScalarFunction = std::function<double(const Vec3&)>;
using VectorFunction = std::function<Vec3(const Vec3&)>;

/// A scalar- or vector-valued field that may be evaluated tet by tet; that
/// is how discontinuous FE functions are sampled unambiguously.
struct Field {
  int components = 1;
  std::function<Vec3(Index t, const Bary& b, const Vec3& x)> eval;
};

Field analytic_scalar(ScalarFunction f);
Field analytic_vector(VectorFunction f);
/// FE function with full-length coefficients.
Field fe_field(const FeSpace& space, const Vector& coeffs);

/// FE function value at a point of tet t: scalar spaces return (value, 0, 0)
/// unless vector-valued.
Vec3 evaluate(const FeSpace& space, const Vector& coeffs, Index t, const LocalBasis& basis,
              std::vector<Index>& dofs);
/// Gradient (row c = gradient of component c) of a Lagrange/DG function.
Mat3 evaluate_gradient(const FeSpace& space, const Vector& coeffs, Index t, const LocalBasis& basis,
                       std::vector<Index>& dofs);

/// Canonical DOF evaluation: nodal values, edge tangential moments, face
/// fluxes, cell averages, and local L2 projection for DG1. Returns all DOFs.
Vector interpolate(const FeSpace& space, const Field& field);

/// L2 norm of an FE function by quadrature.
double l2_norm(const FeSpace& space, const Vector& coeffs);
/// ||grad u|| of a Lagrange or DG function (broken gradient for DG).
double h1_seminorm(const FeSpace& space, const Vector& coeffs);

/// Signed incidence matrices of the complex: vertices -> edges -> faces -> tets.
SparseMatrix grad_incidence(const Mesh& mesh);
SparseMatrix curl_incidence(const Mesh& mesh);
SparseMatrix div_incidence(const Mesh& mesh);

/// Elementwise divergence of an RT0 function (one value per tet).
Vector cell_divergence(const Mesh& mesh, const Vector& rt_coeffs);

struct CommutingDefects {
  double curl_defect = 0.0;  // || curl(Pi_curl F) - Pi_div(curl F) ||
  double div_defect = 0.0;   // || div(Pi_div C) - Pi_0(div C) ||
  double curl_scale = 0.0;   // || Pi_div(curl F) ||
  double div_scale = 0.0;    // || Pi_0(div C) ||
};

CommutingDefects check_commuting(const Mesh& mesh, const VectorFunction& f, const VectorFunction& curl_f,
                                 const VectorFunction& c, const ScalarFunction& div_c);

/// dim of free curl/div spaces and the alternating sum
/// dim H0(grad) - dim H0(curl) + dim H0(div) - dim L2_0.
struct ExactnessCount {
  Index grad = 0, curl = 0, div = 0, l2 = 0;
  Index alternating_sum() const { return grad - curl + div - l2; }
};
ExactnessCount exactness_count(const std::shared_ptr<const Mesh>& mesh);

}  // namespace smhd
