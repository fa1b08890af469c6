#pragma once

#include "smhd/derham.hpp"
#include "smhd/linalg.hpp"
#include "smhd/quadrature.hpp"

#include <variant>

namespace smhd {

/// FE function used as a coefficient of a nonlinear or coupling term.
struct FeFunction {
  const FeSpace* space = nullptr;
  Vector coeffs;
};

/// Values of every local shape function of a space at one quadrature point,
/// with vector Lagrange spaces expanded component by component.
struct ShapeTable {
  static constexpr int kMax = 30;
  int size = 0;
  std::array<double, kMax> scalar{};
  std::array<Vec3, kMax> value{};
  std::array<Mat3, kMax> jac{};
  std::array<double, kMax> div{};
  std::array<Vec3, kMax> curl{};

  void fill(const FeSpace& space, const TetGeometry& geom, Index t, const Bary& b);
};

/// (grad u, grad v), componentwise for vector Lagrange spaces.
struct VectorLaplacian {};
/// (u, v) for any two spaces with the same value dimension.
struct Mass {};
/// (div u, q): trial is RT0 or vector P2, test is scalar.
struct MixedDiv {};
/// (u, curl F) for a Nedelec test space, or (curl E, v) for a Nedelec trial space.
struct CurlPairing {};
/// L(w; u, v) = 1/2 [((w.grad) u, v) - ((w.grad) v, u)], assembled as 1/2 (N - N^T).
struct Convection {
  FeFunction w;
};
/// (u x G, v) when `both` is false, (u x G, v x G) when true.
struct CrossCoupling {
  FeFunction g;
  bool both = false;
};

using FormKind = std::variant<VectorLaplacian, Mass, MixedDiv, CurlPairing, Convection, CrossCoupling>;

/// Matrix with rows indexed by test DOFs and columns by trial DOFs (all DOFs,
/// boundary ones included).
SparseMatrix assemble(const FormKind& form, const FeSpace& trial, const FeSpace& test);

/// (f, v) for every test function, by the rich rule.
Vector assemble_load(const FeSpace& test, const Field& f);

/// Block field for a space: size, boundary mask and zero-mean weights.
BlockField block_field(const std::string& name, const FeSpace& space);

}  // namespace smhd
