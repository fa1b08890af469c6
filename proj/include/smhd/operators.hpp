#pragma once

#include "smhd/assembly.hpp"
#include "smhd/derham.hpp"
#include "smhd/linalg.hpp"

#include <cstdint>
#include <memory>
#include <random>

namespace smhd {

/// Mass matrices and curl/gradient pairings of the boundary-constrained
/// spaces, restricted to free DOFs. Vectors passed in and out of the
/// operators are full-length (zeros on boundary DOFs).
class DiscreteOps {
 public:
  explicit DiscreteOps(std::shared_ptr<const Mesh> mesh);
  ~DiscreteOps();
  DiscreteOps(DiscreteOps&&) noexcept;
  DiscreteOps& operator=(DiscreteOps&&) noexcept;

  const Mesh& mesh() const { return *mesh_; }
  const FeSpace& ned() const { return ned_; }
  const FeSpace& rt() const { return rt_; }
  const FeSpace& p1() const { return p1_; }
  const FeSpace& dg0() const { return dg0_; }

  const SparseMatrix& mass_curl() const { return mc_; }
  const SparseMatrix& mass_div() const { return md_; }
  const SparseMatrix& mass_grad() const { return mg_; }
  /// Rows RT, columns Nedelec: (curl F, C).
  const SparseMatrix& curl_pairing() const { return kcd_; }
  /// Rows Nedelec, columns P1: (grad v, w).
  const SparseMatrix& grad_pairing() const { return kgc_; }

  /// Solve M_c x = rhs on free Nedelec DOFs.
  Vector solve_mass_curl(const Vector& rhs_free) const;
  Vector solve_mass_grad(const Vector& rhs_free) const;

  /// x with (x, F) = (B, curl F) for all discrete F.
  Vector weak_curl(const Vector& b) const;
  /// y with (y, v) = -(w, grad v) for all discrete v.
  Vector weak_div(const Vector& w) const;
  /// L2 projection onto the constrained Nedelec space.
  Vector l2_project_curl(const Field& field) const;

  /// ||B||_d^2 = ||B||^2 + ||div B||^2 + ||curl_h B||^2.
  double norm_d(const Vector& b) const;
  double norm_c(const Vector& j) const;
  double curl_h_norm(const Vector& b) const;

 private:
  struct Factors;
  std::shared_ptr<const Mesh> mesh_;
  FeSpace ned_, rt_, p1_, dg0_;
  SparseMatrix mc_, md_, mg_, kcd_, kgc_;
  std::unique_ptr<Factors> factors_;
};

/// ||u||_1 with ||u||_1^2 = ||u||^2 + ||grad u||^2.
double h1_norm(const FeSpace& space, const Vector& u);

/// ||(u, B, p, r)||_A^2 = ||u||_1^2 + ||B||_d^2 + ||p||^2 + ||r||^2.
double norm_A(const DiscreteOps& ops, const FeSpace& velocity, const Vector& u, const Vector& b,
              const FeSpace& pressure, const Vector& p, const Vector& r);

/// Largest ||B|| / ||curl_h B|| over the divergence-free constrained RT
/// functions, from a dense generalized eigenproblem.
inline constexpr Index kMaxDensePoincareDofs = 2000;
double estimate_poincare_constant(const DiscreteOps& ops);

/// Smooth seeded probes: velocity from random low sine modes, divergence-free
/// magnetic fields as discrete curls of interpolated sine-mode potentials.
class ProbeFactory {
 public:
  explicit ProbeFactory(std::uint64_t seed) : rng_(seed) {}
  Vector velocity(const FeSpace& velocity_space);
  Vector solenoidal(const DiscreteOps& ops);

 private:
  VectorFunction sine_modes(const Box& box);
  std::mt19937_64 rng_;
};

struct CrossBound {
  double c2 = 0.0;         // max ||u x B|| / (||grad u|| ||curl_h B||)
  double c2_full_h1 = 0.0; // same with ||u||_1 in place of ||grad u||
  int trials = 0;
};
CrossBound estimate_cross_bound(const DiscreteOps& ops, const FeSpace& velocity, int trials, std::uint64_t seed);

/// Sharp Sobolev constant of ||u||_{L6} <= C ||grad u|| for H1_0 functions.
double sobolev_l6_constant();
/// Largest sampled ||u_h||_{L6} / ||grad u_h|| over seeded probes.
double sample_l6_ratio(const FeSpace& velocity, int trials, std::uint64_t seed);
/// Poincare constant of H1_0 on the box: 1 / (pi sqrt(sum 1/L_i^2)).
double box_poincare_constant(const Box& box);

}  // namespace smhd
