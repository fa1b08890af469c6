#pragma once

#include "smhd/common.hpp"

#include <vector>

namespace smhd {

/// Quadrature on a reference simplex. Points are barycentric coordinates
/// (padded with zeros below dimension 3); weights are positive and sum to the
/// reference measure (1/6 for the tet, 1/2 for the triangle, 1 for the edge).
struct QuadratureRule {
  int dimension = 3;
  int degree = 0;
  std::vector<Bary> points;
  std::vector<double> weights;

  std::size_t size() const { return points.size(); }
  double reference_measure() const;
};

/// Gauss nodes and weights on [-1, 1] for the weight (1 - x)^alpha.
void gauss_jacobi(int n, double alpha, std::vector<double>& nodes, std::vector<double>& weights);

/// Collapsed (conical product) rules exact for polynomials of total degree <= degree.
QuadratureRule tet_rule(int degree);
QuadratureRule triangle_rule(int degree);
QuadratureRule edge_rule(int degree);

/// Rule used for mass, stiffness and pairing forms of the lowest-order spaces.
const QuadratureRule& base_tet_rule();
/// Rule used whenever three P2-level factors or an analytic field meet.
const QuadratureRule& rich_tet_rule();

}  // namespace smhd
