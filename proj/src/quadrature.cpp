#include "smhd/quadrature.hpp"

#include <Eigen/Eigenvalues>

#include <cmath>

namespace smhd {

double QuadratureRule::reference_measure() const {
  switch (dimension) {
    case 3: return 1.0 / 6.0;
    case 2: return 0.5;
    default: return 1.0;
  }
}

void gauss_jacobi(int n, double alpha, std::vector<double>& nodes, std::vector<double>& weights) {
  if (n < 1) throw InvalidArgument("gauss_jacobi: need at least one node");
  // Golub-Welsch on the monic recurrence for (1-x)^alpha (1+x)^0.
  const double beta = 0.0;
  Eigen::MatrixXd jacobi = Eigen::MatrixXd::Zero(n, n);
  for (int k = 0; k < n; ++k) {
    const double s = 2.0 * k + alpha + beta;
    jacobi(k, k) = (k == 0) ? (beta - alpha) / (alpha + beta + 2.0)
                            : (beta * beta - alpha * alpha) / (s * (s + 2.0));
    if (k + 1 < n) {
      const double m = k + 1.0;
      const double t = 2.0 * m + alpha + beta;
      const double b = 4.0 * m * (m + alpha) * (m + beta) * (m + alpha + beta) /
                       (t * t * (t + 1.0) * (t - 1.0));
      jacobi(k, k + 1) = jacobi(k + 1, k) = std::sqrt(b);
    }
  }
  const double mu0 = std::pow(2.0, alpha + beta + 1.0) * std::tgamma(alpha + 1.0) *
                     std::tgamma(beta + 1.0) / std::tgamma(alpha + beta + 2.0);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(jacobi);
  nodes.resize(n);
  weights.resize(n);
  for (int k = 0; k < n; ++k) {
    nodes[k] = eig.eigenvalues()(k);
    const double v0 = eig.eigenvectors()(0, k);
    weights[k] = mu0 * v0 * v0;
  }
}

namespace {

int points_for_degree(int degree) { return std::max(1, (degree + 2) / 2); }

// Nodes/weights on [0, 1] for the weight (1 - s)^alpha.
void unit_interval(int n, double alpha, std::vector<double>& s, std::vector<double>& w) {
  std::vector<double> x, wx;
  gauss_jacobi(n, alpha, x, wx);
  s.resize(n);
  w.resize(n);
  const double scale = std::pow(0.5, alpha + 1.0);
  for (int k = 0; k < n; ++k) {
    s[k] = 0.5 * (x[k] + 1.0);
    w[k] = wx[k] * scale;
  }
}

}  // namespace

QuadratureRule tet_rule(int degree) {
  const int n = points_for_degree(degree);
  std::vector<double> s1, w1, s2, w2, s3, w3;
  unit_interval(n, 2.0, s1, w1);
  unit_interval(n, 1.0, s2, w2);
  unit_interval(n, 0.0, s3, w3);
  QuadratureRule rule;
  rule.dimension = 3;
  rule.degree = 2 * n - 1;
  for (int a = 0; a < n; ++a) {
    for (int b = 0; b < n; ++b) {
      for (int c = 0; c < n; ++c) {
        const double x1 = s1[a];
        const double x2 = (1.0 - s1[a]) * s2[b];
        const double x3 = (1.0 - s1[a]) * (1.0 - s2[b]) * s3[c];
        rule.points.push_back({1.0 - x1 - x2 - x3, x1, x2, x3});
        rule.weights.push_back(w1[a] * w2[b] * w3[c]);
      }
    }
  }
  return rule;
}

QuadratureRule triangle_rule(int degree) {
  const int n = points_for_degree(degree);
  std::vector<double> s1, w1, s2, w2;
  unit_interval(n, 1.0, s1, w1);
  unit_interval(n, 0.0, s2, w2);
  QuadratureRule rule;
  rule.dimension = 2;
  rule.degree = 2 * n - 1;
  for (int a = 0; a < n; ++a) {
    for (int b = 0; b < n; ++b) {
      const double x1 = s1[a];
      const double x2 = (1.0 - s1[a]) * s2[b];
      rule.points.push_back({1.0 - x1 - x2, x1, x2, 0.0});
      rule.weights.push_back(w1[a] * w2[b]);
    }
  }
  return rule;
}

QuadratureRule edge_rule(int degree) {
  const int n = points_for_degree(degree);
  std::vector<double> s, w;
  unit_interval(n, 0.0, s, w);
  QuadratureRule rule;
  rule.dimension = 1;
  rule.degree = 2 * n - 1;
  for (int a = 0; a < n; ++a) {
    rule.points.push_back({1.0 - s[a], s[a], 0.0, 0.0});
    rule.weights.push_back(w[a]);
  }
  return rule;
}

const QuadratureRule& base_tet_rule() {
  static const QuadratureRule rule = tet_rule(4);
  return rule;
}

const QuadratureRule& rich_tet_rule() {
  static const QuadratureRule rule = tet_rule(6);
  return rule;
}

}  // namespace smhd
