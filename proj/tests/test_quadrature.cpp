#include "doctest.h"
#include "smhd/quadrature.hpp"

#include <cmath>

using namespace smhd;

namespace {

double factorial(int n) { return std::tgamma(n + 1.0); }

// Integral of l1^a l2^b l3^c over the reference tet (dual of the measure 1/6).
double tet_monomial(int a, int b, int c) {
  return factorial(a) * factorial(b) * factorial(c) / factorial(a + b + c + 3);
}

double tri_monomial(int a, int b) { return factorial(a) * factorial(b) / factorial(a + b + 2); }

}  // namespace

TEST_CASE("tet rules integrate monomials exactly up to their degree") {
  for (int degree : {1, 2, 4, 6, 8}) {
    const QuadratureRule rule = tet_rule(degree);
    CHECK(rule.degree >= degree);
    double wsum = 0.0;
    for (double w : rule.weights) {
      CHECK(w > 0.0);
      wsum += w;
    }
    CHECK(wsum == doctest::Approx(1.0 / 6.0).epsilon(1e-14));
    for (int a = 0; a <= rule.degree; ++a)
      for (int b = 0; a + b <= rule.degree; ++b)
        for (int c = 0; a + b + c <= rule.degree; ++c) {
          double s = 0.0;
          for (std::size_t q = 0; q < rule.size(); ++q) {
            const auto& p = rule.points[q];
            s += rule.weights[q] * std::pow(p[1], a) * std::pow(p[2], b) * std::pow(p[3], c);
          }
          CHECK(std::abs(s - tet_monomial(a, b, c)) <= 1e-15);
        }
  }
}

TEST_CASE("triangle and edge rules") {
  const QuadratureRule tri = triangle_rule(8);
  double wsum = 0.0;
  for (double w : tri.weights) wsum += w;
  CHECK(wsum == doctest::Approx(0.5).epsilon(1e-14));
  for (int a = 0; a <= 8; ++a)
    for (int b = 0; a + b <= 8; ++b) {
      double s = 0.0;
      for (std::size_t q = 0; q < tri.size(); ++q)
        s += tri.weights[q] * std::pow(tri.points[q][1], a) * std::pow(tri.points[q][2], b);
      CHECK(std::abs(s - tri_monomial(a, b)) <= 1e-15);
    }

  const QuadratureRule edge = edge_rule(9);
  for (int a = 0; a <= 9; ++a) {
    double s = 0.0;
    for (std::size_t q = 0; q < edge.size(); ++q) s += edge.weights[q] * std::pow(edge.points[q][1], a);
    CHECK(s == doctest::Approx(1.0 / (a + 1)).epsilon(1e-14));
  }
}

TEST_CASE("base and rich rules") {
  CHECK(base_tet_rule().degree >= 4);
  CHECK(rich_tet_rule().degree >= 6);
  for (const auto& p : rich_tet_rule().points) {
    for (double l : p) CHECK(l > 0.0);
    CHECK(p[0] + p[1] + p[2] + p[3] == doctest::Approx(1.0));
  }
}
