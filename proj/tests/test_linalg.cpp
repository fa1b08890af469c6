#include "doctest.h"
#include "smhd/linalg.hpp"

#include <algorithm>
#include <cstring>
#include <random>
#include <sstream>

using namespace smhd;

namespace {

SparseMatrix random_sparse(Index n, double density, std::mt19937_64& rng, double diag) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::vector<Triplet> trips;
  for (Index i = 0; i < n; ++i) {
    trips.push_back({i, i, diag});
    for (Index j = 0; j < n; ++j)
      if (u(rng) < 2.0 * density - 1.0) trips.push_back({i, j, u(rng)});
  }
  return finalize_assembly(n, n, trips);
}

}  // namespace

TEST_CASE("duplicates are summed") {
  const SparseMatrix a = finalize_assembly(2, 2, {{0, 0, 1.0}, {0, 0, 2.0}});
  CHECK(a.nnz() == 1);
  CHECK(a.coeff(0, 0) == 3.0);
  CHECK(a.coeff(1, 1) == 0.0);

  const SparseMatrix empty = finalize_assembly(3, 4, {});
  CHECK(empty.rows() == 3);
  CHECK(empty.cols() == 4);
  CHECK(empty.nnz() == 0);
  CHECK((empty * Vector::Ones(4)).norm() == 0.0);
}

TEST_CASE("out of bounds triplets are rejected") {
  CHECK_THROWS_AS(finalize_assembly(2, 2, {{2, 0, 1.0}}), InvalidArgument);
  CHECK_THROWS_AS(finalize_assembly(2, 2, {{0, -1, 1.0}}), InvalidArgument);
}

TEST_CASE("assembly is independent of triplet order") {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::uniform_int_distribution<Index> idx(0, 9);
  std::vector<Triplet> trips;
  for (int k = 0; k < 500; ++k) trips.push_back({idx(rng), idx(rng), u(rng) * std::pow(10.0, 8 * u(rng))});
  const SparseMatrix a = finalize_assembly(10, 10, trips);
  for (int trial = 0; trial < 5; ++trial) {
    std::shuffle(trips.begin(), trips.end(), rng);
    const SparseMatrix b = finalize_assembly(10, 10, trips);
    REQUIRE(a.nnz() == b.nnz());
    CHECK(std::memcmp(a.values().data(), b.values().data(), sizeof(double) * a.nnz()) == 0);
    CHECK(a == b);
  }
  for (Index i = 0; i < a.rows(); ++i)
    for (Index k = a.row_offsets()[i] + 1; k < a.row_offsets()[i + 1]; ++k)
      CHECK(a.col_indices()[k - 1] < a.col_indices()[k]);
}

TEST_CASE("matrix operations agree with Eigen") {
  std::mt19937_64 rng(11);
  const SparseMatrix a = random_sparse(20, 0.2, rng, 3.0);
  const SparseMatrix b = random_sparse(20, 0.1, rng, 1.0);
  const Vector x = Vector::LinSpaced(20, -1.0, 2.0);
  const Eigen::SparseMatrix<double> ea = a.to_eigen(), eb = b.to_eigen();
  CHECK(((a * x) - ea * x).norm() <= 1e-14);
  CHECK((a.transpose_multiply(x) - ea.transpose() * x).norm() <= 1e-14);
  CHECK((a.transpose() * x - a.transpose_multiply(x)).norm() <= 1e-14);
  CHECK((multiply(a, b) * x - ea * (eb * x)).norm() <= 1e-12);
  CHECK((add(a, b, 2.0, -0.5) * x - (2.0 * (ea * x) - 0.5 * (eb * x))).norm() <= 1e-13);
  CHECK(SparseMatrix::from_eigen(ea) == a);
}

TEST_CASE("direct solves") {
  SUBCASE("identity") {
    const SparseMatrix id = finalize_assembly(3, 3, {{0, 0, 1}, {1, 1, 1}, {2, 2, 1}});
    const Vector b(Eigen::Vector3d(1.5, -2, 7));
    CHECK((solve_direct(id, b) - b).norm() == 0.0);
  }
  SUBCASE("2x2 saddle point") {
    const SparseMatrix a = finalize_assembly(2, 2, {{0, 0, 2}, {0, 1, 1}, {1, 0, 1}});
    const Vector x = solve_direct(a, Eigen::Vector2d(3, 1));
    CHECK(x[0] == doctest::Approx(1.0).epsilon(1e-14));
    CHECK(x[1] == doctest::Approx(1.0).epsilon(1e-14));
  }
  SUBCASE("solve inverts matvec on random vectors") {
    std::mt19937_64 rng(3);
    const SparseMatrix a = random_sparse(200, 0.02, rng, 4.0);
    const DirectSolver lu(a);
    std::normal_distribution<double> n(0.0, 1.0);
    for (int k = 0; k < 5; ++k) {
      Vector x(200);
      for (auto& v : x) v = n(rng);
      const Vector y = lu.solve(a * x);
      CHECK((y - x).norm() <= 1e-9 * x.norm());
    }
    // Bitwise determinism of repeated factorizations.
    const Vector b = Vector::Ones(200);
    const Vector x1 = DirectSolver(a).solve(b), x2 = DirectSolver(a).solve(b);
    CHECK(std::memcmp(x1.data(), x2.data(), sizeof(double) * 200) == 0);
  }
  SUBCASE("singular matrix reports a pivot") {
    const SparseMatrix a = finalize_assembly(3, 3, {{0, 0, 1}, {1, 0, 1}, {2, 2, 1}});
    try {
      DirectSolver lu(a);
      (void)lu.solve(Vector::Ones(3));
      FAIL("expected a singular-system error");
    } catch (const SingularSystemError& e) {
      CHECK(e.pivot() >= 0);
      CHECK(e.pivot() < 3);
    }
  }
}

TEST_CASE("block systems and essential elimination") {
  // [[2 1], [1 0]] split into two one-dof fields plus a constrained third.
  BlockSystem sys;
  sys.add_field({"a", 2, {0, 1}, {}, {}});
  sys.add_field({"b", 1, {}, {}, {}});
  sys.add_block("a", "a", finalize_assembly(2, 2, {{0, 0, 2}, {1, 1, 5}, {0, 1, 1}, {1, 0, 1}}));
  sys.add_block("a", "b", finalize_assembly(2, 1, {{0, 0, 1}, {1, 0, 4}}));
  sys.add_block("b", "a", finalize_assembly(1, 2, {{0, 0, 1}, {0, 1, 4}}));
  sys.add_rhs("a", Eigen::Vector2d(3, 0));
  sys.add_rhs("b", Vector::Constant(1, 1.0));
  CHECK(sys.global_size() == 3);
  CHECK_THROWS_AS(sys.add_block("a", "b", finalize_assembly(1, 1, {})), InvalidArgument);

  const BlockSystem red = apply_essential_bc(sys);
  CHECK(red.global_size() == 2);
  const Vector x = solve_direct(red.global_matrix(), red.global_rhs());
  CHECK((x - Eigen::Vector2d(1, 1)).norm() <= 1e-14);
  const auto parts = red.split(x);
  CHECK((red.expand("a", parts.at("a"), 2) - Eigen::Vector2d(1, 0)).norm() == 0.0);

  // Lifting by a prescribed boundary value moves A[:, bc] g to the right-hand side.
  const BlockSystem lifted = apply_essential_bc(sys, {{"a", Eigen::Vector2d(0, 2)}});
  CHECK(lifted.rhs("a")[0] == doctest::Approx(1.0));
  CHECK(lifted.rhs("b")[0] == doctest::Approx(-7.0));
}

TEST_CASE("zero-mean multiplier rows") {
  // Neumann-like singular 1D Laplacian made solvable by a mean constraint.
  const Index n = 5;
  std::vector<Triplet> trips;
  for (Index i = 0; i + 1 < n; ++i) {
    trips.push_back({i, i, 1});
    trips.push_back({i + 1, i + 1, 1});
    trips.push_back({i, i + 1, -1});
    trips.push_back({i + 1, i, -1});
  }
  BlockSystem sys;
  sys.add_field({"p", n, {}, Vector::Ones(n), {}});
  sys.add_block("p", "p", finalize_assembly(n, n, trips));
  Vector f = Vector::Zero(n);
  f[0] = 1;
  f[n - 1] = -1;
  sys.add_rhs("p", f);
  CHECK(sys.global_size() == n + 1);
  const SparseMatrix a = sys.global_matrix();
  const Vector x = solve_direct(a, sys.global_rhs());
  CHECK(std::abs(sys.split(x).at("p").sum()) <= 1e-14);
  CHECK(std::abs(sys.multipliers(x)[0]) <= 1e-14);
  CHECK((a.transpose().to_eigen() - a.to_eigen()).norm() == 0.0);
}

TEST_CASE("matrix market export") {
  const SparseMatrix a = finalize_assembly(2, 3, {{0, 2, 1.5}, {1, 0, -2}});
  std::ostringstream os;
  write_matrix_market(os, a);
  CHECK(os.str() == "%%MatrixMarket matrix coordinate real general\n2 3 2\n1 3 1.5\n2 1 -2\n");
}
