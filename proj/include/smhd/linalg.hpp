#pragma once

#include "smhd/common.hpp"

#include <Eigen/SparseCore>

#include <iosfwd>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace smhd {

struct Triplet {
  Index row;
  Index col;
  double value;
};

/// Compressed-sparse-row matrix. Column indices are strictly ascending within
/// each row; duplicates never survive finalization.
class SparseMatrix {
 public:
  SparseMatrix() = default;
  SparseMatrix(Index rows, Index cols);

  Index rows() const { return rows_; }
  Index cols() const { return cols_; }
  Index nnz() const { return static_cast<Index>(values_.size()); }

  std::span<const Index> row_offsets() const { return row_offsets_; }
  std::span<const Index> col_indices() const { return col_indices_; }
  std::span<const double> values() const { return values_; }

  double coeff(Index i, Index j) const;
  Vector operator*(const Vector& x) const;
  /// y = A^T x without forming the transpose.
  Vector transpose_multiply(const Vector& x) const;
  SparseMatrix transpose() const;
  SparseMatrix scaled(double alpha) const;
  double frobenius_norm() const;
  double max_abs() const;

  Eigen::SparseMatrix<double> to_eigen() const;
  static SparseMatrix from_eigen(const Eigen::SparseMatrix<double>& m);

  bool operator==(const SparseMatrix& other) const = default;

 private:
  friend SparseMatrix finalize_assembly(Index, Index, std::vector<Triplet>);
  friend SparseMatrix from_csr(Index, Index, std::vector<Index>, std::vector<Index>,
                               std::vector<double>);
  Index rows_ = 0;
  Index cols_ = 0;
  std::vector<Index> row_offsets_{0};
  std::vector<Index> col_indices_;
  std::vector<double> values_;
};

/// Sums duplicate (i, j) contributions. The summation order is fixed by
/// sorting on (row, col, |value|, value) so that any permutation of the same
/// triplet multiset yields a bitwise-identical matrix.
SparseMatrix finalize_assembly(Index rows, Index cols, std::vector<Triplet> triplets);

SparseMatrix from_csr(Index rows, Index cols, std::vector<Index> offsets, std::vector<Index> cols_idx,
                      std::vector<double> values);

SparseMatrix multiply(const SparseMatrix& a, const SparseMatrix& b);
SparseMatrix add(const SparseMatrix& a, const SparseMatrix& b, double alpha = 1.0,
                 double beta = 1.0);

/// Submatrix on the selected rows/cols. `row_map[i]` is the new row of row i,
/// or -1 to drop it (likewise for columns).
SparseMatrix restrict_matrix(const SparseMatrix& a, std::span<const Index> row_map, Index new_rows,
                             std::span<const Index> col_map, Index new_cols);

void write_matrix_market(std::ostream& out, const SparseMatrix& a);

/// Sparse LU with threshold partial pivoting (UMFPACK through Eigen,
/// symmetric strategy, METIS ordering), followed
/// by iterative refinement. Runs single-threaded; repeated solves of the same
/// system are bitwise identical.
class DirectSolver {
 public:
  explicit DirectSolver(const SparseMatrix& a, double pivot_threshold = 0.1);
  ~DirectSolver();
  DirectSolver(DirectSolver&&) noexcept;
  DirectSolver& operator=(DirectSolver&&) noexcept;

  Vector solve(const Vector& b) const;
  Index size() const { return n_; }

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
  Index n_ = 0;
};

/// Residual tolerance of the direct solve: ||Ax - b|| <= 1e-10 (||A||_F ||x|| + ||b||).
inline constexpr double kDirectSolveTolerance = 1e-10;

Vector solve_direct(const SparseMatrix& a, const Vector& b);

/// One unknown of a block system.
struct BlockField {
  std::string name;
  Index size = 0;
  /// Nonzero entries are essential (eliminated) DOFs.
  std::vector<char> constrained;
  /// When non-empty, an extra scalar multiplier row enforces weights . x = 0.
  Vector mean_weights;
  /// Index of each DOF in the unreduced field (identity before BC elimination).
  std::vector<Index> parent;
};

/// Ordered collection of named unknowns, named blocks and right-hand sides.
/// Blocks are stored as rows-by-test, cols-by-trial.
class BlockSystem {
 public:
  void add_field(BlockField field);
  void add_block(const std::string& row, const std::string& col, const SparseMatrix& m,
                 double scale = 1.0);
  void add_rhs(const std::string& field, const Vector& values, double scale = 1.0);

  const std::vector<BlockField>& fields() const { return fields_; }
  const BlockField& field(const std::string& name) const;
  Index field_index(const std::string& name) const;
  bool has_block(const std::string& row, const std::string& col) const;
  const SparseMatrix& block(const std::string& row, const std::string& col) const;
  const Vector& rhs(const std::string& field) const;

  /// Unknowns plus one multiplier per zero-mean field.
  Index global_size() const;
  Index offset(const std::string& name) const;

  SparseMatrix global_matrix() const;
  Vector global_rhs() const;
  /// Per-field segments of a global vector (multipliers dropped).
  std::map<std::string, Vector> split(const Vector& global) const;
  /// Multiplier values appended for the zero-mean rows, in field order.
  std::vector<double> multipliers(const Vector& global) const;
  /// Lifts a reduced field vector back to its parent numbering (zeros elsewhere).
  Vector expand(const std::string& name, const Vector& reduced, Index parent_size) const;

 private:
  friend BlockSystem apply_essential_bc(const BlockSystem&,
                                        const std::map<std::string, Vector>&);
  std::vector<BlockField> fields_;
  std::map<std::pair<Index, Index>, SparseMatrix> blocks_;
  std::vector<Vector> rhs_;
};

/// Eliminates constrained DOFs symmetrically (rows and columns removed); the
/// right-hand side is lifted by the prescribed boundary values, which default
/// to zero (homogeneous case: pure deletion).
BlockSystem apply_essential_bc(const BlockSystem& system,
                               const std::map<std::string, Vector>& boundary_values = {});

}  // namespace smhd
