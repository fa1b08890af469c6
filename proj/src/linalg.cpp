#include "smhd/linalg.hpp"

#include <Eigen/UmfPackSupport>

#include <algorithm>
#include <cmath>
#include <ostream>

namespace smhd {

SparseMatrix::SparseMatrix(Index rows, Index cols)
    : rows_(rows), cols_(cols), row_offsets_(static_cast<std::size_t>(rows) + 1, 0) {}

double SparseMatrix::coeff(Index i, Index j) const {
  const auto begin = col_indices_.begin() + row_offsets_[i];
  const auto end = col_indices_.begin() + row_offsets_[i + 1];
  const auto it = std::lower_bound(begin, end, j);
  if (it == end || *it != j) return 0.0;
  return values_[static_cast<std::size_t>(it - col_indices_.begin())];
}

Vector SparseMatrix::operator*(const Vector& x) const {
  Vector y = Vector::Zero(rows_);
  for (Index i = 0; i < rows_; ++i) {
    double s = 0.0;
    for (Index k = row_offsets_[i]; k < row_offsets_[i + 1]; ++k) s += values_[k] * x[col_indices_[k]];
    y[i] = s;
  }
  return y;
}

Vector SparseMatrix::transpose_multiply(const Vector& x) const {
  Vector y = Vector::Zero(cols_);
  for (Index i = 0; i < rows_; ++i) {
    for (Index k = row_offsets_[i]; k < row_offsets_[i + 1]; ++k) y[col_indices_[k]] += values_[k] * x[i];
  }
  return y;
}

SparseMatrix SparseMatrix::transpose() const {
  std::vector<Index> offsets(static_cast<std::size_t>(cols_) + 1, 0);
  for (Index c : col_indices_) ++offsets[c + 1];
  for (Index j = 0; j < cols_; ++j) offsets[j + 1] += offsets[j];
  std::vector<Index> cols(values_.size());
  std::vector<double> vals(values_.size());
  std::vector<Index> cursor(offsets.begin(), offsets.end() - 1);
  for (Index i = 0; i < rows_; ++i) {
    for (Index k = row_offsets_[i]; k < row_offsets_[i + 1]; ++k) {
      const Index dst = cursor[col_indices_[k]]++;
      cols[dst] = i;
      vals[dst] = values_[k];
    }
  }
  return from_csr(cols_, rows_, std::move(offsets), std::move(cols), std::move(vals));
}

SparseMatrix SparseMatrix::scaled(double alpha) const {
  SparseMatrix out = *this;
  for (double& v : out.values_) v *= alpha;
  return out;
}

double SparseMatrix::frobenius_norm() const {
  double s = 0.0;
  for (double v : values_) s += v * v;
  return std::sqrt(s);
}

double SparseMatrix::max_abs() const {
  double m = 0.0;
  for (double v : values_) m = std::max(m, std::abs(v));
  return m;
}

Eigen::SparseMatrix<double> SparseMatrix::to_eigen() const {
  Eigen::SparseMatrix<double, Eigen::RowMajor> rm(rows_, cols_);
  rm.reserve(Eigen::VectorXi::Zero(rows_));
  std::vector<Eigen::Triplet<double>> trips;
  trips.reserve(values_.size());
  for (Index i = 0; i < rows_; ++i) {
    for (Index k = row_offsets_[i]; k < row_offsets_[i + 1]; ++k) trips.emplace_back(i, col_indices_[k], values_[k]);
  }
  Eigen::SparseMatrix<double> m(rows_, cols_);
  m.setFromTriplets(trips.begin(), trips.end());
  return m;
}

SparseMatrix SparseMatrix::from_eigen(const Eigen::SparseMatrix<double>& m) {
  std::vector<Triplet> trips;
  trips.reserve(static_cast<std::size_t>(m.nonZeros()));
  for (int k = 0; k < m.outerSize(); ++k) {
    for (Eigen::SparseMatrix<double>::InnerIterator it(m, k); it; ++it) {
      trips.push_back({static_cast<Index>(it.row()), static_cast<Index>(it.col()), it.value()});
    }
  }
  return finalize_assembly(static_cast<Index>(m.rows()), static_cast<Index>(m.cols()), std::move(trips));
}

SparseMatrix from_csr(Index rows, Index cols, std::vector<Index> offsets, std::vector<Index> cols_idx,
                      std::vector<double> values) {
  SparseMatrix m;
  m.rows_ = rows;
  m.cols_ = cols;
  m.row_offsets_ = std::move(offsets);
  m.col_indices_ = std::move(cols_idx);
  m.values_ = std::move(values);
  return m;
}

SparseMatrix finalize_assembly(Index rows, Index cols, std::vector<Triplet> triplets) {
  for (const auto& t : triplets) {
    if (t.row < 0 || t.row >= rows || t.col < 0 || t.col >= cols) {
      throw InvalidArgument("finalize_assembly: triplet (" + std::to_string(t.row) + ", " +
                            std::to_string(t.col) + ") outside " + std::to_string(rows) + "x" +
                            std::to_string(cols));
    }
  }
  std::sort(triplets.begin(), triplets.end(), [](const Triplet& a, const Triplet& b) {
    if (a.row != b.row) return a.row < b.row;
    if (a.col != b.col) return a.col < b.col;
    const double aa = std::abs(a.value), ab = std::abs(b.value);
    if (aa != ab) return aa < ab;
    return a.value < b.value;
  });

  SparseMatrix m(rows, cols);
  m.col_indices_.reserve(triplets.size());
  m.values_.reserve(triplets.size());
  std::size_t k = 0;
  for (Index i = 0; i < rows; ++i) {
    while (k < triplets.size() && triplets[k].row == i) {
      const Index j = triplets[k].col;
      double s = 0.0;
      while (k < triplets.size() && triplets[k].row == i && triplets[k].col == j) s += triplets[k++].value;
      m.col_indices_.push_back(j);
      m.values_.push_back(s);
    }
    m.row_offsets_[i + 1] = static_cast<Index>(m.values_.size());
  }
  return m;
}

SparseMatrix multiply(const SparseMatrix& a, const SparseMatrix& b) {
  if (a.cols() != b.rows()) throw InvalidArgument("multiply: shape mismatch");
  const Eigen::SparseMatrix<double> c = (a.to_eigen() * b.to_eigen()).pruned(0.0, 0.0);
  SparseMatrix out = SparseMatrix::from_eigen(c);
  return out;
}

SparseMatrix add(const SparseMatrix& a, const SparseMatrix& b, double alpha, double beta) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) throw InvalidArgument("add: shape mismatch");
  std::vector<Triplet> trips;
  trips.reserve(static_cast<std::size_t>(a.nnz() + b.nnz()));
  for (Index i = 0; i < a.rows(); ++i) {
    for (Index k = a.row_offsets()[i]; k < a.row_offsets()[i + 1]; ++k)
      trips.push_back({i, a.col_indices()[k], alpha * a.values()[k]});
    for (Index k = b.row_offsets()[i]; k < b.row_offsets()[i + 1]; ++k)
      trips.push_back({i, b.col_indices()[k], beta * b.values()[k]});
  }
  return finalize_assembly(a.rows(), a.cols(), std::move(trips));
}

SparseMatrix restrict_matrix(const SparseMatrix& a, std::span<const Index> row_map, Index new_rows,
                             std::span<const Index> col_map, Index new_cols) {
  std::vector<Index> offsets(static_cast<std::size_t>(new_rows) + 1, 0);
  std::vector<Index> cols;
  std::vector<double> vals;
  cols.reserve(static_cast<std::size_t>(a.nnz()));
  vals.reserve(static_cast<std::size_t>(a.nnz()));
  // Row maps produced by BC elimination are monotone, so rows and columns stay sorted.
  Index current = 0;
  for (Index i = 0; i < a.rows(); ++i) {
    const Index ni = row_map[i];
    if (ni < 0) continue;
    for (; current < ni; ++current) offsets[current + 1] = static_cast<Index>(vals.size());
    for (Index k = a.row_offsets()[i]; k < a.row_offsets()[i + 1]; ++k) {
      const Index nj = col_map[a.col_indices()[k]];
      if (nj < 0) continue;
      cols.push_back(nj);
      vals.push_back(a.values()[k]);
    }
    offsets[ni + 1] = static_cast<Index>(vals.size());
    current = ni + 1;
  }
  for (; current < new_rows; ++current) offsets[current + 1] = static_cast<Index>(vals.size());
  return from_csr(new_rows, new_cols, std::move(offsets), std::move(cols), std::move(vals));
}

void write_matrix_market(std::ostream& out, const SparseMatrix& a) {
  out << "%%MatrixMarket matrix coordinate real general\n";
  out << a.rows() << ' ' << a.cols() << ' ' << a.nnz() << '\n';
  out.precision(17);
  for (Index i = 0; i < a.rows(); ++i) {
    for (Index k = a.row_offsets()[i]; k < a.row_offsets()[i + 1]; ++k) {
      out << i + 1 << ' ' << a.col_indices()[k] + 1 << ' ' << a.values()[k] << '\n';
    }
  }
}

// --------------------------------------------------------------------------
// Direct solver

struct DirectSolver::Impl {
  Eigen::SparseMatrix<double> a;
  Eigen::UmfPackLU<Eigen::SparseMatrix<double>> lu;
  double frobenius = 0.0;
};

DirectSolver::DirectSolver(const SparseMatrix& a, double pivot_threshold) : impl_(std::make_unique<Impl>()) {
  if (a.rows() != a.cols()) throw InvalidArgument("DirectSolver: matrix must be square");
  n_ = a.rows();
  impl_->a = a.to_eigen();
  impl_->a.makeCompressed();
  impl_->frobenius = a.frobenius_norm();
  if (n_ == 0) return;
  impl_->lu.umfpackControl()(UMFPACK_PIVOT_TOLERANCE) = pivot_threshold;
  // Saddle-point systems: AMD-like symmetric strategy on A + A^T with a METIS
  // ordering keeps the fill far below the column-oriented default.
  impl_->lu.umfpackControl()(UMFPACK_STRATEGY) = UMFPACK_STRATEGY_SYMMETRIC;
  impl_->lu.umfpackControl()(UMFPACK_ORDERING) = UMFPACK_ORDERING_METIS;
  impl_->lu.compute(impl_->a);
  if (impl_->lu.info() != Eigen::Success) {
    // First vanishing diagonal entry of U, mapped back to an original column.
    Index pivot = -1;
    if (impl_->lu.info() == Eigen::NumericalIssue) {
      const auto u = impl_->lu.matrixU();
      const auto q = impl_->lu.permutationQ();
      for (Index k = 0; k < n_ && pivot < 0; ++k)
        if (u.coeff(k, k) == 0.0) pivot = q[k];
    }
    throw SingularSystemError("singular system: zero pivot at column " + std::to_string(pivot), pivot);
  }
}

DirectSolver::~DirectSolver() = default;
DirectSolver::DirectSolver(DirectSolver&&) noexcept = default;
DirectSolver& DirectSolver::operator=(DirectSolver&&) noexcept = default;

Vector DirectSolver::solve(const Vector& b) const {
  if (b.size() != n_) throw InvalidArgument("DirectSolver::solve: size mismatch");
  if (n_ == 0) return Vector();
  Vector x = impl_->lu.solve(b);
  for (int sweep = 0; sweep < 2; ++sweep) {
    const Vector r = b - impl_->a * x;
    if (!r.allFinite()) break;
    x += impl_->lu.solve(r);
  }
  const Vector r = b - impl_->a * x;
  const double bound = kDirectSolveTolerance * (impl_->frobenius * x.norm() + b.norm());
  if (!x.allFinite() || r.norm() > bound) {
    Index worst = 0;
    if (r.allFinite()) r.cwiseAbs().maxCoeff(&worst);
    throw SingularSystemError("singular system: residual " + std::to_string(r.norm()) +
                                  " exceeds tolerance " + std::to_string(bound) + " (worst row " +
                                  std::to_string(worst) + ")",
                              worst);
  }
  return x;
}

Vector solve_direct(const SparseMatrix& a, const Vector& b) { return DirectSolver(a).solve(b); }

// --------------------------------------------------------------------------
// Block system

void BlockSystem::add_field(BlockField field) {
  if (field.constrained.empty()) field.constrained.assign(static_cast<std::size_t>(field.size), 0);
  if (field.parent.empty()) {
    field.parent.resize(static_cast<std::size_t>(field.size));
    for (Index i = 0; i < field.size; ++i) field.parent[i] = i;
  }
  if (static_cast<Index>(field.constrained.size()) != field.size ||
      static_cast<Index>(field.parent.size()) != field.size ||
      (field.mean_weights.size() != 0 && field.mean_weights.size() != field.size)) {
    throw InvalidArgument("BlockSystem::add_field: inconsistent sizes for " + field.name);
  }
  for (const auto& f : fields_) {
    if (f.name == field.name) throw InvalidArgument("BlockSystem::add_field: duplicate field " + field.name);
  }
  rhs_.push_back(Vector::Zero(field.size));
  fields_.push_back(std::move(field));
}

Index BlockSystem::field_index(const std::string& name) const {
  for (std::size_t i = 0; i < fields_.size(); ++i) {
    if (fields_[i].name == name) return static_cast<Index>(i);
  }
  throw InvalidArgument("BlockSystem: unknown field " + name);
}

const BlockField& BlockSystem::field(const std::string& name) const { return fields_[field_index(name)]; }

void BlockSystem::add_block(const std::string& row, const std::string& col, const SparseMatrix& m,
                            double scale) {
  const Index r = field_index(row), c = field_index(col);
  if (m.rows() != fields_[r].size || m.cols() != fields_[c].size) {
    throw InvalidArgument("BlockSystem::add_block: block (" + row + ", " + col + ") has shape " +
                          std::to_string(m.rows()) + "x" + std::to_string(m.cols()));
  }
  auto it = blocks_.find({r, c});
  if (it == blocks_.end()) {
    blocks_.emplace(std::make_pair(r, c), scale == 1.0 ? m : m.scaled(scale));
  } else {
    it->second = add(it->second, m, 1.0, scale);
  }
}

void BlockSystem::add_rhs(const std::string& field, const Vector& values, double scale) {
  const Index i = field_index(field);
  if (values.size() != fields_[i].size) throw InvalidArgument("BlockSystem::add_rhs: size mismatch for " + field);
  rhs_[i] += scale * values;
}

bool BlockSystem::has_block(const std::string& row, const std::string& col) const {
  return blocks_.count({field_index(row), field_index(col)}) > 0;
}

const SparseMatrix& BlockSystem::block(const std::string& row, const std::string& col) const {
  auto it = blocks_.find({field_index(row), field_index(col)});
  if (it == blocks_.end()) throw InvalidArgument("BlockSystem: no block (" + row + ", " + col + ")");
  return it->second;
}

const Vector& BlockSystem::rhs(const std::string& field) const { return rhs_[field_index(field)]; }

Index BlockSystem::global_size() const {
  Index n = 0;
  for (const auto& f : fields_) n += f.size + (f.mean_weights.size() > 0 ? 1 : 0);
  return n;
}

Index BlockSystem::offset(const std::string& name) const {
  Index n = 0;
  for (const auto& f : fields_) {
    if (f.name == name) return n;
    n += f.size;
  }
  throw InvalidArgument("BlockSystem: unknown field " + name);
}

SparseMatrix BlockSystem::global_matrix() const {
  const Index nf = static_cast<Index>(fields_.size());
  std::vector<Index> offsets(nf + 1, 0);
  for (Index i = 0; i < nf; ++i) offsets[i + 1] = offsets[i] + fields_[i].size;
  const Index unknowns = offsets[nf];
  std::vector<Index> mean_row(nf, -1);
  Index n = unknowns;
  for (Index i = 0; i < nf; ++i) {
    if (fields_[i].mean_weights.size() > 0) mean_row[i] = n++;
  }

  std::vector<Index> row_offsets(static_cast<std::size_t>(n) + 1, 0);
  std::vector<Index> cols;
  std::vector<double> vals;
  for (Index fi = 0; fi < nf; ++fi) {
    const auto& field = fields_[fi];
    for (Index i = 0; i < field.size; ++i) {
      for (Index fj = 0; fj < nf; ++fj) {
        auto it = blocks_.find({fi, fj});
        if (it == blocks_.end()) continue;
        const SparseMatrix& b = it->second;
        for (Index k = b.row_offsets()[i]; k < b.row_offsets()[i + 1]; ++k) {
          cols.push_back(offsets[fj] + b.col_indices()[k]);
          vals.push_back(b.values()[k]);
        }
      }
      if (mean_row[fi] >= 0 && field.mean_weights[i] != 0.0) {
        cols.push_back(mean_row[fi]);
        vals.push_back(field.mean_weights[i]);
      }
      row_offsets[offsets[fi] + i + 1] = static_cast<Index>(vals.size());
    }
  }
  for (Index fi = 0; fi < nf; ++fi) {
    if (mean_row[fi] < 0) continue;
    for (Index i = 0; i < fields_[fi].size; ++i) {
      if (fields_[fi].mean_weights[i] == 0.0) continue;
      cols.push_back(offsets[fi] + i);
      vals.push_back(fields_[fi].mean_weights[i]);
    }
    row_offsets[mean_row[fi] + 1] = static_cast<Index>(vals.size());
  }
  return from_csr(n, n, std::move(row_offsets), std::move(cols), std::move(vals));
}

Vector BlockSystem::global_rhs() const {
  Vector b = Vector::Zero(global_size());
  Index o = 0;
  for (std::size_t i = 0; i < fields_.size(); ++i) {
    b.segment(o, fields_[i].size) = rhs_[i];
    o += fields_[i].size;
  }
  return b;
}

std::map<std::string, Vector> BlockSystem::split(const Vector& global) const {
  std::map<std::string, Vector> out;
  Index o = 0;
  for (const auto& f : fields_) {
    out[f.name] = global.segment(o, f.size);
    o += f.size;
  }
  return out;
}

std::vector<double> BlockSystem::multipliers(const Vector& global) const {
  std::vector<double> out;
  Index o = 0;
  for (const auto& f : fields_) o += f.size;
  for (const auto& f : fields_) {
    if (f.mean_weights.size() > 0) out.push_back(global[o++]);
  }
  return out;
}

Vector BlockSystem::expand(const std::string& name, const Vector& reduced, Index parent_size) const {
  const auto& f = field(name);
  Vector full = Vector::Zero(parent_size);
  for (Index i = 0; i < f.size; ++i) full[f.parent[i]] = reduced[i];
  return full;
}

BlockSystem apply_essential_bc(const BlockSystem& system, const std::map<std::string, Vector>& boundary_values) {
  const auto& fields = system.fields_;
  const std::size_t nf = fields.size();
  std::vector<std::vector<Index>> maps(nf);
  std::vector<Index> sizes(nf, 0);
  BlockSystem out;
  for (std::size_t i = 0; i < nf; ++i) {
    const auto& f = fields[i];
    maps[i].assign(static_cast<std::size_t>(f.size), -1);
    BlockField reduced;
    reduced.name = f.name;
    for (Index k = 0; k < f.size; ++k) {
      if (f.constrained[k]) continue;
      maps[i][k] = sizes[i]++;
      reduced.parent.push_back(f.parent[k]);
    }
    reduced.size = sizes[i];
    reduced.constrained.assign(static_cast<std::size_t>(reduced.size), 0);
    if (f.mean_weights.size() > 0) {
      reduced.mean_weights = Vector::Zero(reduced.size);
      for (Index k = 0; k < f.size; ++k) {
        if (maps[i][k] >= 0) reduced.mean_weights[maps[i][k]] = f.mean_weights[k];
      }
    }
    out.add_field(std::move(reduced));
  }

  std::vector<Vector> lifted(nf);
  for (std::size_t i = 0; i < nf; ++i) {
    lifted[i] = system.rhs_[i];
  }
  for (const auto& [key, block] : system.blocks_) {
    const auto [r, c] = key;
    auto bv = boundary_values.find(fields[c].name);
    if (bv != boundary_values.end()) {
      // Only the constrained entries of the prescribed vector matter.
      Vector g = Vector::Zero(fields[c].size);
      for (Index k = 0; k < fields[c].size; ++k) {
        if (fields[c].constrained[k]) g[k] = bv->second[k];
      }
      lifted[r] -= block * g;
    }
    out.blocks_.emplace(key, restrict_matrix(block, maps[r], sizes[r], maps[c], sizes[c]));
  }
  for (std::size_t i = 0; i < nf; ++i) {
    Vector reduced(sizes[i]);
    for (Index k = 0; k < fields[i].size; ++k) {
      if (maps[i][k] >= 0) reduced[maps[i][k]] = lifted[i][k];
    }
    out.rhs_[i] = reduced;
  }
  return out;
}

}  // namespace smhd
