#pragma once

// Local (single-rank) dense and sparse kernels for the linear-algebraic
// formulation of Kernel K-means:
//
//   B  = P Pᵀ                      gemm_nt
//   K  = kappa(B) elementwise       apply_kernel
//   Eᵀ = V K                        spmm / spmm_nt
//   z  = mask(Eᵀ, cl)               mask_select
//   c  = V z                        spmv
//   Dᵀ = -2 Eᵀ + c 1ᵀ               compute_distances
//   cl = argmin over clusters       argmin_rows
//
// Dense storage is row-major; the assignment matrix V is stored in CSC form
// with exactly one nonzero per column.

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace kkm {

using ClusterId = std::int32_t;
using Assignments = std::vector<ClusterId>;

class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

template <typename T>
class DenseMatrix {
 public:
  using value_type = T;

  DenseMatrix() = default;
  DenseMatrix(std::size_t rows, std::size_t cols, T fill = T{0})
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
  DenseMatrix(std::size_t rows, std::size_t cols, std::vector<T> data)
      : rows_(rows), cols_(cols), data_(std::move(data)) {
    if (data_.size() != rows_ * cols_) {
      throw DimensionError("DenseMatrix: data length " +
                           std::to_string(data_.size()) + " != " +
                           std::to_string(rows_) + "x" + std::to_string(cols_));
    }
  }

  static DenseMatrix from_rows(
      std::initializer_list<std::initializer_list<T>> rows) {
    const std::size_t r = rows.size();
    const std::size_t c = r == 0 ? 0 : rows.begin()->size();
    std::vector<T> data;
    data.reserve(r * c);
    for (const auto& row : rows) {
      if (row.size() != c) throw DimensionError("from_rows: ragged rows");
      data.insert(data.end(), row.begin(), row.end());
    }
    return DenseMatrix(r, c, std::move(data));
  }

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  T& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  const T& operator()(std::size_t r, std::size_t c) const {
    return data_[r * cols_ + c];
  }

  std::span<T> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const T> row(std::size_t r) const {
    return {data_.data() + r * cols_, cols_};
  }

  std::span<T> data() noexcept { return data_; }
  std::span<const T> data() const noexcept { return data_; }
  std::vector<T> release() && { return std::move(data_); }

  /// Copy of the sub-block [row0, row0+nrows) x [col0, col0+ncols).
  DenseMatrix block(std::size_t row0, std::size_t nrows, std::size_t col0,
                    std::size_t ncols) const;

  /// Writes `src` into this matrix with its top-left corner at (row0, col0).
  void assign_block(std::size_t row0, std::size_t col0, const DenseMatrix& src);

  bool operator==(const DenseMatrix&) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<T> data_;
};

/// Compressed-sparse-column matrix. Used for the k x n assignment matrix V,
/// or column slices of it.
template <typename T>
struct CscMatrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<std::int64_t> col_ptr;  // length cols + 1
  std::vector<ClusterId> row_idx;     // length nnz
  std::vector<T> values;              // length nnz

  std::size_t nnz() const noexcept { return row_idx.size(); }

  /// Checks structural invariants; throws DimensionError on violation.
  void validate() const;

  DenseMatrix<T> to_dense() const;
};

struct KernelSpec {
  enum class Kind { linear, polynomial };

  Kind kind = Kind::linear;
  double gamma = 1.0;
  double c = 1.0;
  unsigned degree = 2;

  static KernelSpec linear() { return {}; }
  static KernelSpec polynomial(double gamma, double c, unsigned degree) {
    return {Kind::polynomial, gamma, c, degree};
  }

  bool operator==(const KernelSpec&) const = default;
};

std::string to_string(const KernelSpec& spec);

/// result(i, j) = sum_t a(i, t) * b(j, t).
template <typename T>
DenseMatrix<T> gemm_nt(const DenseMatrix<T>& a, const DenseMatrix<T>& b);

/// c(i, j) += sum_t a(i, t) * b(j, t), accumulating in t order starting from
/// the existing value of c(i, j). Splitting the inner dimension into ordered
/// chunks therefore reproduces gemm_nt bit for bit.
template <typename T>
void gemm_nt_accumulate(const DenseMatrix<T>& a, const DenseMatrix<T>& b,
                        DenseMatrix<T>& c);

template <typename T>
DenseMatrix<T> apply_kernel(DenseMatrix<T> b, const KernelSpec& spec);

template <typename T>
void apply_kernel_inplace(DenseMatrix<T>& b, const KernelSpec& spec);

/// Histogram of labels; throws DimensionError on a label outside [0, k).
std::vector<std::int64_t> cluster_sizes(std::span<const ClusterId> labels,
                                        std::size_t k);

/// CSC slice of V for the given labels, with values 1/|L_i| taken from the
/// global cluster sizes. Column j of the result is the point labels[j].
template <typename T>
CscMatrix<T> assignment_block(std::span<const ClusterId> labels,
                              std::span<const std::int64_t> global_sizes);

template <typename T>
CscMatrix<T> build_assignment_matrix(std::span<const ClusterId> labels,
                                     std::size_t k);

/// Partial product V(:, row_offset : row_offset + kblk.rows()) * kblk.
template <typename T>
DenseMatrix<T> spmm(const CscMatrix<T>& v, const DenseMatrix<T>& kblk,
                    std::size_t row_offset);

/// V * ktᵀ for a row block kt of a symmetric K (kt.cols() == v.cols()).
/// Result is k x kt.rows(). Summation order per entry matches spmm.
template <typename T>
DenseMatrix<T> spmm_nt(const CscMatrix<T>& v, const DenseMatrix<T>& kt);

/// z[j] = et(cl[j], j).
template <typename T>
std::vector<T> mask_select(const DenseMatrix<T>& et,
                           std::span<const ClusterId> cl);

template <typename T>
std::vector<T> spmv(const CscMatrix<T>& v, std::span<const T> z,
                    std::size_t col_offset);

/// c[i] += V(i, col_offset + j) * z[j], in ascending j.
template <typename T>
void spmv_accumulate(const CscMatrix<T>& v, std::span<const T> z,
                     std::size_t col_offset, std::span<T> c);

/// Sets c[i] = +inf for every empty cluster so it can never win an argmin.
template <typename T>
void mark_empty_clusters(std::span<T> c, std::span<const std::int64_t> sizes);

/// dt(i, j) = -2 et(i, j) + c[i]. Rows of empty clusters become +inf.
template <typename T>
DenseMatrix<T> compute_distances(const DenseMatrix<T>& et,
                                 std::span<const T> c);

/// Per column, the lowest cluster index attaining the minimum.
template <typename T>
Assignments argmin_rows(const DenseMatrix<T>& dt);

/// sum_j dt(cl[j], j), accumulated in double in ascending j.
template <typename T>
double shifted_objective(const DenseMatrix<T>& dt,
                         std::span<const ClusterId> cl);

}  // namespace kkm
