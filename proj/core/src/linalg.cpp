#include "kkm/linalg.hpp"

#include <cmath>
#include <limits>
#include <sstream>

namespace kkm {

namespace {

template <typename T>
void require_finite(std::span<const T> values, const char* what) {
  for (const T v : values) {
    if (!std::isfinite(v)) {
      throw NumericError(std::string(what) + ": non-finite value produced");
    }
  }
}

template <typename T>
T integer_power(T base, unsigned exponent) {
  T result = T{1};
  for (unsigned e = 0; e < exponent; ++e) result *= base;
  return result;
}

}  // namespace

template <typename T>
DenseMatrix<T> DenseMatrix<T>::block(std::size_t row0, std::size_t nrows,
                                     std::size_t col0,
                                     std::size_t ncols) const {
  if (row0 + nrows > rows_ || col0 + ncols > cols_) {
    throw DimensionError("DenseMatrix::block out of range");
  }
  DenseMatrix out(nrows, ncols);
  for (std::size_t r = 0; r < nrows; ++r) {
    const T* src = data_.data() + (row0 + r) * cols_ + col0;
    std::copy(src, src + ncols, out.data_.data() + r * ncols);
  }
  return out;
}

template <typename T>
void DenseMatrix<T>::assign_block(std::size_t row0, std::size_t col0,
                                  const DenseMatrix& src) {
  if (row0 + src.rows_ > rows_ || col0 + src.cols_ > cols_) {
    throw DimensionError("DenseMatrix::assign_block out of range");
  }
  for (std::size_t r = 0; r < src.rows_; ++r) {
    const auto in = src.row(r);
    std::copy(in.begin(), in.end(), data_.data() + (row0 + r) * cols_ + col0);
  }
}

template <typename T>
void CscMatrix<T>::validate() const {
  if (col_ptr.size() != cols + 1) {
    throw DimensionError("CscMatrix: col_ptr length must be cols + 1");
  }
  if (col_ptr.front() != 0) throw DimensionError("CscMatrix: col_ptr[0] != 0");
  for (std::size_t j = 0; j < cols; ++j) {
    if (col_ptr[j + 1] < col_ptr[j]) {
      throw DimensionError("CscMatrix: col_ptr decreasing at column " +
                           std::to_string(j));
    }
  }
  if (static_cast<std::size_t>(col_ptr.back()) != row_idx.size() ||
      values.size() != row_idx.size()) {
    throw DimensionError("CscMatrix: nnz mismatch");
  }
  for (const ClusterId r : row_idx) {
    if (r < 0 || static_cast<std::size_t>(r) >= rows) {
      throw DimensionError("CscMatrix: row index out of range");
    }
  }
}

template <typename T>
DenseMatrix<T> CscMatrix<T>::to_dense() const {
  DenseMatrix<T> out(rows, cols);
  for (std::size_t j = 0; j < cols; ++j) {
    for (auto p = col_ptr[j]; p < col_ptr[j + 1]; ++p) {
      out(static_cast<std::size_t>(row_idx[p]), j) += values[p];
    }
  }
  return out;
}

std::string to_string(const KernelSpec& spec) {
  if (spec.kind == KernelSpec::Kind::linear) return "linear";
  std::ostringstream os;
  os << "polynomial(gamma=" << spec.gamma << ",c=" << spec.c
     << ",degree=" << spec.degree << ")";
  return os.str();
}

template <typename T>
void gemm_nt_accumulate(const DenseMatrix<T>& a, const DenseMatrix<T>& b,
                        DenseMatrix<T>& c) {
  if (a.cols() != b.cols()) {
    throw DimensionError("gemm_nt: inner dimensions differ (" +
                         std::to_string(a.cols()) + " vs " +
                         std::to_string(b.cols()) + ")");
  }
  if (c.rows() != a.rows() || c.cols() != b.rows()) {
    throw DimensionError("gemm_nt: output shape mismatch");
  }
  const std::size_t inner = a.cols();
  for (std::size_t i = 0; i < a.rows(); ++i) {
    const T* ai = a.row(i).data();
    T* ci = c.row(i).data();
    for (std::size_t j = 0; j < b.rows(); ++j) {
      const T* bj = b.row(j).data();
      T acc = ci[j];
      for (std::size_t t = 0; t < inner; ++t) acc += ai[t] * bj[t];
      ci[j] = acc;
    }
  }
  require_finite<T>(c.data(), "gemm_nt");
}

template <typename T>
DenseMatrix<T> gemm_nt(const DenseMatrix<T>& a, const DenseMatrix<T>& b) {
  if (a.cols() != b.cols()) {
    throw DimensionError("gemm_nt: inner dimensions differ (" +
                         std::to_string(a.cols()) + " vs " +
                         std::to_string(b.cols()) + ")");
  }
  DenseMatrix<T> c(a.rows(), b.rows());
  gemm_nt_accumulate(a, b, c);
  return c;
}

template <typename T>
void apply_kernel_inplace(DenseMatrix<T>& b, const KernelSpec& spec) {
  if (spec.kind == KernelSpec::Kind::linear) return;
  const T gamma = static_cast<T>(spec.gamma);
  const T shift = static_cast<T>(spec.c);
  for (T& x : b.data()) x = integer_power(gamma * x + shift, spec.degree);
  require_finite<T>(b.data(), "apply_kernel");
}

template <typename T>
DenseMatrix<T> apply_kernel(DenseMatrix<T> b, const KernelSpec& spec) {
  apply_kernel_inplace(b, spec);
  return b;
}

std::vector<std::int64_t> cluster_sizes(std::span<const ClusterId> labels,
                                        std::size_t k) {
  std::vector<std::int64_t> sizes(k, 0);
  for (std::size_t j = 0; j < labels.size(); ++j) {
    const ClusterId l = labels[j];
    if (l < 0 || static_cast<std::size_t>(l) >= k) {
      throw DimensionError("label " + std::to_string(l) + " at point " +
                           std::to_string(j) + " outside [0, " +
                           std::to_string(k) + ")");
    }
    ++sizes[static_cast<std::size_t>(l)];
  }
  return sizes;
}

template <typename T>
CscMatrix<T> assignment_block(std::span<const ClusterId> labels,
                              std::span<const std::int64_t> global_sizes) {
  const std::size_t k = global_sizes.size();
  CscMatrix<T> v;
  v.rows = k;
  v.cols = labels.size();
  v.col_ptr.resize(labels.size() + 1);
  v.row_idx.assign(labels.begin(), labels.end());
  v.values.resize(labels.size());
  for (std::size_t j = 0; j < labels.size(); ++j) {
    const ClusterId l = labels[j];
    if (l < 0 || static_cast<std::size_t>(l) >= k) {
      throw DimensionError("label " + std::to_string(l) + " outside [0, " +
                           std::to_string(k) + ")");
    }
    const auto size = global_sizes[static_cast<std::size_t>(l)];
    if (size <= 0) {
      throw DimensionError("cluster " + std::to_string(l) +
                           " has a member but nonpositive global size");
    }
    v.col_ptr[j] = static_cast<std::int64_t>(j);
    v.values[j] = T{1} / static_cast<T>(size);
  }
  v.col_ptr[labels.size()] = static_cast<std::int64_t>(labels.size());
  return v;
}

template <typename T>
CscMatrix<T> build_assignment_matrix(std::span<const ClusterId> labels,
                                     std::size_t k) {
  const auto sizes = cluster_sizes(labels, k);
  return assignment_block<T>(labels, sizes);
}

template <typename T>
DenseMatrix<T> spmm(const CscMatrix<T>& v, const DenseMatrix<T>& kblk,
                    std::size_t row_offset) {
  if (row_offset + kblk.rows() > v.cols) {
    throw DimensionError("spmm: K block rows [" + std::to_string(row_offset) +
                         ", " + std::to_string(row_offset + kblk.rows()) +
                         ") exceed V columns " + std::to_string(v.cols));
  }
  DenseMatrix<T> out(v.rows, kblk.cols());
  const std::size_t m = kblk.cols();
  for (std::size_t j = 0; j < kblk.rows(); ++j) {
    const std::size_t col = row_offset + j;
    const T* kj = kblk.row(j).data();
    for (auto p = v.col_ptr[col]; p < v.col_ptr[col + 1]; ++p) {
      T* orow = out.row(static_cast<std::size_t>(v.row_idx[p])).data();
      const T val = v.values[p];
      for (std::size_t t = 0; t < m; ++t) orow[t] += val * kj[t];
    }
  }
  return out;
}

template <typename T>
DenseMatrix<T> spmm_nt(const CscMatrix<T>& v, const DenseMatrix<T>& kt) {
  if (kt.cols() != v.cols) {
    throw DimensionError("spmm_nt: K row block has " +
                         std::to_string(kt.cols()) + " columns, V has " +
                         std::to_string(v.cols));
  }
  DenseMatrix<T> out(v.rows, kt.rows());
  for (std::size_t a = 0; a < kt.rows(); ++a) {
    const T* ka = kt.row(a).data();
    for (std::size_t j = 0; j < v.cols; ++j) {
      for (auto p = v.col_ptr[j]; p < v.col_ptr[j + 1]; ++p) {
        out(static_cast<std::size_t>(v.row_idx[p]), a) += v.values[p] * ka[j];
      }
    }
  }
  return out;
}

template <typename T>
std::vector<T> mask_select(const DenseMatrix<T>& et,
                           std::span<const ClusterId> cl) {
  if (cl.size() != et.cols()) {
    throw DimensionError("mask_select: label count != columns of E^T");
  }
  std::vector<T> z(cl.size());
  for (std::size_t j = 0; j < cl.size(); ++j) {
    if (cl[j] < 0 || static_cast<std::size_t>(cl[j]) >= et.rows()) {
      throw DimensionError("mask_select: label out of range");
    }
    z[j] = et(static_cast<std::size_t>(cl[j]), j);
  }
  return z;
}

template <typename T>
void spmv_accumulate(const CscMatrix<T>& v, std::span<const T> z,
                     std::size_t col_offset, std::span<T> c) {
  if (col_offset + z.size() > v.cols) {
    throw DimensionError("spmv: z range exceeds V columns");
  }
  if (c.size() != v.rows) throw DimensionError("spmv: output length != k");
  for (std::size_t j = 0; j < z.size(); ++j) {
    const std::size_t col = col_offset + j;
    for (auto p = v.col_ptr[col]; p < v.col_ptr[col + 1]; ++p) {
      c[static_cast<std::size_t>(v.row_idx[p])] += v.values[p] * z[j];
    }
  }
}

template <typename T>
std::vector<T> spmv(const CscMatrix<T>& v, std::span<const T> z,
                    std::size_t col_offset) {
  std::vector<T> c(v.rows, T{0});
  spmv_accumulate<T>(v, z, col_offset, c);
  return c;
}

template <typename T>
void mark_empty_clusters(std::span<T> c, std::span<const std::int64_t> sizes) {
  if (c.size() != sizes.size()) {
    throw DimensionError("mark_empty_clusters: length mismatch");
  }
  for (std::size_t i = 0; i < c.size(); ++i) {
    if (sizes[i] == 0) c[i] = std::numeric_limits<T>::infinity();
  }
}

template <typename T>
DenseMatrix<T> compute_distances(const DenseMatrix<T>& et,
                                 std::span<const T> c) {
  if (c.size() != et.rows()) {
    throw DimensionError("compute_distances: c length != k");
  }
  DenseMatrix<T> dt(et.rows(), et.cols());
  for (std::size_t i = 0; i < et.rows(); ++i) {
    const auto in = et.row(i);
    auto out = dt.row(i);
    for (std::size_t j = 0; j < in.size(); ++j) {
      out[j] = T{-2} * in[j] + c[i];
      if (std::isnan(out[j])) {
        throw NumericError("compute_distances: NaN distance");
      }
    }
  }
  return dt;
}

template <typename T>
Assignments argmin_rows(const DenseMatrix<T>& dt) {
  if (dt.rows() == 0) throw DimensionError("argmin_rows: k must be >= 1");
  Assignments cl(dt.cols(), 0);
  for (std::size_t j = 0; j < dt.cols(); ++j) {
    T best = dt(0, j);
    ClusterId best_i = 0;
    for (std::size_t i = 1; i < dt.rows(); ++i) {
      if (dt(i, j) < best) {
        best = dt(i, j);
        best_i = static_cast<ClusterId>(i);
      }
    }
    cl[j] = best_i;
  }
  return cl;
}

template <typename T>
double shifted_objective(const DenseMatrix<T>& dt,
                         std::span<const ClusterId> cl) {
  if (cl.size() != dt.cols()) {
    throw DimensionError("shifted_objective: label count != columns");
  }
  double sum = 0.0;
  for (std::size_t j = 0; j < cl.size(); ++j) {
    sum += static_cast<double>(dt(static_cast<std::size_t>(cl[j]), j));
  }
  return sum;
}

#define KKM_INSTANTIATE_LINALG(T)                                             \
  template class DenseMatrix<T>;                                              \
  template struct CscMatrix<T>;                                               \
  template DenseMatrix<T> gemm_nt(const DenseMatrix<T>&,                      \
                                  const DenseMatrix<T>&);                     \
  template void gemm_nt_accumulate(const DenseMatrix<T>&,                     \
                                   const DenseMatrix<T>&, DenseMatrix<T>&);   \
  template DenseMatrix<T> apply_kernel(DenseMatrix<T>, const KernelSpec&);    \
  template void apply_kernel_inplace(DenseMatrix<T>&, const KernelSpec&);     \
  template CscMatrix<T> assignment_block(std::span<const ClusterId>,          \
                                         std::span<const std::int64_t>);      \
  template CscMatrix<T> build_assignment_matrix(std::span<const ClusterId>,   \
                                                std::size_t);                 \
  template DenseMatrix<T> spmm(const CscMatrix<T>&, const DenseMatrix<T>&,    \
                               std::size_t);                                  \
  template DenseMatrix<T> spmm_nt(const CscMatrix<T>&, const DenseMatrix<T>&); \
  template std::vector<T> mask_select(const DenseMatrix<T>&,                  \
                                      std::span<const ClusterId>);            \
  template std::vector<T> spmv(const CscMatrix<T>&, std::span<const T>,       \
                               std::size_t);                                  \
  template void spmv_accumulate(const CscMatrix<T>&, std::span<const T>,      \
                                std::size_t, std::span<T>);                   \
  template void mark_empty_clusters(std::span<T>,                             \
                                    std::span<const std::int64_t>);           \
  template DenseMatrix<T> compute_distances(const DenseMatrix<T>&,            \
                                            std::span<const T>);              \
  template Assignments argmin_rows(const DenseMatrix<T>&);                    \
  template double shifted_objective(const DenseMatrix<T>&,                    \
                                    std::span<const ClusterId>);

KKM_INSTANTIATE_LINALG(float)
KKM_INSTANTIATE_LINALG(double)

#undef KKM_INSTANTIATE_LINALG

}  // namespace kkm
