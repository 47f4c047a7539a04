#pragma once

// Distributed Kernel K-means over the virtual fabric.
//
// Four schedules share one clustering iteration and differ in how K, V and
// E^T are partitioned:
//
//   one_d             K by 1D blocks from an allgather GEMM; V allgathered
//   hybrid_1d         K from SUMMA, then redistributed 2D -> 1D (alltoallv)
//   one_point_five_d  K stays in SUMMA's 2D tiles; V is 1D and replicated
//                     along grid rows; E^T partials are reduce-scattered
//                     along grid columns split by columns, so E^T lands 1D
//   two_d             K in 2D tiles; E^T reduce-scattered by cluster chunks,
//                     so assignments need a minloc reduction
//
// 1D blocks: rank p owns points [p*n/P, (p+1)*n/P). 2D grids are q x q with
// column-major rank order, rank(i, j) = i + j*q, and tile (i, j) of K covers
// rows [i*n/q, (i+1)*n/q) and columns [j*n/q, (j+1)*n/q).

#include <cstddef>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "kkm/fabric.hpp"
#include "kkm/linalg.hpp"
#include "kkm/sequential.hpp"

namespace kkm {

enum class Algorithm { one_d, hybrid_1d, one_point_five_d, two_d };

/// "1d", "h1d", "1.5d", "2d".
std::string_view to_string(Algorithm algo);
std::optional<Algorithm> parse_algorithm(std::string_view name);
std::span<const Algorithm> all_algorithms();

namespace phase {
inline constexpr std::string_view k_compute = "K-compute";
inline constexpr std::string_view k_redistribute = "K-redistribute";
inline constexpr std::string_view v_exchange = "V-exchange";
inline constexpr std::string_view e_reduce = "E-reduce";
inline constexpr std::string_view c_allreduce = "c-allreduce";
inline constexpr std::string_view assign_update = "assign-update";
/// Objective and convergence bookkeeping; not part of the algorithms.
inline constexpr std::string_view plumbing = "plumbing";
}  // namespace phase

struct BlockRange {
  std::size_t begin = 0;
  std::size_t end = 0;

  std::size_t size() const noexcept { return end - begin; }
  bool operator==(const BlockRange&) const = default;
};

/// Distribution of a rows x cols matrix over virtual ranks.
class TileMap {
 public:
  enum class Scheme { one_d_columns, two_d_grid };

  /// Rank p owns columns [p*cols/P, (p+1)*cols/P) and every row.
  static TileMap one_d_columns(std::size_t rows, std::size_t cols, int ranks);
  /// Rank (i, j) of a q x q column-major grid owns tile (i, j).
  static TileMap two_d_grid(std::size_t rows, std::size_t cols, int ranks);

  Scheme scheme() const noexcept { return scheme_; }
  int ranks() const noexcept { return ranks_; }
  BlockRange row_range(int rank) const;
  BlockRange col_range(int rank) const;

 private:
  TileMap(Scheme scheme, std::size_t rows, std::size_t cols, int ranks,
          int side)
      : scheme_(scheme), rows_(rows), cols_(cols), ranks_(ranks), side_(side) {}

  Scheme scheme_;
  std::size_t rows_;
  std::size_t cols_;
  int ranks_;
  int side_;
};

class DivisibilityError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Reason why (algo, n, k, P) is infeasible, or nullopt.
std::optional<std::string> divisibility_problem(Algorithm algo, std::size_t n,
                                                std::size_t k, int ranks);
void require_divisible(Algorithm algo, std::size_t n, std::size_t k,
                       int ranks);

struct DistOptions {
  fabric::Scheduler scheduler = fabric::Scheduler::threads;
  /// Test hook: drop the E^T reduction so the schedule computes wrong
  /// partial sums. Used as a negative control for verification.
  bool skip_e_reduce = false;
};

struct DistRunResult {
  ClusterTrace trace;
  fabric::CommLedger ledger;
  /// V nonzeros consumed by each rank's local SpMM in the first iteration.
  std::vector<std::size_t> spmm_nonzeros;
};

template <typename T>
DistRunResult run_clustering(Algorithm algo, const DenseMatrix<T>& points,
                             const FitConfig& cfg, int ranks,
                             DistOptions options = {});

// ---------------------------------------------------------------------------
// Rank-level building blocks. Each must be called collectively by every rank
// of the communicator's grid.
namespace dist {

/// Allgathers the points and returns this rank's K row block (n/P x n),
/// which by symmetry is its column block stored transposed.
template <typename T>
DenseMatrix<T> gemm_1d(fabric::Communicator& comm,
                       const DenseMatrix<T>& local_points,
                       const KernelSpec& kernel);

/// Initial SUMMA operands of rank (i, j): a = P[block i, chunk j] and
/// b = P[block j, chunk i], where the feature dimension is split into q
/// chunks of ceil(d/q) (trailing chunks may be empty).
template <typename T>
struct SummaOperands {
  DenseMatrix<T> a;
  DenseMatrix<T> b;
  std::size_t n = 0;
  std::size_t d = 0;
};

template <typename T>
SummaOperands<T> summa_operands(const DenseMatrix<T>& points,
                                const fabric::Grid& grid, int rank);

/// K tile (i, j) via q rounds of row and column broadcasts.
template <typename T>
DenseMatrix<T> summa_gemm(fabric::Communicator& comm,
                          const SummaOperands<T>& operands,
                          const KernelSpec& kernel);

/// Moves K from 2D tiles to 1D row blocks (n/P x n) with one alltoallv.
template <typename T>
DenseMatrix<T> redistribute_2d_to_1d(fabric::Communicator& comm,
                                     const DenseMatrix<T>& tile,
                                     std::size_t n);

/// 1.5D SpMM. Gathers the labels of row block i onto diagonal rank (i, i),
/// broadcasts them along grid row i, multiplies with the local K tile and
/// reduce-scatters the partial E^T along the grid column split by columns.
/// Returns this rank's 1D block of E^T (k x n/P).
template <typename T>
DenseMatrix<T> spmm_15d(fabric::Communicator& comm,
                        std::span<const ClusterId> local_labels,
                        std::span<const std::int64_t> sizes,
                        const DenseMatrix<T>& tile, bool skip_e_reduce = false);

/// 2D B-stationary SpMM on rank (i, j) holding the labels of column block j.
/// The diagonal rank broadcasts row block i's labels along grid row i; the
/// partial V(:, block i) K_ij is reduce-scattered along grid column j by
/// cluster chunks. Returns E^T(chunk i, block j), (k/q x n/q).
template <typename T>
DenseMatrix<T> spmm_2d_bstationary(fabric::Communicator& comm,
                                   std::span<const ClusterId> column_labels,
                                   std::span<const std::int64_t> sizes,
                                   const DenseMatrix<T>& tile,
                                   bool skip_e_reduce = false);

struct Update2d {
  Assignments column_labels;        // new labels of column block j
  std::vector<std::int64_t> sizes;  // global cluster sizes of the new labels
  double objective_partial = 0.0;
};

/// Cluster update for the 2D schedule: c via a row allreduce, local argmin
/// over the cluster chunk, minloc allreduce along the grid column and a
/// cluster-size allreduce along the grid row.
template <typename T>
Update2d update_2d(fabric::Communicator& comm, const DenseMatrix<T>& et_chunk,
                   std::span<const ClusterId> column_labels,
                   std::span<const std::int64_t> sizes);

}  // namespace dist
}  // namespace kkm
