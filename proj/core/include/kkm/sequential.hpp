#pragma once

// Single-rank exact Kernel K-means. fit_full materializes the n x n kernel
// matrix; fit_sliding_window recomputes b x n row blocks of K each iteration
// and never holds more than b*n kernel entries. Both serve as the oracle for
// the distributed schedules.

#include <cstddef>
#include <optional>
#include <vector>

#include "kkm/linalg.hpp"

namespace kkm {

struct IterationRecord {
  Assignments assignments;  // labels after this iteration's update
  double shifted_objective = 0.0;  // of the clustering entering the iteration
  std::size_t changed_points = 0;

  bool operator==(const IterationRecord&) const = default;
};

struct ClusterTrace {
  std::vector<IterationRecord> iterations;
  bool converged = false;

  // Sliding-window instrumentation; zero for fit_full and distributed runs.
  std::size_t kernel_blocks_evaluated = 0;
  std::size_t peak_kernel_entries = 0;

  std::size_t iterations_run() const noexcept { return iterations.size(); }
  const Assignments& final_assignments() const;
};

struct FitConfig {
  std::size_t k = 2;
  std::size_t max_iterations = 20;
  KernelSpec kernel;
  bool stop_on_no_change = false;
  std::optional<std::size_t> window_block;

  void validate() const;
};

/// cl[j] = j mod k.
Assignments round_robin_init(std::size_t n, std::size_t k);

template <typename T>
ClusterTrace fit_full(const DenseMatrix<T>& points, const FitConfig& cfg);

template <typename T>
ClusterTrace fit_sliding_window(const DenseMatrix<T>& points,
                                const FitConfig& cfg);

}  // namespace kkm
