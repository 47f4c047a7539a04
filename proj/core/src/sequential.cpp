#include "kkm/sequential.hpp"

#include <algorithm>
#include <string>

namespace kkm {

const Assignments& ClusterTrace::final_assignments() const {
  if (iterations.empty()) throw std::logic_error("empty cluster trace");
  return iterations.back().assignments;
}

void FitConfig::validate() const {
  if (k < 1) throw std::invalid_argument("k must be >= 1");
  if (max_iterations < 1) {
    throw std::invalid_argument("max_iterations must be >= 1");
  }
  if (window_block && *window_block < 1) {
    throw std::invalid_argument("window block must be >= 1");
  }
}

Assignments round_robin_init(std::size_t n, std::size_t k) {
  if (k < 1 || n < k) {
    throw std::invalid_argument("round_robin_init requires n >= k >= 1");
  }
  Assignments cl(n);
  for (std::size_t j = 0; j < n; ++j) cl[j] = static_cast<ClusterId>(j % k);
  return cl;
}

namespace {

void check_fit_inputs(std::size_t n, const FitConfig& cfg) {
  cfg.validate();
  if (n < cfg.k) {
    throw std::invalid_argument("need n >= k (n=" + std::to_string(n) +
                                ", k=" + std::to_string(cfg.k) + ")");
  }
}

// Everything after E^T is known: z, c, D^T, argmin, bookkeeping. Returns
// true when the loop should stop.
template <typename T>
bool finish_iteration(const DenseMatrix<T>& et, const CscMatrix<T>& v,
                      std::span<const std::int64_t> sizes, Assignments& cl,
                      const FitConfig& cfg, ClusterTrace& trace) {
  const auto z = mask_select(et, cl);
  auto c = spmv<T>(v, z, 0);
  mark_empty_clusters<T>(c, sizes);
  const auto dt = compute_distances<T>(et, c);

  IterationRecord rec;
  rec.shifted_objective = shifted_objective(dt, cl);
  rec.assignments = argmin_rows(dt);
  for (std::size_t j = 0; j < cl.size(); ++j) {
    if (rec.assignments[j] != cl[j]) ++rec.changed_points;
  }
  cl = rec.assignments;
  const bool stop = cfg.stop_on_no_change && rec.changed_points == 0;
  trace.iterations.push_back(std::move(rec));
  if (stop) trace.converged = true;
  return stop;
}

}  // namespace

template <typename T>
ClusterTrace fit_full(const DenseMatrix<T>& points, const FitConfig& cfg) {
  const std::size_t n = points.rows();
  check_fit_inputs(n, cfg);

  const auto kmat = apply_kernel(gemm_nt(points, points), cfg.kernel);
  Assignments cl = round_robin_init(n, cfg.k);

  ClusterTrace trace;
  for (std::size_t it = 0; it < cfg.max_iterations; ++it) {
    const auto sizes = cluster_sizes(cl, cfg.k);
    const auto v = assignment_block<T>(cl, sizes);
    const auto et = spmm(v, kmat, 0);
    if (finish_iteration(et, v, sizes, cl, cfg, trace)) break;
  }
  return trace;
}

template <typename T>
ClusterTrace fit_sliding_window(const DenseMatrix<T>& points,
                                const FitConfig& cfg) {
  const std::size_t n = points.rows();
  check_fit_inputs(n, cfg);
  if (!cfg.window_block || *cfg.window_block == 0) {
    throw std::invalid_argument("sliding window requires a block size >= 1");
  }
  const std::size_t b = std::min(*cfg.window_block, n);

  Assignments cl = round_robin_init(n, cfg.k);
  ClusterTrace trace;
  for (std::size_t it = 0; it < cfg.max_iterations; ++it) {
    const auto sizes = cluster_sizes(cl, cfg.k);
    const auto v = assignment_block<T>(cl, sizes);
    DenseMatrix<T> et(cfg.k, n);
    // Blocks are swept in ascending order; each E^T column only depends on
    // its own K row, so the result matches the materialized product exactly.
    for (std::size_t start = 0; start < n; start += b) {
      const std::size_t len = std::min(b, n - start);
      const auto rows = points.block(start, len, 0, points.cols());
      const auto kblock = apply_kernel(gemm_nt(rows, points), cfg.kernel);
      trace.peak_kernel_entries =
          std::max(trace.peak_kernel_entries, kblock.size());
      ++trace.kernel_blocks_evaluated;
      et.assign_block(0, start, spmm_nt(v, kblock));
    }
    if (finish_iteration(et, v, sizes, cl, cfg, trace)) break;
  }
  return trace;
}

template ClusterTrace fit_full(const DenseMatrix<float>&, const FitConfig&);
template ClusterTrace fit_full(const DenseMatrix<double>&, const FitConfig&);
template ClusterTrace fit_sliding_window(const DenseMatrix<float>&,
                                         const FitConfig&);
template ClusterTrace fit_sliding_window(const DenseMatrix<double>&,
                                         const FitConfig&);

}  // namespace kkm
