#include "kkm/distributed.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <string>

namespace kkm {

namespace {

constexpr std::array<Algorithm, 4> kAlgorithms = {
    Algorithm::one_d, Algorithm::hybrid_1d, Algorithm::one_point_five_d,
    Algorithm::two_d};

int exact_sqrt(int p) {
  int q = static_cast<int>(std::lround(std::sqrt(static_cast<double>(p))));
  return q * q == p ? q : -1;
}

std::size_t as_size(int v) { return static_cast<std::size_t>(v); }

}  // namespace

std::string_view to_string(Algorithm algo) {
  switch (algo) {
    case Algorithm::one_d: return "1d";
    case Algorithm::hybrid_1d: return "h1d";
    case Algorithm::one_point_five_d: return "1.5d";
    case Algorithm::two_d: return "2d";
  }
  return "?";
}

std::optional<Algorithm> parse_algorithm(std::string_view name) {
  for (auto a : kAlgorithms) {
    if (to_string(a) == name) return a;
  }
  return std::nullopt;
}

std::span<const Algorithm> all_algorithms() { return kAlgorithms; }

TileMap TileMap::one_d_columns(std::size_t rows, std::size_t cols, int ranks) {
  if (ranks < 1 || cols % as_size(ranks) != 0) {
    throw DivisibilityError("1D tiling needs P | cols");
  }
  return TileMap(Scheme::one_d_columns, rows, cols, ranks, 1);
}

TileMap TileMap::two_d_grid(std::size_t rows, std::size_t cols, int ranks) {
  const int q = ranks >= 1 ? exact_sqrt(ranks) : -1;
  if (q < 1) throw DivisibilityError("2D tiling needs a perfect-square P");
  if (rows % as_size(q) != 0 || cols % as_size(q) != 0) {
    throw DivisibilityError("2D tiling needs sqrt(P) | rows and cols");
  }
  return TileMap(Scheme::two_d_grid, rows, cols, ranks, q);
}

BlockRange TileMap::row_range(int rank) const {
  if (rank < 0 || rank >= ranks_) throw std::out_of_range("rank");
  if (scheme_ == Scheme::one_d_columns) return {0, rows_};
  const std::size_t h = rows_ / as_size(side_);
  const std::size_t i = as_size(rank % side_);
  return {i * h, (i + 1) * h};
}

BlockRange TileMap::col_range(int rank) const {
  if (rank < 0 || rank >= ranks_) throw std::out_of_range("rank");
  if (scheme_ == Scheme::one_d_columns) {
    const std::size_t w = cols_ / as_size(ranks_);
    return {as_size(rank) * w, (as_size(rank) + 1) * w};
  }
  const std::size_t w = cols_ / as_size(side_);
  const std::size_t j = as_size(rank / side_);
  return {j * w, (j + 1) * w};
}

std::optional<std::string> divisibility_problem(Algorithm algo, std::size_t n,
                                                std::size_t k, int ranks) {
  const std::string tag = std::string(to_string(algo)) + ": ";
  if (ranks < 1) return tag + "P must be >= 1";
  if (k < 1) return tag + "k must be >= 1";
  if (n < k) return tag + "need n >= k";
  if (n % as_size(ranks) != 0) {
    return tag + "P=" + std::to_string(ranks) + " does not divide n=" +
           std::to_string(n);
  }
  if (algo == Algorithm::one_d) return std::nullopt;
  const int q = exact_sqrt(ranks);
  if (q < 1) return tag + "P=" + std::to_string(ranks) + " is not a square";
  if (k % as_size(q) != 0) {
    return tag + "sqrt(P)=" + std::to_string(q) + " does not divide k=" +
           std::to_string(k);
  }
  return std::nullopt;
}

void require_divisible(Algorithm algo, std::size_t n, std::size_t k,
                       int ranks) {
  if (auto why = divisibility_problem(algo, n, k, ranks)) {
    throw DivisibilityError(*why);
  }
}

namespace dist {

template <typename T>
DenseMatrix<T> gemm_1d(fabric::Communicator& comm,
                       const DenseMatrix<T>& local_points,
                       const KernelSpec& kernel) {
  const std::size_t d = local_points.cols();
  auto all = comm.allgatherv<T>(comm.world(), local_points.data());
  const std::size_t n = all.size() / std::max<std::size_t>(d, 1);
  const DenseMatrix<T> points(n, d, std::move(all));
  auto kt = gemm_nt(local_points, points);
  apply_kernel_inplace(kt, kernel);
  return kt;
}

template <typename T>
SummaOperands<T> summa_operands(const DenseMatrix<T>& points,
                                const fabric::Grid& grid, int rank) {
  const std::size_t q = as_size(grid.side());
  const std::size_t n = points.rows();
  const std::size_t d = points.cols();
  const std::size_t i = as_size(grid.grid_row(rank));
  const std::size_t j = as_size(grid.grid_col(rank));
  const std::size_t h = n / q;
  const std::size_t w = (d + q - 1) / q;
  auto chunk = [&](std::size_t s) {
    const std::size_t b = std::min(s * w, d);
    return BlockRange{b, std::min(b + w, d)};
  };
  const auto cj = chunk(j);
  const auto ci = chunk(i);
  return {points.block(i * h, h, cj.begin, cj.size()),
          points.block(j * h, h, ci.begin, ci.size()), n, d};
}

template <typename T>
DenseMatrix<T> summa_gemm(fabric::Communicator& comm,
                          const SummaOperands<T>& ops,
                          const KernelSpec& kernel) {
  const auto& grid = comm.grid();
  const int q = grid.side();
  const int i = grid.grid_row(comm.rank());
  const int j = grid.grid_col(comm.rank());
  const std::size_t h = ops.n / as_size(q);
  const std::size_t w = (ops.d + as_size(q) - 1) / as_size(q);

  DenseMatrix<T> tile(h, h);
  for (int s = 0; s < q; ++s) {
    const std::size_t b = std::min(as_size(s) * w, ops.d);
    const std::size_t width = std::min(b + w, ops.d) - b;

    const int a_root = grid.rank_at(i, s);
    std::vector<T> abuf;
    if (comm.rank() == a_root) abuf.assign(ops.a.data().begin(), ops.a.data().end());
    comm.broadcast(comm.row(), a_root, abuf);

    const int b_root = grid.rank_at(s, j);
    std::vector<T> bbuf;
    if (comm.rank() == b_root) bbuf.assign(ops.b.data().begin(), ops.b.data().end());
    comm.broadcast(comm.column(), b_root, bbuf);

    gemm_nt_accumulate(DenseMatrix<T>(h, width, std::move(abuf)),
                       DenseMatrix<T>(h, width, std::move(bbuf)), tile);
  }
  apply_kernel_inplace(tile, kernel);
  return tile;
}

template <typename T>
DenseMatrix<T> redistribute_2d_to_1d(fabric::Communicator& comm,
                                     const DenseMatrix<T>& tile,
                                     std::size_t n) {
  const auto& grid = comm.grid();
  const int q = grid.side();
  const int world = grid.size();
  const std::size_t h = n / as_size(q);
  const std::size_t nb = n / as_size(world);
  const int i = grid.grid_row(comm.rank());

  std::vector<std::vector<T>> out(as_size(world));
  for (int l = 0; l < q; ++l) {
    out[as_size(i * q + l)] =
        std::move(tile.block(as_size(l) * nb, nb, 0, h)).release();
  }
  const auto in = comm.alltoallv(comm.world(), out);

  // Rows of 1D block p live in tile row-block p / q, spread over all q tile
  // columns.
  const int src_row = comm.rank() / q;
  DenseMatrix<T> kt(nb, n);
  for (int jj = 0; jj < q; ++jj) {
    const auto& part = in[as_size(grid.rank_at(src_row, jj))];
    kt.assign_block(0, as_size(jj) * h, DenseMatrix<T>(nb, h, part));
  }
  return kt;
}

namespace {

// Reorders a k x (q*nb) matrix into q contiguous k x nb column blocks.
template <typename T>
std::vector<T> column_blocks(const DenseMatrix<T>& m, std::size_t q) {
  const std::size_t nb = m.cols() / q;
  std::vector<T> out;
  out.reserve(m.size());
  for (std::size_t l = 0; l < q; ++l) {
    for (std::size_t r = 0; r < m.rows(); ++r) {
      const auto row = m.row(r);
      out.insert(out.end(), row.begin() + static_cast<std::ptrdiff_t>(l * nb),
                 row.begin() + static_cast<std::ptrdiff_t>((l + 1) * nb));
    }
  }
  return out;
}

}  // namespace

template <typename T>
DenseMatrix<T> spmm_15d(fabric::Communicator& comm,
                        std::span<const ClusterId> local_labels,
                        std::span<const std::int64_t> sizes,
                        const DenseMatrix<T>& tile, bool skip_e_reduce) {
  const auto& grid = comm.grid();
  const std::size_t q = as_size(grid.side());
  const int i = grid.grid_row(comm.rank());
  const int j = grid.grid_col(comm.rank());
  const std::size_t k = sizes.size();
  const std::size_t nb = local_labels.size();

  std::vector<ClusterId> row_labels;
  {
    fabric::Communicator::PhaseScope ps(comm, std::string(phase::v_exchange));
    auto gathered =
        comm.gather(comm.column(), grid.rank_at(j, j), local_labels);
    const int root = grid.rank_at(i, i);
    if (comm.rank() == root) row_labels = std::move(gathered);
    comm.broadcast(comm.row(), root, row_labels);
  }

  const auto v = assignment_block<T>(row_labels, sizes);
  const auto partial = spmm(v, tile, 0);

  fabric::Communicator::PhaseScope ps(comm, std::string(phase::e_reduce));
  auto blocks = column_blocks(partial, q);
  if (skip_e_reduce) {
    const auto first = blocks.begin() + static_cast<std::ptrdiff_t>(as_size(i) * k * nb);
    return DenseMatrix<T>(k, nb, std::vector<T>(first, first + static_cast<std::ptrdiff_t>(k * nb)));
  }
  return DenseMatrix<T>(k, nb,
                        comm.reduce_scatter_block<T>(comm.column(), blocks));
}

template <typename T>
DenseMatrix<T> spmm_2d_bstationary(fabric::Communicator& comm,
                                   std::span<const ClusterId> column_labels,
                                   std::span<const std::int64_t> sizes,
                                   const DenseMatrix<T>& tile,
                                   bool skip_e_reduce) {
  const auto& grid = comm.grid();
  const std::size_t q = as_size(grid.side());
  const int i = grid.grid_row(comm.rank());
  const std::size_t k = sizes.size();
  const std::size_t kc = k / q;
  const std::size_t h = column_labels.size();

  // Rank (i, i) holds column block i, which is row block i.
  std::vector<ClusterId> row_labels;
  {
    fabric::Communicator::PhaseScope ps(comm, std::string(phase::v_exchange));
    const int root = grid.rank_at(i, i);
    if (comm.rank() == root) {
      row_labels.assign(column_labels.begin(), column_labels.end());
    }
    comm.broadcast(comm.row(), root, row_labels);
  }

  const auto v = assignment_block<T>(row_labels, sizes);
  const auto partial = spmm(v, tile, 0);

  fabric::Communicator::PhaseScope ps(comm, std::string(phase::e_reduce));
  if (skip_e_reduce) return partial.block(as_size(i) * kc, kc, 0, h);
  return DenseMatrix<T>(
      kc, h, comm.reduce_scatter_block<T>(comm.column(), partial.data()));
}

template <typename T>
Update2d update_2d(fabric::Communicator& comm, const DenseMatrix<T>& et_chunk,
                   std::span<const ClusterId> column_labels,
                   std::span<const std::int64_t> sizes) {
  const auto& grid = comm.grid();
  const std::size_t k = sizes.size();
  const std::size_t kc = et_chunk.rows();
  const std::size_t h = column_labels.size();
  const std::size_t off = as_size(grid.grid_row(comm.rank())) * kc;
  auto in_chunk = [&](ClusterId l) {
    return as_size(l) >= off && as_size(l) < off + kc;
  };

  const auto v = assignment_block<T>(column_labels, sizes);
  std::vector<T> c(kc, T{0});
  for (std::size_t m = 0; m < h; ++m) {
    const ClusterId l = column_labels[m];
    if (in_chunk(l)) c[as_size(l) - off] += v.values[m] * et_chunk(as_size(l) - off, m);
  }
  {
    fabric::Communicator::PhaseScope ps(comm, std::string(phase::c_allreduce));
    c = comm.allreduce_sum<T>(comm.row(), c);
  }
  mark_empty_clusters<T>(c, sizes.subspan(off, kc));
  const auto dt = compute_distances<T>(et_chunk, c);

  Update2d out;
  for (std::size_t m = 0; m < h; ++m) {
    const ClusterId l = column_labels[m];
    if (in_chunk(l)) out.objective_partial += static_cast<double>(dt(as_size(l) - off, m));
  }

  std::vector<fabric::MinLoc<T>> local(h);
  for (std::size_t m = 0; m < h; ++m) {
    std::size_t best = 0;
    for (std::size_t r = 1; r < kc; ++r) {
      if (dt(r, m) < dt(best, m)) best = r;
    }
    local[m] = {dt(best, m), static_cast<std::int64_t>(off + best)};
  }

  fabric::Communicator::PhaseScope ps(comm, std::string(phase::assign_update));
  const auto winners = comm.allreduce_minloc<T>(comm.column(), local);
  out.column_labels.resize(h);
  for (std::size_t m = 0; m < h; ++m) {
    out.column_labels[m] = static_cast<ClusterId>(winners[m].index);
  }
  const auto mine = cluster_sizes(out.column_labels, k);
  out.sizes = comm.allreduce_sum<std::int64_t>(comm.row(), mine);
  return out;
}

}  // namespace dist

namespace {

struct RankResult {
  std::vector<Assignments> labels;  // own 1D block after each iteration
  std::vector<double> objectives;
  bool converged = false;
  std::size_t spmm_nonzeros = 0;
};

struct LocalUpdate {
  Assignments labels;
  double objective_partial = 0.0;
  std::size_t changed = 0;
};

// Given this rank's 1D block of E^T, finishes the iteration for its points.
template <typename T>
LocalUpdate finish_1d(fabric::Communicator& comm, const DenseMatrix<T>& et,
                      std::span<const ClusterId> labels,
                      std::span<const std::int64_t> sizes, bool skip_c) {
  const auto v = assignment_block<T>(labels, sizes);
  const auto z = mask_select(et, labels);
  auto c = spmv<T>(v, z, 0);
  if (!skip_c) {
    fabric::Communicator::PhaseScope ps(comm, std::string(phase::c_allreduce));
    c = comm.allreduce_sum<T>(comm.world(), c);
  }
  mark_empty_clusters<T>(c, sizes);
  const auto dt = compute_distances<T>(et, c);
  LocalUpdate out;
  out.objective_partial = shifted_objective(dt, labels);
  out.labels = argmin_rows(dt);
  for (std::size_t m = 0; m < labels.size(); ++m) {
    if (out.labels[m] != labels[m]) ++out.changed;
  }
  return out;
}

// Sums the objective over the world; the changed count rides along only
// when it decides early stopping. Returns true to stop.
bool record_iteration(fabric::Communicator& comm, RankResult& res,
                      Assignments own_labels, double objective_partial,
                      std::size_t changed, const FitConfig& cfg) {
  fabric::Communicator::PhaseScope ps(comm, std::string(phase::plumbing));
  std::vector<double> local = {objective_partial};
  if (cfg.stop_on_no_change) local.push_back(static_cast<double>(changed));
  const auto total = comm.allreduce_sum<double>(comm.world(), local);
  res.labels.push_back(std::move(own_labels));
  res.objectives.push_back(total[0]);
  if (cfg.stop_on_no_change && total[1] == 0.0) {
    res.converged = true;
    return true;
  }
  return false;
}

template <typename T>
RankResult run_1d_family(fabric::Communicator& comm, Algorithm algo,
                         const DenseMatrix<T>& points, const FitConfig& cfg,
                         const DistOptions& opts) {
  const std::size_t n = points.rows();
  const std::size_t world = as_size(comm.grid().size());
  const std::size_t nb = n / world;
  const std::size_t p = as_size(comm.rank());

  DenseMatrix<T> kt;
  DenseMatrix<T> tile;
  {
    fabric::Communicator::PhaseScope ps(comm, std::string(phase::k_compute));
    if (algo == Algorithm::one_d) {
      kt = dist::gemm_1d(comm, points.block(p * nb, nb, 0, points.cols()),
                         cfg.kernel);
    } else {
      tile = dist::summa_gemm(
          comm, dist::summa_operands(points, comm.grid(), comm.rank()),
          cfg.kernel);
    }
  }
  if (algo == Algorithm::hybrid_1d) {
    fabric::Communicator::PhaseScope ps(comm,
                                        std::string(phase::k_redistribute));
    kt = dist::redistribute_2d_to_1d(comm, tile, n);
    tile = {};
  }

  const auto init = round_robin_init(n, cfg.k);
  Assignments labels(init.begin() + static_cast<std::ptrdiff_t>(p * nb),
                     init.begin() + static_cast<std::ptrdiff_t>((p + 1) * nb));

  RankResult res;
  for (std::size_t it = 0; it < cfg.max_iterations; ++it) {
    DenseMatrix<T> et;
    std::vector<std::int64_t> sizes;
    if (algo == Algorithm::one_point_five_d) {
      {
        fabric::Communicator::PhaseScope ps(comm,
                                            std::string(phase::v_exchange));
        sizes = comm.allreduce_sum<std::int64_t>(
            comm.world(), cluster_sizes(labels, cfg.k));
      }
      et = dist::spmm_15d(comm, labels, sizes, tile, opts.skip_e_reduce);
      if (it == 0) res.spmm_nonzeros = n / as_size(comm.grid().side());
    } else {
      Assignments all;
      {
        fabric::Communicator::PhaseScope ps(comm,
                                            std::string(phase::v_exchange));
        all = comm.allgatherv<ClusterId>(comm.world(), labels);
      }
      sizes = cluster_sizes(all, cfg.k);
      const auto v = assignment_block<T>(all, sizes);
      if (it == 0) res.spmm_nonzeros = v.nnz();
      et = spmm_nt(v, kt);
    }
    // 1D E^T needs no reduction, so the fault hook drops the c reduction.
    const bool skip_c = opts.skip_e_reduce && algo != Algorithm::one_point_five_d;
    auto upd = finish_1d(comm, et, labels, sizes, skip_c);
    labels = upd.labels;
    if (record_iteration(comm, res, std::move(upd.labels),
                         upd.objective_partial, upd.changed, cfg)) {
      break;
    }
  }
  return res;
}

template <typename T>
RankResult run_2d(fabric::Communicator& comm, const DenseMatrix<T>& points,
                  const FitConfig& cfg, const DistOptions& opts) {
  const auto& grid = comm.grid();
  const std::size_t n = points.rows();
  const std::size_t q = as_size(grid.side());
  const std::size_t h = n / q;
  const std::size_t nb = h / q;
  const std::size_t i = as_size(grid.grid_row(comm.rank()));
  const std::size_t j = as_size(grid.grid_col(comm.rank()));

  DenseMatrix<T> tile;
  {
    fabric::Communicator::PhaseScope ps(comm, std::string(phase::k_compute));
    tile = dist::summa_gemm(
        comm, dist::summa_operands(points, grid, comm.rank()), cfg.kernel);
  }

  const auto init = round_robin_init(n, cfg.k);
  auto sizes = cluster_sizes(init, cfg.k);
  Assignments col(init.begin() + static_cast<std::ptrdiff_t>(j * h),
                  init.begin() + static_cast<std::ptrdiff_t>((j + 1) * h));

  RankResult res;
  for (std::size_t it = 0; it < cfg.max_iterations; ++it) {
    const auto et =
        dist::spmm_2d_bstationary(comm, col, sizes, tile, opts.skip_e_reduce);
    if (it == 0) res.spmm_nonzeros = h;
    auto upd = dist::update_2d(comm, et, col, sizes);

    // Rank (i, j) reports sub-piece i of column block j, its 1D block.
    std::size_t changed = 0;
    for (std::size_t m = i * nb; m < (i + 1) * nb; ++m) {
      if (upd.column_labels[m] != col[m]) ++changed;
    }
    const auto lo = upd.column_labels.begin() + static_cast<std::ptrdiff_t>(i * nb);
    Assignments own(lo, lo + static_cast<std::ptrdiff_t>(nb));
    col = std::move(upd.column_labels);
    sizes = std::move(upd.sizes);
    if (record_iteration(comm, res, std::move(own), upd.objective_partial,
                         changed, cfg)) {
      break;
    }
  }
  return res;
}

}  // namespace

template <typename T>
DistRunResult run_clustering(Algorithm algo, const DenseMatrix<T>& points,
                             const FitConfig& cfg, int ranks,
                             DistOptions options) {
  cfg.validate();
  require_divisible(algo, points.rows(), cfg.k, ranks);
  const auto grid = algo == Algorithm::one_d ? fabric::Grid::one_d(ranks)
                                             : fabric::Grid::two_d(ranks);

  auto outcome = fabric::run_ranks<RankResult>(
      grid,
      [&](fabric::Communicator& comm) {
        return algo == Algorithm::two_d
                   ? run_2d(comm, points, cfg, options)
                   : run_1d_family(comm, algo, points, cfg, options);
      },
      fabric::RunOptions{options.scheduler});

  DistRunResult out;
  out.ledger = std::move(outcome.ledger);
  const auto& r0 = outcome.results.front();
  Assignments prev = round_robin_init(points.rows(), cfg.k);
  for (std::size_t t = 0; t < r0.objectives.size(); ++t) {
    IterationRecord rec;
    rec.shifted_objective = r0.objectives[t];
    for (const auto& r : outcome.results) {
      rec.assignments.insert(rec.assignments.end(), r.labels[t].begin(),
                             r.labels[t].end());
    }
    for (std::size_t j = 0; j < prev.size(); ++j) {
      if (rec.assignments[j] != prev[j]) ++rec.changed_points;
    }
    prev = rec.assignments;
    out.trace.iterations.push_back(std::move(rec));
  }
  out.trace.converged = r0.converged;
  for (const auto& r : outcome.results) {
    out.spmm_nonzeros.push_back(r.spmm_nonzeros);
  }
  return out;
}

#define KKM_INSTANTIATE_DIST(T)                                               \
  template DistRunResult run_clustering(Algorithm, const DenseMatrix<T>&,     \
                                        const FitConfig&, int, DistOptions);  \
  namespace dist {                                                            \
  template DenseMatrix<T> gemm_1d(fabric::Communicator&,                      \
                                  const DenseMatrix<T>&, const KernelSpec&);  \
  template SummaOperands<T> summa_operands(const DenseMatrix<T>&,             \
                                           const fabric::Grid&, int);         \
  template DenseMatrix<T> summa_gemm(fabric::Communicator&,                   \
                                     const SummaOperands<T>&,                 \
                                     const KernelSpec&);                      \
  template DenseMatrix<T> redistribute_2d_to_1d(fabric::Communicator&,        \
                                                const DenseMatrix<T>&,        \
                                                std::size_t);                 \
  template DenseMatrix<T> spmm_15d(fabric::Communicator&,                     \
                                   std::span<const ClusterId>,                \
                                   std::span<const std::int64_t>,             \
                                   const DenseMatrix<T>&, bool);              \
  template DenseMatrix<T> spmm_2d_bstationary(                                \
      fabric::Communicator&, std::span<const ClusterId>,                      \
      std::span<const std::int64_t>, const DenseMatrix<T>&, bool);            \
  template Update2d update_2d(fabric::Communicator&, const DenseMatrix<T>&,   \
                              std::span<const ClusterId>,                     \
                              std::span<const std::int64_t>);                 \
  }

KKM_INSTANTIATE_DIST(float)
KKM_INSTANTIATE_DIST(double)

#undef KKM_INSTANTIATE_DIST

}  // namespace kkm
