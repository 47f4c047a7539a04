#include <gtest/gtest.h>

#include <map>
#include <string>

#include "kkm/distributed.hpp"
#include "kkm/synthetic.hpp"
#include "oracles.hpp"

using namespace kkm;
namespace fab = kkm::fabric;

namespace {

DenseMatrix<double> blobs(std::size_t n, std::size_t d, std::size_t k, std::uint64_t seed) {
  return generate_synthetic(SyntheticKind::blobs, n, d, k, seed).points;
}

FitConfig config(std::size_t k, std::size_t iters, KernelSpec kernel = KernelSpec::linear()) {
  FitConfig cfg;
  cfg.k = k;
  cfg.max_iterations = iters;
  cfg.kernel = kernel;
  return cfg;
}

template <typename T>
DenseMatrix<T> sequential_k(const DenseMatrix<T>& pts, const KernelSpec& spec) {
  return apply_kernel(gemm_nt(pts, pts), spec);
}

using PhaseTable = std::map<std::string, fab::Tally>;

PhaseTable table(const fab::CommLedger& ledger) {
  PhaseTable t;
  for (const auto& ph : ledger.phases()) t[ph] = ledger.phase_total(ph);
  return t;
}

}  // namespace

TEST(Algorithm, Names) {
  for (auto a : all_algorithms()) EXPECT_EQ(parse_algorithm(to_string(a)), a);
  EXPECT_EQ(to_string(Algorithm::one_point_five_d), "1.5d");
  EXPECT_FALSE(parse_algorithm("3d"));
}

TEST(TileMapTest, Ranges) {
  const auto one = TileMap::one_d_columns(16, 16, 4);
  EXPECT_EQ(one.col_range(2), (BlockRange{8, 12}));
  EXPECT_EQ(one.row_range(2), (BlockRange{0, 16}));
  const auto two = TileMap::two_d_grid(16, 16, 4);
  // rank 2 is grid position (0, 1)
  EXPECT_EQ(two.row_range(2), (BlockRange{0, 8}));
  EXPECT_EQ(two.col_range(2), (BlockRange{8, 16}));
  EXPECT_EQ(two.row_range(1), (BlockRange{8, 16}));
  EXPECT_EQ(two.col_range(1), (BlockRange{0, 8}));
}

TEST(Divisibility, Rules) {
  EXPECT_FALSE(divisibility_problem(Algorithm::one_d, 16, 3, 4));
  EXPECT_TRUE(divisibility_problem(Algorithm::one_d, 18, 2, 4));
  EXPECT_FALSE(divisibility_problem(Algorithm::one_d, 18, 2, 3));
  for (auto a : {Algorithm::hybrid_1d, Algorithm::one_point_five_d, Algorithm::two_d}) {
    EXPECT_TRUE(divisibility_problem(a, 18, 2, 3)) << to_string(a);
    EXPECT_TRUE(divisibility_problem(a, 16, 3, 4)) << to_string(a);
    EXPECT_FALSE(divisibility_problem(a, 16, 4, 16)) << to_string(a);
  }
  EXPECT_THROW(require_divisible(Algorithm::two_d, 16, 2, 16), DivisibilityError);
  EXPECT_THROW(run_clustering<double>(Algorithm::two_d, blobs(16, 2, 2, 1), config(2, 2), 16),
               DivisibilityError);
}

TEST(Gemm1d, RowBlocksMatchSequentialKernel) {
  const auto pts = blobs(32, 5, 2, 4);
  const auto spec = KernelSpec::polynomial(0.5, 1.0, 2);
  const auto k = sequential_k(pts, spec);
  const auto out = fab::run_ranks<DenseMatrix<double>>(fab::Grid::one_d(4), [&](fab::Communicator& c) {
    return dist::gemm_1d(c, pts.block(static_cast<std::size_t>(c.rank()) * 8, 8, 0, 5), spec);
  });
  for (int p = 0; p < 4; ++p) EXPECT_EQ(out.results[p], k.block(p * 8u, 8, 0, 32)) << p;
}

TEST(Summa, TilesMatchSequentialKernelBitwise) {
  for (std::size_t d : {1u, 3u, 5u, 8u}) {
    const auto pts = blobs(24, d, 3, 9);
    const auto k = sequential_k(pts, KernelSpec::linear());
    const auto grid = fab::Grid::two_d(4);
    const auto out = fab::run_ranks<DenseMatrix<double>>(grid, [&](fab::Communicator& c) {
      return dist::summa_gemm(c, dist::summa_operands(pts, grid, c.rank()), KernelSpec::linear());
    });
    for (int r = 0; r < 4; ++r) {
      const auto i = static_cast<std::size_t>(grid.grid_row(r));
      const auto j = static_cast<std::size_t>(grid.grid_col(r));
      EXPECT_EQ(out.results[r], k.block(i * 12, 12, j * 12, 12)) << "d=" << d << " rank " << r;
    }
  }
}

TEST(Redistribute, MovesTilesToRowBlocks) {
  const auto pts = blobs(8, 2, 2, 3);
  const auto k = sequential_k(pts, KernelSpec::linear());
  const auto grid = fab::Grid::two_d(4);
  const auto out = fab::run_ranks<DenseMatrix<double>>(grid, [&](fab::Communicator& c) {
    c.set_phase("r");
    const auto i = static_cast<std::size_t>(grid.grid_row(c.rank()));
    const auto j = static_cast<std::size_t>(grid.grid_col(c.rank()));
    return dist::redistribute_2d_to_1d(c, k.block(i * 4, 4, j * 4, 4), 8);
  });
  for (int p = 0; p < 4; ++p) EXPECT_EQ(out.results[p], k.block(p * 2u, 2, 0, 8));
  // 48 of the 64 entries leave their rank.
  EXPECT_EQ(out.ledger.phase_total("r").words, 48u);
}

TEST(Distributed, SingleRankEqualsSequential) {
  const auto pts = blobs(24, 3, 3, 2);
  const auto cfg = config(3, 6, KernelSpec::polynomial(0.3, 1.0, 2));
  const auto seq = fit_full(pts, cfg);
  for (auto a : all_algorithms()) {
    const auto r = run_clustering(a, pts, cfg, 1);
    EXPECT_EQ(r.trace.iterations, seq.iterations) << to_string(a);
    EXPECT_EQ(r.ledger.total(), fab::Tally{}) << to_string(a);
  }
}

TEST(Distributed, MatchesSequentialAcrossRanks) {
  for (std::uint64_t seed : {1u, 2u}) {
    const auto pts = blobs(64, 4, 4, seed);
    for (auto kernel : {KernelSpec::linear(), KernelSpec::polynomial(0.1, 1.0, 2)}) {
      const auto cfg = config(4, 8, kernel);
      const auto seq = fit_full(pts, cfg);
      for (auto a : all_algorithms()) {
        for (int p : {4, 16}) {
          const auto r = run_clustering(a, pts, cfg, p);
          ASSERT_EQ(r.trace.iterations.size(), seq.iterations.size());
          for (std::size_t t = 0; t < seq.iterations.size(); ++t) {
            EXPECT_EQ(r.trace.iterations[t].assignments, seq.iterations[t].assignments)
                << to_string(a) << " P=" << p << " t=" << t;
            EXPECT_NEAR(r.trace.iterations[t].shifted_objective, seq.iterations[t].shifted_objective,
                        1e-9 * std::abs(seq.iterations[t].shifted_objective));
          }
        }
      }
    }
  }
}

TEST(Distributed, SinglePrecisionMatchesSequentialLabels) {
  const auto pts64 = blobs(32, 3, 2, 6);
  DenseMatrix<float> pts(32, 3);
  for (std::size_t i = 0; i < pts.size(); ++i) pts.data()[i] = static_cast<float>(pts64.data()[i]);
  const auto cfg = config(2, 5);
  const auto seq = fit_full(pts, cfg);
  for (auto a : all_algorithms())
    EXPECT_EQ(run_clustering(a, pts, cfg, 4).trace.final_assignments(), seq.final_assignments());
}

TEST(Distributed, StopOnNoChange) {
  const auto pts = blobs(32, 2, 2, 8);
  auto cfg = config(2, 50);
  cfg.stop_on_no_change = true;
  const auto seq = fit_full(pts, cfg);
  ASSERT_TRUE(seq.converged);
  for (auto a : all_algorithms()) {
    const auto r = run_clustering(a, pts, cfg, 4);
    EXPECT_TRUE(r.trace.converged);
    ASSERT_EQ(r.trace.iterations.size(), seq.iterations.size()) << to_string(a);
    for (std::size_t t = 0; t < seq.iterations.size(); ++t) {
      EXPECT_EQ(r.trace.iterations[t].assignments, seq.iterations[t].assignments);
      EXPECT_EQ(r.trace.iterations[t].changed_points, seq.iterations[t].changed_points);
    }
  }
}

TEST(Distributed, SchedulersAgree) {
  const auto pts = blobs(32, 3, 4, 12);
  const auto cfg = config(4, 5);
  for (auto a : all_algorithms()) {
    const auto t = run_clustering(a, pts, cfg, 4, {fab::Scheduler::threads});
    const auto s = run_clustering(a, pts, cfg, 4, {fab::Scheduler::serialized});
    EXPECT_EQ(t.trace.iterations, s.trace.iterations);
    EXPECT_EQ(t.ledger, s.ledger);
  }
}

TEST(Distributed, FaultHookBreaksEquivalence) {
  const auto pts = blobs(32, 3, 4, 12);
  const auto cfg = config(4, 3);
  const auto seq = fit_full(pts, cfg);
  for (auto a : all_algorithms()) {
    const auto r = run_clustering(a, pts, cfg, 4, {fab::Scheduler::threads, true});
    EXPECT_NE(r.trace.iterations[0], seq.iterations[0]) << to_string(a);
  }
}

// Hand-derived from the counting rules for P=4 (q=2), n=16, d=4, k=2, one
// iteration. Points per 1D block: 4. SUMMA operand: 8 x 2 per broadcast.
TEST(Ledger, ExactPerPhaseTotals) {
  const auto pts = blobs(16, 4, 2, 5);
  const auto cfg = config(2, 1);
  const std::map<Algorithm, PhaseTable> expected = {
      {Algorithm::one_d,
       {{"K-compute", {12, 192}}, {"V-exchange", {12, 48}}, {"c-allreduce", {24, 24}},
        {"plumbing", {24, 24}}}},
      {Algorithm::hybrid_1d,
       {{"K-compute", {8, 128}}, {"K-redistribute", {6, 192}}, {"V-exchange", {12, 48}},
        {"c-allreduce", {24, 24}}, {"plumbing", {24, 24}}}},
      {Algorithm::one_point_five_d,
       {{"K-compute", {8, 128}}, {"V-exchange", {28, 48}}, {"E-reduce", {4, 32}},
        {"c-allreduce", {24, 24}}, {"plumbing", {24, 24}}}},
      {Algorithm::two_d,
       {{"K-compute", {8, 128}}, {"V-exchange", {2, 16}}, {"E-reduce", {4, 32}},
        {"c-allreduce", {8, 8}}, {"assign-update", {16, 72}}, {"plumbing", {24, 24}}}},
  };
  for (const auto& [algo, want] : expected) {
    const auto r = run_clustering(algo, pts, cfg, 4);
    EXPECT_EQ(table(r.ledger), want) << to_string(algo);
  }
  const auto two = run_clustering(Algorithm::two_d, pts, cfg, 4);
  for (int p = 0; p < 4; ++p) EXPECT_EQ(two.ledger.phase_rank("assign-update", p), (fab::Tally{4, 18}));
  const auto h1d = run_clustering(Algorithm::hybrid_1d, pts, cfg, 4);
  EXPECT_EQ(h1d.ledger.max_rank_words("K-redistribute"), 64u);
}

TEST(Ledger, LoopPhasesScaleWithIterations) {
  const auto pts = blobs(16, 4, 2, 5);
  for (auto a : all_algorithms()) {
    const auto one = table(run_clustering(a, pts, config(2, 1), 4).ledger);
    const auto three = table(run_clustering(a, pts, config(2, 3), 4).ledger);
    for (const auto& [ph, t] : one) {
      const bool setup = ph == "K-compute" || ph == "K-redistribute";
      const std::uint64_t m = setup ? 1 : 3;
      EXPECT_EQ(three.at(ph), (fab::Tally{t.messages * m, t.words * m})) << to_string(a) << " " << ph;
    }
  }
}

TEST(Ledger, AssignUpdateTrafficOnlyIn2d) {
  const auto pts = blobs(64, 3, 4, 3);
  for (auto a : all_algorithms()) {
    const auto r = run_clustering(a, pts, config(4, 4), 16);
    const auto words = r.ledger.phase_total("assign-update").words;
    if (a == Algorithm::two_d)
      EXPECT_GT(words, 0u);
    else
      EXPECT_EQ(words, 0u) << to_string(a);
  }
}

TEST(LoadBalance, SpmmNonzerosPerRank) {
  const auto pts = blobs(64, 3, 4, 3);
  const auto cfg = config(4, 1);
  for (auto a : all_algorithms()) {
    const auto r = run_clustering(a, pts, cfg, 16);
    const std::size_t want = (a == Algorithm::one_d || a == Algorithm::hybrid_1d) ? 64 : 16;
    ASSERT_EQ(r.spmm_nonzeros.size(), 16u);
    for (auto z : r.spmm_nonzeros) EXPECT_EQ(z, want) << to_string(a);
  }
}
