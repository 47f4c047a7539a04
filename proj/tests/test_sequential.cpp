#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "kkm/metrics.hpp"
#include "kkm/sequential.hpp"
#include "kkm/synthetic.hpp"
#include "oracles.hpp"

using kkm::DenseMatrix;

namespace {

kkm::FitConfig config(std::size_t k, std::size_t iters,
                      kkm::KernelSpec kernel = kkm::KernelSpec::linear()) {
  kkm::FitConfig cfg;
  cfg.k = k;
  cfg.max_iterations = iters;
  cfg.kernel = kernel;
  return cfg;
}

std::vector<int> as_int(const kkm::Assignments& a) { return {a.begin(), a.end()}; }

// Relative slack is taken on |f| because the shifted objective is usually
// negative.
bool non_increasing(double prev, double cur) {
  return cur <= prev + 1e-6 * std::abs(prev) + 1e-9;
}

}  // namespace

TEST(RoundRobin, Examples) {
  EXPECT_EQ(kkm::round_robin_init(4, 2), (kkm::Assignments{0, 1, 0, 1}));
  EXPECT_EQ(kkm::round_robin_init(3, 1), (kkm::Assignments{0, 0, 0}));
  EXPECT_EQ(kkm::round_robin_init(5, 5), (kkm::Assignments{0, 1, 2, 3, 4}));
  EXPECT_THROW(kkm::round_robin_init(2, 3), std::invalid_argument);
}

TEST(FitConfig, Validation) {
  auto cfg = config(0, 5);
  EXPECT_THROW(cfg.validate(), std::invalid_argument);
  cfg = config(2, 0);
  EXPECT_THROW(cfg.validate(), std::invalid_argument);
  cfg = config(2, 1);
  cfg.window_block = 0;
  EXPECT_THROW(cfg.validate(), std::invalid_argument);
}

TEST(FitFull, EightPointBlobsRecoverPartition) {
  for (std::uint64_t seed : {3u, 7u, 11u}) {
    const auto data = kkm::generate_synthetic(kkm::SyntheticKind::blobs, 8, 2, 2, seed);
    const auto trace = kkm::fit_full(data.points, config(2, 3));
    EXPECT_DOUBLE_EQ(kkm::adjusted_rand_index(data.truth, trace.final_assignments()), 1.0)
        << "seed " << seed;
  }
}

TEST(FitFull, SingleCluster) {
  const auto pts = oracle::random_matrix(10, 3, 4);
  const auto trace = kkm::fit_full(pts, config(1, 4));
  for (const auto& it : trace.iterations) {
    EXPECT_EQ(it.assignments, kkm::Assignments(10, 0));
    EXPECT_EQ(it.shifted_objective, trace.iterations[0].shifted_objective);
  }
}

TEST(FitFull, MatchesExplicitFeatureLloyd) {
  for (auto kernel : {kkm::KernelSpec::linear(), kkm::KernelSpec::polynomial(1, 1, 2)}) {
    const auto data = kkm::generate_synthetic(kkm::SyntheticKind::blobs, 40, 3, 4, 5);
    const auto trace = kkm::fit_full(data.points, config(4, 6, kernel));
    oracle::Mat phi;
    for (const auto& r : oracle::to_rows(data.points)) {
      phi.push_back(kernel.kind == kkm::KernelSpec::Kind::linear ? r
                                                                 : oracle::poly2_features(r, 1, 1));
    }
    const auto want = oracle::feature_lloyd(phi, 4, 6);
    ASSERT_EQ(trace.iterations.size(), want.size());
    for (std::size_t t = 0; t < want.size(); ++t) {
      EXPECT_EQ(as_int(trace.iterations[t].assignments), want[t].labels) << "iteration " << t;
      EXPECT_NEAR(trace.iterations[t].shifted_objective, want[t].shifted_objective,
                  1e-9 * std::abs(want[t].shifted_objective));
    }
  }
}

TEST(FitFull, RingsNeedPolynomialKernel) {
  const auto data = kkm::generate_synthetic(kkm::SyntheticKind::rings, 32, 2, 2, 9);
  const auto poly = kkm::fit_full(data.points, config(2, 20, kkm::KernelSpec::polynomial(1, 1, 2)));
  const auto lin = kkm::fit_full(data.points, config(2, 20));
  EXPECT_DOUBLE_EQ(kkm::adjusted_rand_index(data.truth, poly.final_assignments()), 1.0);
  EXPECT_LT(kkm::adjusted_rand_index(data.truth, lin.final_assignments()), 0.9);
}

TEST(FitFull, EmptyClusterNeverChosen) {
  // Two coincident groups: cluster 2 starts with one point that joins another
  // cluster, and stays empty afterwards.
  const auto pts = DenseMatrix<double>::from_rows({{0, 0}, {10, 0}, {0.1, 0}, {10.1, 0}, {0.2, 0}});
  const auto trace = kkm::fit_full(pts, config(4, 5));
  for (const auto& it : trace.iterations) {
    EXPECT_TRUE(std::isfinite(it.shifted_objective));
    for (auto c : it.assignments) EXPECT_LT(c, 4);
  }
}

TEST(FitFull, StopOnNoChangeAndFixedPoint) {
  const auto data = kkm::generate_synthetic(kkm::SyntheticKind::blobs, 64, 4, 4, 2);
  auto cfg = config(4, 50);
  const auto full = kkm::fit_full(data.points, cfg);
  cfg.stop_on_no_change = true;
  const auto early = kkm::fit_full(data.points, cfg);
  ASSERT_TRUE(early.converged);
  EXPECT_LT(early.iterations_run(), 50u);
  EXPECT_EQ(early.iterations.back().changed_points, 0u);
  for (std::size_t t = early.iterations_run(); t < full.iterations_run(); ++t) {
    EXPECT_EQ(full.iterations[t].assignments, early.final_assignments());
  }
}

TEST(SlidingWindow, MatchesFullForAnyBlock) {
  const auto data = kkm::generate_synthetic(kkm::SyntheticKind::blobs, 23, 3, 3, 8);
  auto cfg = config(3, 8, kkm::KernelSpec::polynomial(0.5, 1, 2));
  const auto full = kkm::fit_full(data.points, cfg);
  for (std::size_t b : {1u, 3u, 7u, 23u, 100u}) {
    cfg.window_block = b;
    const auto win = kkm::fit_sliding_window(data.points, cfg);
    ASSERT_EQ(win.iterations.size(), full.iterations.size());
    for (std::size_t t = 0; t < full.iterations.size(); ++t) {
      EXPECT_EQ(win.iterations[t].assignments, full.iterations[t].assignments);
      EXPECT_EQ(win.iterations[t].shifted_objective, full.iterations[t].shifted_objective);
    }
    const std::size_t eff = std::min<std::size_t>(b, 23);
    EXPECT_EQ(win.kernel_blocks_evaluated, 8 * ((23 + eff - 1) / eff));
    EXPECT_LE(win.peak_kernel_entries, eff * 23);
  }
}

TEST(SlidingWindow, RequiresPositiveBlock) {
  const auto pts = oracle::random_matrix(4, 2, 1);
  auto cfg = config(2, 1);
  EXPECT_THROW(kkm::fit_sliding_window(pts, cfg), std::invalid_argument);
  cfg.window_block = 0;
  EXPECT_THROW(kkm::fit_sliding_window(pts, cfg), std::invalid_argument);
}

TEST(Monotonicity, RandomInstances) {
  std::mt19937 rng(123);
  for (int inst = 0; inst < 20; ++inst) {
    const std::size_t n = 12 + rng() % 30;
    const std::size_t k = 1 + rng() % 5;
    const auto pts = oracle::random_matrix(n, 1 + rng() % 4, static_cast<unsigned>(rng()));
    for (auto kernel : {kkm::KernelSpec::linear(), kkm::KernelSpec::polynomial(1, 1, 2)}) {
      const auto trace = kkm::fit_full(pts, config(k, 15, kernel));
      for (std::size_t t = 1; t < trace.iterations.size(); ++t) {
        const double prev = trace.iterations[t - 1].shifted_objective;
        EXPECT_TRUE(non_increasing(prev, trace.iterations[t].shifted_objective))
            << prev << " -> " << trace.iterations[t].shifted_objective;
      }
    }
  }
}
