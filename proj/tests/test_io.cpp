#include <gtest/gtest.h>

#include <sstream>

#include "kkm/libsvm.hpp"
#include "kkm/metrics.hpp"
#include "kkm/sequential.hpp"
#include "kkm/synthetic.hpp"

using namespace kkm;

namespace {

Dataset parse(const std::string& text, LibsvmOptions opts = {}) {
  std::istringstream in(text);
  return parse_libsvm(in, opts);
}

std::size_t error_line(const std::string& text, LibsvmOptions opts = {}) {
  try {
    parse(text, opts);
  } catch (const ParseError& e) {
    return e.line();
  }
  return 0;
}

}  // namespace

TEST(Libsvm, SingleRowWithGap) {
  LibsvmOptions opts;
  opts.dimension = 3;
  const auto ds = parse("1 1:0.5 3:2.0\n", opts);
  EXPECT_EQ(ds.points, (DenseMatrix<double>::from_rows({{0.5, 0.0, 2.0}})));
  EXPECT_EQ(ds.labels, (std::vector<double>{1.0}));
}

TEST(Libsvm, EmptyStream) {
  const auto ds = parse("");
  EXPECT_EQ(ds.points.rows(), 0u);
  EXPECT_EQ(ds.points.cols(), 0u);
  EXPECT_TRUE(ds.labels.empty());
}

TEST(Libsvm, InferredDimensionCommentsAndBlankLines) {
  const auto ds = parse("# header\n+1 2:3\n\n-1 1:1e-3 4:-2 # trailing\n0\n");
  EXPECT_EQ(ds.points, (DenseMatrix<double>::from_rows(
                           {{0, 3, 0, 0}, {1e-3, 0, 0, -2}, {0, 0, 0, 0}})));
  EXPECT_EQ(ds.labels, (std::vector<double>{1, -1, 0}));
}

TEST(Libsvm, Errors) {
  EXPECT_EQ(error_line("1 2:1 1:1\n"), 1u);
  EXPECT_EQ(error_line("1 1:1\n1 1:1 1:2\n"), 2u);
  EXPECT_EQ(error_line("1 0:1\n"), 1u);
  EXPECT_EQ(error_line("1 1:1\n\n1 a:1\n"), 3u);
  EXPECT_EQ(error_line("1 1:x\n"), 1u);
  EXPECT_EQ(error_line("1 1\n"), 1u);
  EXPECT_EQ(error_line("abc 1:1\n"), 1u);
  LibsvmOptions opts;
  opts.dimension = 2;
  EXPECT_EQ(error_line("1 1:1\n1 3:1\n", opts), 2u);
}

TEST(Libsvm, RoundTripIsBitExact) {
  const auto lp = generate_synthetic(SyntheticKind::blobs, 20, 5, 3, 4);
  std::vector<double> labels(20);
  for (std::size_t i = 0; i < 20; ++i) labels[i] = lp.truth[i];
  std::ostringstream out;
  write_libsvm(out, lp.points, labels);
  LibsvmOptions opts;
  opts.dimension = 5;
  const auto back = parse(out.str(), opts);
  EXPECT_EQ(back.points, lp.points);
  EXPECT_EQ(back.labels, labels);
}

TEST(Libsvm, FeatureAndRowSampling) {
  std::string text;
  for (int r = 0; r < 10; ++r) {
    text += std::to_string(r);
    for (int c = 1; c <= 6; ++c) text += " " + std::to_string(c) + ":" + std::to_string(r * 10 + c);
    text += "\n";
  }
  LibsvmOptions opts;
  opts.d_limit = 3;
  opts.n_limit = 4;
  opts.seed = 11;
  const auto a = parse(text, opts);
  const auto b = parse(text, opts);
  EXPECT_EQ(a.points, b.points);
  ASSERT_EQ(a.points.rows(), 4u);
  ASSERT_EQ(a.points.cols(), 3u);
  const auto rows = sample_indices(10, 4, 11);
  const auto cols = sample_indices(6, 3, 12);
  for (std::size_t i = 0; i < 4; ++i) {
    EXPECT_EQ(a.labels[i], static_cast<double>(rows[i]));
    for (std::size_t j = 0; j < 3; ++j)
      EXPECT_EQ(a.points(i, j), static_cast<double>(rows[i] * 10 + cols[j] + 1));
  }
}

TEST(Sampling, SortedDistinctAndSeeded) {
  const auto s = sample_indices(100, 10, 3);
  ASSERT_EQ(s.size(), 10u);
  EXPECT_TRUE(std::is_sorted(s.begin(), s.end()));
  EXPECT_EQ(std::adjacent_find(s.begin(), s.end()), s.end());
  EXPECT_EQ(s, sample_indices(100, 10, 3));
  EXPECT_NE(s, sample_indices(100, 10, 4));
  EXPECT_EQ(sample_indices(5, 9, 1), (std::vector<std::size_t>{0, 1, 2, 3, 4}));
}

TEST(Synthetic, Deterministic) {
  for (auto kind : {SyntheticKind::blobs, SyntheticKind::rings}) {
    const auto a = generate_synthetic(kind, 8, 2, 2, 7);
    const auto b = generate_synthetic(kind, 8, 2, 2, 7);
    EXPECT_EQ(a.points, b.points);
    EXPECT_EQ(a.truth, b.truth);
    EXPECT_NE(a.points, generate_synthetic(kind, 8, 2, 2, 8).points);
  }
}

TEST(Synthetic, BalancedShuffledTruth) {
  const auto lp = generate_synthetic(SyntheticKind::blobs, 30, 3, 3, 2);
  EXPECT_EQ(cluster_sizes(lp.truth, 3), (std::vector<std::int64_t>{10, 10, 10}));
  EXPECT_NE(lp.truth, round_robin_init(30, 3));
}

TEST(Synthetic, BlobsRecoveredByFitFull) {
  const auto lp = generate_synthetic(SyntheticKind::blobs, 8, 2, 2, 7);
  FitConfig cfg;
  cfg.k = 2;
  EXPECT_EQ(adjusted_rand_index(fit_full(lp.points, cfg).final_assignments(), lp.truth), 1.0);
}

TEST(Synthetic, RingsNeedPolynomialKernel) {
  const auto lp = generate_synthetic(SyntheticKind::rings, 64, 2, 2, 17);
  FitConfig cfg;
  cfg.k = 2;
  const auto linear = fit_full(lp.points, cfg).final_assignments();
  cfg.kernel = KernelSpec::polynomial(1, 1, 2);
  const auto poly = fit_full(lp.points, cfg).final_assignments();
  EXPECT_EQ(adjusted_rand_index(poly, lp.truth), 1.0);
  EXPECT_LT(adjusted_rand_index(linear, lp.truth), 0.9);
  EXPECT_NE(linear, poly);
}

TEST(Synthetic, Names) {
  EXPECT_EQ(parse_synthetic_kind("rings"), SyntheticKind::rings);
  EXPECT_FALSE(parse_synthetic_kind("moons"));
}

TEST(Metrics, AdjustedRandIndex) {
  const Assignments a = {0, 0, 1, 1};
  EXPECT_EQ(adjusted_rand_index(a, Assignments{1, 1, 0, 0}), 1.0);
  // Contingency [[1,1],[1,1]]: index 0, expected 2/3, max 2.
  EXPECT_NEAR(adjusted_rand_index(a, Assignments{0, 1, 0, 1}), -0.5, 1e-12);
  const Assignments b = {0, 0, 0, 1, 1, 2};
  const Assignments c = {0, 0, 1, 1, 2, 2};
  // sum C(nij,2)=1, rows 3+1+0=4, cols 1+1+1=3, C(6,2)=15.
  EXPECT_NEAR(adjusted_rand_index(b, c), (1.0 - 12.0 / 15) / (3.5 - 12.0 / 15), 1e-12);
}
