#include "kkm/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <stdexcept>

namespace kkm {

std::string_view to_string(SyntheticKind kind) {
  return kind == SyntheticKind::blobs ? "blobs" : "rings";
}

std::optional<SyntheticKind> parse_synthetic_kind(std::string_view name) {
  if (name == "blobs") return SyntheticKind::blobs;
  if (name == "rings") return SyntheticKind::rings;
  return std::nullopt;
}

namespace {

constexpr double kSigma = 1.0;
constexpr double kMinSeparation = 10.0 * kSigma;
constexpr double kRingNoise = 0.02;
constexpr double kOuterRadius = 10.0;
constexpr double kInnerRadius = 0.1;

Assignments shuffled_truth(std::size_t n, std::size_t k, std::mt19937_64& rng) {
  Assignments truth(n);
  for (std::size_t j = 0; j < n; ++j) truth[j] = static_cast<ClusterId>(j % k);
  std::shuffle(truth.begin(), truth.end(), rng);
  return truth;
}

std::vector<std::vector<double>> blob_centers(std::size_t d, std::size_t k,
                                              std::mt19937_64& rng) {
  // Box grows until k centers fit with the required spacing.
  double half = kMinSeparation * std::max(1.0, std::cbrt(static_cast<double>(k)));
  std::vector<std::vector<double>> centers;
  for (int attempt = 0; centers.size() < k; ++attempt) {
    if (attempt > 0 && attempt % 1000 == 0) half *= 1.5;
    std::uniform_real_distribution<double> u(-half, half);
    std::vector<double> c(d);
    for (auto& x : c) x = u(rng);
    const bool far = std::all_of(centers.begin(), centers.end(), [&](const auto& o) {
      double s = 0.0;
      for (std::size_t t = 0; t < d; ++t) s += (c[t] - o[t]) * (c[t] - o[t]);
      return std::sqrt(s) >= kMinSeparation;
    });
    if (far) centers.push_back(std::move(c));
  }
  return centers;
}

}  // namespace

LabeledPoints generate_synthetic(SyntheticKind kind, std::size_t n,
                                 std::size_t d, std::size_t k,
                                 std::uint64_t seed) {
  if (k < 1 || n < k) throw std::invalid_argument("synthetic data needs n >= k >= 1");
  if (d < 1 || (kind == SyntheticKind::rings && d < 2)) {
    throw std::invalid_argument("synthetic data needs d >= 1 (rings: d >= 2)");
  }
  std::mt19937_64 rng(seed);
  LabeledPoints out;
  out.truth = shuffled_truth(n, k, rng);
  out.points = DenseMatrix<double>(n, d);
  std::normal_distribution<double> noise(0.0, 1.0);

  if (kind == SyntheticKind::blobs) {
    const auto centers = blob_centers(d, k, rng);
    for (std::size_t j = 0; j < n; ++j) {
      const auto& c = centers[static_cast<std::size_t>(out.truth[j])];
      for (std::size_t t = 0; t < d; ++t) out.points(j, t) = c[t] + kSigma * noise(rng);
    }
    return out;
  }

  std::uniform_real_distribution<double> angle(0.0, 2.0 * std::numbers::pi);
  for (std::size_t j = 0; j < n; ++j) {
    // Radii grow geometrically from kInnerRadius to kOuterRadius.
    const double t = k == 1 ? 1.0 : static_cast<double>(out.truth[j]) / static_cast<double>(k - 1);
    const double radius = kInnerRadius * std::pow(kOuterRadius / kInnerRadius, t);
    const double a = angle(rng);
    const double r = radius + kRingNoise * noise(rng);
    out.points(j, 0) = r * std::cos(a);
    out.points(j, 1) = r * std::sin(a);
    for (std::size_t t = 2; t < d; ++t) out.points(j, t) = kRingNoise * noise(rng);
  }
  return out;
}

}  // namespace kkm
