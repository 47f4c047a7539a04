#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string_view>

#include "kkm/linalg.hpp"

namespace kkm {

enum class SyntheticKind { blobs, rings };

std::string_view to_string(SyntheticKind kind);
std::optional<SyntheticKind> parse_synthetic_kind(std::string_view name);

struct LabeledPoints {
  DenseMatrix<double> points;
  Assignments truth;
};

/// blobs: k unit-variance Gaussian clusters whose centers are at least 10
/// standard deviations apart. rings: k concentric annuli in the first two
/// coordinates, remaining coordinates small noise. Cluster membership is
/// shuffled so it does not line up with round-robin initialisation. The
/// seed determines the output.
LabeledPoints generate_synthetic(SyntheticKind kind, std::size_t n,
                                 std::size_t d, std::size_t k,
                                 std::uint64_t seed);

}  // namespace kkm
