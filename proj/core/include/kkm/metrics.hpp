#pragma once

#include <span>

#include "kkm/linalg.hpp"

namespace kkm {

/// Adjusted Rand index; 1 for identical partitions up to relabeling.
double adjusted_rand_index(std::span<const ClusterId> a,
                           std::span<const ClusterId> b);

}  // namespace kkm
