#pragma once

// Alpha-beta communication cost formulas per algorithm phase. Asymptotic
// constants are 1 and log is base 2, so predictions are for ratios and
// crossovers rather than absolute word counts.

#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

#include "kkm/distributed.hpp"

namespace kkm {

enum class CostPhase { K, E, update, redistribute };

std::string_view to_string(CostPhase phase);
std::optional<CostPhase> parse_cost_phase(std::string_view name);

struct CostTerms {
  double latency = 0.0;  // multiplies alpha
  double words = 0.0;    // multiplies beta
  std::string formula_id;
};

class CostModelError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Throws CostModelError for non-positive parameters, a non-square P on a
/// 2D-family formula, or a phase the algorithm does not have.
CostTerms predict(Algorithm algo, CostPhase phase, std::size_t n,
                  std::size_t d, std::size_t k, int ranks);

}  // namespace kkm
