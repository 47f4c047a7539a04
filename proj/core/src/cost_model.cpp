#include "kkm/cost_model.hpp"

#include <cmath>

namespace kkm {

std::string_view to_string(CostPhase phase) {
  switch (phase) {
    case CostPhase::K: return "K";
    case CostPhase::E: return "E";
    case CostPhase::update: return "update";
    case CostPhase::redistribute: return "redistribute";
  }
  return "?";
}

std::optional<CostPhase> parse_cost_phase(std::string_view name) {
  for (auto p : {CostPhase::K, CostPhase::E, CostPhase::update,
                 CostPhase::redistribute}) {
    if (to_string(p) == name) return p;
  }
  return std::nullopt;
}

CostTerms predict(Algorithm algo, CostPhase phase, std::size_t n,
                  std::size_t d, std::size_t k, int ranks) {
  if (n == 0 || d == 0 || k == 0 || ranks < 1) {
    throw CostModelError("predict: parameters must be positive");
  }
  const double N = static_cast<double>(n);
  const double D = static_cast<double>(d);
  const double Kc = static_cast<double>(k);
  const double P = static_cast<double>(ranks);
  const std::string id =
      std::string(to_string(algo)) + "." + std::string(to_string(phase));

  if (algo == Algorithm::one_d) {
    switch (phase) {
      case CostPhase::K: return {P, P * N * D, id};
      case CostPhase::E: return {P, N, id};
      case CostPhase::update: return {0.0, 0.0, id};
      case CostPhase::redistribute: break;
    }
    throw CostModelError("predict: 1d has no redistribute phase");
  }

  const double q = std::round(std::sqrt(P));
  if (q * q != P) {
    throw CostModelError("predict: " + std::string(to_string(algo)) +
                         " needs a perfect-square P, got " +
                         std::to_string(ranks));
  }
  const double lg = std::log2(q);

  if (phase == CostPhase::K) return {q * lg, lg * N * D / q, id};

  switch (algo) {
    case Algorithm::hybrid_1d:
      if (phase == CostPhase::redistribute) return {P, N * N / P, id};
      if (phase == CostPhase::E) return {P, N, id};
      return {0.0, 0.0, id};
    case Algorithm::one_point_five_d:
      if (phase == CostPhase::E) return {q, N * (Kc + 1) / q, id};
      if (phase == CostPhase::update) return {0.0, 0.0, id};
      break;
    case Algorithm::two_d:
      if (phase == CostPhase::E) return {q, N * (Kc + 1) / q, id};
      if (phase == CostPhase::update) return {lg, lg * N, id};
      break;
    case Algorithm::one_d: break;
  }
  throw CostModelError("predict: " + std::string(to_string(algo)) +
                       " has no " + std::string(to_string(phase)) + " phase");
}

}  // namespace kkm
