#include "kkm/metrics.hpp"

#include <map>
#include <utility>

namespace kkm {

namespace {

double pairs(double x) { return x * (x - 1.0) / 2.0; }

}  // namespace

double adjusted_rand_index(std::span<const ClusterId> a,
                           std::span<const ClusterId> b) {
  if (a.size() != b.size()) throw DimensionError("ARI: length mismatch");
  const double n = static_cast<double>(a.size());
  if (a.size() < 2) return 1.0;

  std::map<std::pair<ClusterId, ClusterId>, double> joint;
  std::map<ClusterId, double> ra;
  std::map<ClusterId, double> rb;
  for (std::size_t i = 0; i < a.size(); ++i) {
    joint[{a[i], b[i]}] += 1.0;
    ra[a[i]] += 1.0;
    rb[b[i]] += 1.0;
  }
  double index = 0.0, sa = 0.0, sb = 0.0;
  for (const auto& [key, c] : joint) index += pairs(c);
  for (const auto& [key, c] : ra) sa += pairs(c);
  for (const auto& [key, c] : rb) sb += pairs(c);

  const double expected = sa * sb / pairs(n);
  const double max_index = (sa + sb) / 2.0;
  if (max_index == expected) return 1.0;
  return (index - expected) / (max_index - expected);
}

}  // namespace kkm
