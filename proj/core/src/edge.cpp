#include "graphshield/edge.hpp"

#include <algorithm>

namespace gshield {

EdgeDelta diff_edge_sets(const EdgeSet& clean, const EdgeSet& perturbed) {
  EdgeDelta delta;
  std::set_difference(perturbed.begin(), perturbed.end(), clean.begin(), clean.end(),
                      std::inserter(delta.added, delta.added.end()));
  std::set_difference(clean.begin(), clean.end(), perturbed.begin(), perturbed.end(),
                      std::inserter(delta.removed, delta.removed.end()));
  return delta;
}

EdgeSet apply_delta(const EdgeSet& edges, const EdgeDelta& delta) {
  EdgeSet out = edges;
  for (const Edge& e : delta.removed) {
    if (out.erase(e) == 0) {
      throw ValidationError("delta removes non-existent edge " + to_string(e));
    }
  }
  for (const Edge& e : delta.added) {
    if (!out.insert(e).second) {
      throw ValidationError("delta adds existing edge " + to_string(e));
    }
  }
  return out;
}

std::uint64_t pair_count(std::int64_t node_count) {
  const auto n = static_cast<std::uint64_t>(node_count);
  return n * (n - 1) / 2;
}

Edge pair_from_index(std::uint64_t k, std::int64_t node_count) {
  const auto n = static_cast<std::uint64_t>(node_count);
  // Row i covers indices [offset(i), offset(i) + n-1-i) with
  // offset(i) = i*n - i*(i+1)/2. Binary search the row, then the column.
  std::uint64_t lo = 0, hi = n - 1;
  auto offset = [n](std::uint64_t i) { return i * n - i * (i + 1) / 2; };
  while (lo < hi) {
    std::uint64_t mid = (lo + hi + 1) / 2;
    if (offset(mid) <= k) {
      lo = mid;
    } else {
      hi = mid - 1;
    }
  }
  const std::uint64_t i = lo;
  const std::uint64_t j = i + 1 + (k - offset(i));
  return Edge{static_cast<std::int32_t>(i), static_cast<std::int32_t>(j)};
}

std::uint64_t pair_index(Edge e, std::int64_t node_count) {
  const auto n = static_cast<std::uint64_t>(node_count);
  const auto i = static_cast<std::uint64_t>(e.u);
  const auto j = static_cast<std::uint64_t>(e.v);
  return i * n - i * (i + 1) / 2 + (j - i - 1);
}

}  // namespace gshield
