#pragma once

#include <compare>
#include <cstdint>
#include <set>
#include <string>
#include <vector>

#include "graphshield/errors.hpp"

namespace gshield {

// Unordered node pair, canonicalized as (min, max). A symmetric adjacency
// has exactly one Edge per connected pair.
struct Edge {
  std::int32_t u = 0;
  std::int32_t v = 0;
  auto operator<=>(const Edge&) const = default;
};

using EdgeSet = std::set<Edge>;

inline Edge make_edge(std::int32_t a, std::int32_t b) {
  if (a == b) throw ValidationError("self-loop at node " + std::to_string(a));
  if (a < 0 || b < 0) throw ValidationError("negative node index in edge");
  return a < b ? Edge{a, b} : Edge{b, a};
}

inline std::string to_string(Edge e) {
  return "(" + std::to_string(e.u) + "," + std::to_string(e.v) + ")";
}

// Structure modification: pairs inserted into and deleted from an edge set.
struct EdgeDelta {
  EdgeSet added;
  EdgeSet removed;

  bool empty() const { return added.empty() && removed.empty(); }
  std::size_t size() const { return added.size() + removed.size(); }
};

// perturbed \ clean and clean \ perturbed.
EdgeDelta diff_edge_sets(const EdgeSet& clean, const EdgeSet& perturbed);

// Replays a delta. Throws ValidationError unless removed is a subset of
// `edges` and added is disjoint from it.
EdgeSet apply_delta(const EdgeSet& edges, const EdgeDelta& delta);

// Total number of unordered pairs over n nodes.
std::uint64_t pair_count(std::int64_t node_count);

// Bijection between [0, pair_count(n)) and lexicographically ordered pairs.
Edge pair_from_index(std::uint64_t k, std::int64_t node_count);
std::uint64_t pair_index(Edge e, std::int64_t node_count);

}  // namespace gshield
