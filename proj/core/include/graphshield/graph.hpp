#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "graphshield/edge.hpp"

namespace gshield {

// Undirected simple graph with one raw text and one class label per node.
// Immutable after construction; every structural transformation returns a
// new graph, so deltas stay exact and values can be shared across threads.
class TextAttributedGraph {
 public:
  TextAttributedGraph(std::int32_t node_count, EdgeSet edges, std::vector<std::string> texts,
                      std::vector<std::int32_t> labels);

  std::int32_t node_count() const { return node_count_; }
  const EdgeSet& edges() const { return edges_; }
  std::size_t edge_count() const { return edges_.size(); }
  const std::vector<std::string>& texts() const { return texts_; }
  const std::string& text(std::int32_t i) const { return texts_.at(static_cast<std::size_t>(i)); }
  const std::vector<std::int32_t>& labels() const { return labels_; }
  std::int32_t label(std::int32_t i) const { return labels_.at(static_cast<std::size_t>(i)); }
  std::int32_t num_classes() const { return num_classes_; }
  bool has_edge(Edge e) const { return edges_.count(e) != 0; }

  // Same nodes, texts and labels over a different structure.
  TextAttributedGraph with_edges(EdgeSet edges) const;

  const std::optional<Eigen::MatrixXd>& features() const { return features_; }
  TextAttributedGraph with_features(Eigen::MatrixXd x) const;

  // Stable identifier of the node-text content, used to key score caches.
  // Structure is deliberately excluded: judgments depend on texts only, so
  // clean and attacked variants of one dataset share a cache.
  std::string text_fingerprint() const;

 private:
  std::int32_t node_count_;
  EdgeSet edges_;
  std::vector<std::string> texts_;
  std::vector<std::int32_t> labels_;
  std::int32_t num_classes_;
  std::optional<Eigen::MatrixXd> features_;
};

// Graph JSON: {"nodes":[{"id":int,"text":str,"label":int},...],
//              "edges":[[i,j],...]}, node ids contiguous 0..n-1.
// Duplicate edges are deduplicated; self-loops are rejected.
TextAttributedGraph load_graph(const std::filesystem::path& path);
void save_graph(const TextAttributedGraph& graph, const std::filesystem::path& path);

// Disjoint train/val/test node sets covering [0, node_count).
struct SplitMask {
  std::vector<std::int32_t> train;
  std::vector<std::int32_t> val;
  std::vector<std::int32_t> test;
};

// 10% train / 10% val / 80% test, sizes round-half-up on the 10% shares,
// test takes the remainder. Unstratified uniform sampling.
SplitMask random_split(const TextAttributedGraph& graph, std::uint64_t seed);

void save_split(const SplitMask& split, const std::filesystem::path& path);
SplitMask load_split(const std::filesystem::path& path, std::int32_t node_count);

// Modification delta between a clean graph and a perturbed edge set over the
// same node index space.
EdgeDelta edge_diff(const TextAttributedGraph& clean, const EdgeSet& perturbed_edges);

// Fraction of masked nodes whose prediction matches the label.
double accuracy(std::span<const std::int32_t> predictions, std::span<const std::int32_t> labels,
                std::span<const std::int32_t> mask);

void validate_edges_in_range(const EdgeSet& edges, std::int32_t node_count);

}  // namespace gshield
