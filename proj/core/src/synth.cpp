#include "graphshield/synth.hpp"

#include <string>

#include "graphshield/rng.hpp"

namespace gshield {

namespace {

constexpr std::int32_t kPoolSize = 15;
constexpr std::int32_t kWordsPerNode = 12;
constexpr std::int32_t kSharedPoolSize = 40;
constexpr std::int32_t kSharedPerNode = 2;

// 12 of 15 class words guarantee a 9-word overlap within a class, which
// keeps same-class cosine above the heuristic scorer's 0.55 bin; the small
// shared tail adds per-node variation without tying classes together.
std::string class_text(std::int32_t cls, Rng& rng) {
  std::string text;
  for (std::size_t idx : rng.sample_without_replacement(kPoolSize, kWordsPerNode)) {
    text += "topic" + std::to_string(cls) + "term" + std::to_string(idx) + " ";
  }
  for (std::size_t idx : rng.sample_without_replacement(kSharedPoolSize, kSharedPerNode)) {
    text += "common" + std::to_string(idx) + " ";
  }
  text.pop_back();
  return text;
}

}  // namespace

TextAttributedGraph synth_sbm_graph(const SynthConfig& config) {
  if (config.nodes < 10) throw ValidationError("synth graph needs at least 10 nodes");
  if (config.classes < 2 || config.classes > config.nodes) {
    throw ValidationError("synth graph needs 2..nodes classes");
  }
  if (config.p_in < 0.0 || config.p_in > 1.0 || config.p_out < 0.0 || config.p_out > 1.0) {
    throw ValidationError("edge probabilities must lie in [0,1]");
  }
  const std::int32_t n = config.nodes;
  Rng rng(config.seed);

  std::vector<std::int32_t> labels(static_cast<std::size_t>(n));
  std::vector<std::string> texts(static_cast<std::size_t>(n));
  for (std::int32_t i = 0; i < n; ++i) {
    const auto cls = static_cast<std::int32_t>(
        static_cast<std::int64_t>(i) * config.classes / n);
    labels[static_cast<std::size_t>(i)] = cls;
    texts[static_cast<std::size_t>(i)] = class_text(cls, rng);
  }
  EdgeSet edges;
  for (std::int32_t i = 0; i < n; ++i) {
    for (std::int32_t j = i + 1; j < n; ++j) {
      const bool same = labels[static_cast<std::size_t>(i)] == labels[static_cast<std::size_t>(j)];
      if (rng.next_double() < (same ? config.p_in : config.p_out)) {
        edges.insert(Edge{i, j});
      }
    }
  }
  return TextAttributedGraph(n, std::move(edges), std::move(texts), std::move(labels));
}

}  // namespace gshield
