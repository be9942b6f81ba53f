#pragma once

#include <cstdint>

#include "graphshield/graph.hpp"

namespace gshield {

// Stochastic block model with class-templated node texts, used for offline
// end-to-end runs. Texts are built from disjoint per-class vocabularies
// (plus a light shared pool), so hash embeddings separate classes: same
// class pairs land in high cosine bins, cross-class pairs near zero.
struct SynthConfig {
  std::int32_t nodes = 200;
  std::int32_t classes = 2;
  double p_in = 0.10;
  double p_out = 0.01;
  std::uint64_t seed = 0;
};

TextAttributedGraph synth_sbm_graph(const SynthConfig& config);

}  // namespace gshield
