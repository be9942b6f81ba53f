#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "graphshield/graph.hpp"
#include "graphshield/scorer.hpp"

namespace gshield {

// Pairs to query a strong model about: attack-added pairs are negatives,
// attack-removed plus sampled clean edges are positives. Disjoint by
// construction (an added pair is never a clean edge).
struct QueryEdgeSet {
  EdgeSet negatives;
  EdgeSet positives;

  std::vector<Edge> all() const;  // sorted union
};

// Union of deltas; when positives run short, clean edges are sampled
// uniformly (seeded) until the two sides balance or clean edges run out.
QueryEdgeSet build_query_edges(const TextAttributedGraph& clean,
                               const std::vector<EdgeDelta>& deltas, std::uint64_t balance_seed);

struct PolarJudgment {
  Edge pair;
  bool positive = false;
  RelevanceJudgment judgment;
};

// Scores query.all() through the scorer (cache first) and tags polarity.
std::vector<PolarJudgment> collect_judgments(const TextAttributedGraph& graph,
                                             const QueryEdgeSet& query, ScorerBackend* backend,
                                             ScoreCache& cache);

// One fine-tuning instance. `output` is the backend's JSON answer and
// always parses via parse_judgment.
struct InstructionRecord {
  std::string instruction;
  std::string input;
  std::string output;
  Edge pair;
  bool positive = false;
  std::int32_t score = 0;
};

// Post-processing filter: keep negatives scored {1,2,3} and positives
// scored {4,5,6}; fail-open judgments are dropped.
std::vector<InstructionRecord> filter_judgments(const TextAttributedGraph& graph,
                                                const std::vector<PolarJudgment>& judged);

struct ExportStats {
  std::size_t count = 0;
  bool empty_warning = false;
};

// JSONL, one {"instruction","input","output"} object per line.
ExportStats export_instruction_dataset(const std::vector<InstructionRecord>& records,
                                       const std::filesystem::path& path);

struct InstructionManifest {
  std::string graph_id;
  std::vector<std::string> attack_names;
  std::size_t negatives = 0;
  std::size_t positives = 0;
  std::size_t judged = 0;
  std::size_t kept = 0;
};

void save_instruction_manifest(const InstructionManifest& manifest,
                               const std::filesystem::path& path);

}  // namespace gshield
