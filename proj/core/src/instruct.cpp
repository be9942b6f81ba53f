#include "graphshield/instruct.hpp"

#include <algorithm>
#include <fstream>

#include <json.hpp>

#include "graphshield/rng.hpp"

namespace gshield {

namespace {
using nlohmann::json;
}

std::vector<Edge> QueryEdgeSet::all() const {
  std::vector<Edge> out;
  out.reserve(negatives.size() + positives.size());
  std::set_union(negatives.begin(), negatives.end(), positives.begin(), positives.end(),
                 std::back_inserter(out));
  return out;
}

QueryEdgeSet build_query_edges(const TextAttributedGraph& clean,
                               const std::vector<EdgeDelta>& deltas, std::uint64_t balance_seed) {
  QueryEdgeSet query;
  for (const EdgeDelta& delta : deltas) {
    for (const Edge& e : delta.added) {
      if (clean.has_edge(e)) {
        throw ValidationError("delta adds clean edge " + to_string(e) +
                              "; deltas must be computed against this graph");
      }
      query.negatives.insert(e);
    }
    for (const Edge& e : delta.removed) {
      if (!clean.has_edge(e)) {
        throw ValidationError("delta removes unknown edge " + to_string(e) +
                              "; deltas must be computed against this graph");
      }
      query.positives.insert(e);
    }
  }
  if (query.positives.size() < query.negatives.size()) {
    std::vector<Edge> spare;
    for (const Edge& e : clean.edges()) {
      if (query.positives.count(e) == 0) spare.push_back(e);
    }
    Rng rng(balance_seed);
    rng.shuffle(spare);
    for (const Edge& e : spare) {
      if (query.positives.size() >= query.negatives.size()) break;
      query.positives.insert(e);
    }
  }
  return query;
}

std::vector<PolarJudgment> collect_judgments(const TextAttributedGraph& graph,
                                             const QueryEdgeSet& query, ScorerBackend* backend,
                                             ScoreCache& cache) {
  const std::vector<Edge> pairs = query.all();
  const std::vector<RelevanceJudgment> judgments = score_edges(graph, pairs, backend, cache);
  std::vector<PolarJudgment> out;
  out.reserve(pairs.size());
  for (std::size_t k = 0; k < pairs.size(); ++k) {
    out.push_back({pairs[k], query.positives.count(pairs[k]) != 0, judgments[k]});
  }
  return out;
}

std::vector<InstructionRecord> filter_judgments(const TextAttributedGraph& graph,
                                                const std::vector<PolarJudgment>& judged) {
  std::vector<InstructionRecord> records;
  for (const PolarJudgment& pj : judged) {
    if (!pj.judgment.scored()) continue;  // fail-open: excluded from the dataset
    const std::int32_t score = *pj.judgment.score;
    const bool keep = pj.positive ? score >= 4 : score <= 3;
    if (!keep) continue;
    const RelevancePrompt prompt = render_prompt(graph.text(pj.pair.u), graph.text(pj.pair.v));
    InstructionRecord rec;
    rec.instruction = prompt.system;
    rec.input = prompt.user;
    rec.output =
        pj.judgment.raw.empty() ? canonical_judgment_json(pj.judgment) : pj.judgment.raw;
    rec.pair = pj.pair;
    rec.positive = pj.positive;
    rec.score = score;
    records.push_back(std::move(rec));
  }
  return records;
}

ExportStats export_instruction_dataset(const std::vector<InstructionRecord>& records,
                                       const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  for (const InstructionRecord& rec : records) {
    out << json{{"instruction", rec.instruction}, {"input", rec.input}, {"output", rec.output}}
               .dump()
        << '\n';
  }
  if (!out) throw IoError("failed writing " + path.string());
  return ExportStats{records.size(), records.empty()};
}

void save_instruction_manifest(const InstructionManifest& manifest,
                               const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << json{{"graph_id", manifest.graph_id},
              {"attacks", manifest.attack_names},
              {"negatives", manifest.negatives},
              {"positives", manifest.positives},
              {"judged", manifest.judged},
              {"kept", manifest.kept}}
             .dump(2)
      << '\n';
  if (!out) throw IoError("failed writing " + path.string());
}

}  // namespace gshield
