#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "graphshield/embedding.hpp"
#include "graphshield/graph.hpp"

namespace gshield {

// Chat-style prompt asking for a 1-6 relevance rating of one node pair.
struct RelevancePrompt {
  std::string system;
  std::string user;
};

// The canonical system template, byte-stable across releases.
const std::string& relevance_system_prompt();

// user = "Node v1→{<text_i>}.\n\nNode v2→{<text_j>}." with literal braces.
RelevancePrompt render_prompt(const std::string& text_i, const std::string& text_j);

// A backend's verdict on one node pair. An absent score marks a pair the
// backend could not rate; downstream stages preserve such edges (fail-open).
struct RelevanceJudgment {
  Edge pair{0, 1};
  std::optional<std::int32_t> score;  // 1..6 when present
  std::string analysis;
  std::string source;  // "remote" | "replay" | "heuristic" | "cache" | "failed"
  std::string raw;     // verbatim backend answer when one exists

  bool scored() const { return score.has_value(); }
};

// Extracts the first JSON object from `raw` (surrounding prose and code
// fences tolerated) and reads "Analysis" plus an integer "Relevance Score"
// in 1..6. Throws ParseError on anything else; never aborts.
RelevanceJudgment parse_judgment(const std::string& raw);

// {"Analysis": ..., "Relevance Score": ...} for judgments reconstructed
// from the cache, which stores fields rather than raw responses.
std::string canonical_judgment_json(const RelevanceJudgment& judgment);

// Append-only store of judgments for one graph's node pairs. A key, once
// written, is never overwritten; fail-open verdicts are not persisted so a
// later run can retry them.
class ScoreCache {
 public:
  ScoreCache() = default;
  ScoreCache(ScoreCache&& other) noexcept
      : entries_(std::move(other.entries_)), graph_id_(std::move(other.graph_id_)) {}
  ScoreCache& operator=(ScoreCache&& other) noexcept {
    entries_ = std::move(other.entries_);
    graph_id_ = std::move(other.graph_id_);
    return *this;
  }

  // Missing file yields an empty cache. File format: JSONL lines
  // {"i":int,"j":int,"score":int,"analysis":str,"source":str}, i < j.
  static ScoreCache load(const std::filesystem::path& path);
  void save(const std::filesystem::path& path) const;

  // False when the key already exists or the judgment is unscored.
  bool insert(const RelevanceJudgment& judgment);
  std::optional<RelevanceJudgment> find(Edge pair) const;
  std::size_t size() const;

  // Binds the cache to one graph's text fingerprint; rebinding to a
  // different fingerprint is an error.
  void bind_graph(const std::string& graph_id);
  const std::string& graph_id() const { return graph_id_; }

 private:
  mutable std::mutex mu_;
  std::map<Edge, RelevanceJudgment> entries_;
  std::string graph_id_;
};

class ScorerBackend {
 public:
  virtual ~ScorerBackend() = default;
  virtual std::string name() const = 0;
  // True when score() may be called from several threads at once.
  virtual bool concurrent() const { return false; }
  virtual RelevanceJudgment score(const std::string& text_i, const std::string& text_j,
                                  Edge pair) = 0;
};

// Cosine-similarity bins standing in for a tuned language model, so the
// whole pipeline runs offline: <0.05->1, <0.15->2, <0.30->3, <0.55->4,
// <0.80->5, else 6.
RelevanceJudgment heuristic_score(const EmbeddingMatrix& emb, Edge pair);

class HeuristicScorer : public ScorerBackend {
 public:
  explicit HeuristicScorer(const EmbeddingMatrix& emb) : emb_(&emb) {}
  std::string name() const override { return "heuristic"; }
  RelevanceJudgment score(const std::string&, const std::string&, Edge pair) override {
    return heuristic_score(*emb_, pair);
  }

 private:
  const EmbeddingMatrix* emb_;
};

struct RetryPolicy {
  std::int32_t max_attempts = 3;
  std::vector<std::int32_t> backoff_ms{1000, 2000, 4000};
};

struct RemoteScorerConfig {
  std::string base_url;  // e.g. https://api.example.com or http://127.0.0.1:8810/prefix
  std::string model;
  std::string api_key;  // from GS_API_KEY unless set explicitly
  RetryPolicy retry;
  double timeout_s = 60.0;
};

// OpenAI-compatible chat-completions client. Requests run at temperature 0
// with a fixed model name. Transport errors, 429 and 5xx are retried with
// backoff; unparseable answers consume attempts too; an exhausted pair
// fails open. 401/403 abort the run (RemoteError).
class RemoteScorer : public ScorerBackend {
 public:
  explicit RemoteScorer(RemoteScorerConfig config);
  std::string name() const override { return "remote"; }
  bool concurrent() const override { return true; }
  RelevanceJudgment score(const std::string& text_i, const std::string& text_j,
                          Edge pair) override;

 private:
  RemoteScorerConfig config_;
  std::string origin_;       // scheme://host[:port]
  std::string path_prefix_;  // leading path from base_url, possibly empty
};

class ReplayMissError : public Error {
 public:
  ReplayMissError(std::string message, std::vector<Edge> missing_pairs)
      : Error(std::move(message)), missing(std::move(missing_pairs)) {}
  std::vector<Edge> missing;
};

// Scores pairs against the cache first; misses go to the backend (nullptr
// backend = replay mode, which errors listing the missing pairs). Scored
// results are cached; results come back in input order. A concurrent
// backend is driven by up to max_in_flight worker threads.
std::vector<RelevanceJudgment> score_edges(const TextAttributedGraph& graph,
                                           const std::vector<Edge>& pairs, ScorerBackend* backend,
                                           ScoreCache& cache, std::int32_t max_in_flight = 8);

}  // namespace gshield
