#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "graphshield/graph.hpp"

namespace gshield {

// One embedding row per node. Values are finite by construction.
struct EmbeddingMatrix {
  Eigen::MatrixXd values;

  std::int32_t node_count() const { return static_cast<std::int32_t>(values.rows()); }
  std::int32_t dim() const { return static_cast<std::int32_t>(values.cols()); }
  Eigen::RowVectorXd row(std::int32_t i) const { return values.row(i); }
};

struct EmbeddingProviderSpec {
  std::string provider = "hash";  // "hash" | "file"
  std::filesystem::path path;     // for "file"
  std::int32_t dim = 256;         // for "hash"
};

// Deterministic token-hashing bag-of-words projection: lowercase, split on
// non-alphanumerics, FNV-1a 64-bit bucket per token, L2-normalized rows.
// Empty texts produce zero rows.
EmbeddingMatrix hash_embed_texts(const std::vector<std::string>& texts, std::int32_t dim = 256);

// TSV, one line per node: node_id<TAB>v1<TAB>...<TAB>vd, ids ascending
// 0..n-1. Row count must match expected_nodes.
EmbeddingMatrix load_embedding_tsv(const std::filesystem::path& path, std::int32_t expected_nodes);
void save_embedding_tsv(const EmbeddingMatrix& emb, const std::filesystem::path& path);

EmbeddingMatrix embed_texts(const TextAttributedGraph& graph, const EmbeddingProviderSpec& spec);

// a.b/(|a||b|); 0 when either norm is 0.
double cosine_similarity(const Eigen::Ref<const Eigen::VectorXd>& a,
                         const Eigen::Ref<const Eigen::VectorXd>& b);

struct SimilarityIndex {
  std::int32_t k_sim = 0;
  // Per node: up to k_sim (neighbor, score) entries, score non-increasing,
  // ties broken by lower node index. A node never lists itself.
  std::vector<std::vector<std::pair<std::int32_t, double>>> neighbors;
};

// Exact top-k_sim by cosine, brute-force pairwise.
SimilarityIndex build_similarity_index(const EmbeddingMatrix& emb, std::int32_t k_sim);

struct CandidatePairs {
  // Ascending by (similarity, pair); the lowest-similarity pairs first.
  std::vector<Edge> pairs;
  // Set when fewer than the requested count existed.
  bool exhausted = false;
};

// The `count` non-excluded pairs with lowest cosine similarity. Above
// kExhaustivePairLimit total pairs, a seeded uniform sample of that many
// pairs is ranked instead (documented approximation for large graphs).
CandidatePairs low_similarity_candidates(const EmbeddingMatrix& emb, std::size_t count,
                                         const EdgeSet& exclude, std::uint64_t seed);

inline constexpr std::uint64_t kExhaustivePairLimit = 10'000'000;

}  // namespace gshield
