#include <doctest.h>

#include <algorithm>
#include <filesystem>

#include "graphshield/embedding.hpp"
#include "test_util.hpp"

using namespace gshield;

namespace {

// Independent FNV-1a oracle for the hash provider.
std::uint64_t fnv_oracle(const std::string& token) {
  std::uint64_t h = 14695981039346656037ULL;
  for (unsigned char c : token) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

EmbeddingMatrix random_embedding(std::int32_t n, std::int32_t dim, std::uint64_t seed) {
  Rng rng(seed);
  Eigen::MatrixXd m(n, dim);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < dim; ++j) m(i, j) = rng.uniform(-1.0, 1.0);
  }
  return EmbeddingMatrix{std::move(m)};
}

}  // namespace

TEST_CASE("hash provider tokenization and bucketing match the FNV oracle") {
  const auto emb = hash_embed_texts({"Alpha, beta ALPHA"}, 32);
  Eigen::VectorXd expected = Eigen::VectorXd::Zero(32);
  expected(fnv_oracle("alpha") % 32) += 2.0;
  expected(fnv_oracle("beta") % 32) += 1.0;
  expected /= expected.norm();
  CHECK((emb.values.row(0).transpose() - expected).norm() == 0.0);
}

TEST_CASE("hash provider determinism and degenerate inputs") {
  const std::vector<std::string> texts{"graph topology attack", "", "graph topology attack"};
  const auto a = hash_embed_texts(texts, 64);
  const auto b = hash_embed_texts(texts, 64);
  CHECK(a.values == b.values);
  CHECK(a.values.row(0) == a.values.row(2));
  CHECK(a.values.row(1).norm() == 0.0);  // empty text -> zero vector
  for (Eigen::Index i : {0, 2}) CHECK(a.values.row(i).norm() == doctest::Approx(1.0));
}

TEST_CASE("embed_texts providers") {
  const auto graph = testutil::random_graph(6, 0.4, 2, 8);
  const auto hash = embed_texts(graph, {.provider = "hash", .dim = 16});
  CHECK(hash.node_count() == 6);
  CHECK(hash.dim() == 16);
  CHECK_THROWS_AS(embed_texts(graph, {.provider = "sentence-bert"}), ValidationError);
}

TEST_CASE("embedding TSV round-trip and validation") {
  const auto emb = random_embedding(5, 3, 11);
  const auto path = std::filesystem::temp_directory_path() / "gs_emb.tsv";
  save_embedding_tsv(emb, path);
  const auto loaded = load_embedding_tsv(path, 5);
  CHECK((loaded.values - emb.values).cwiseAbs().maxCoeff() == 0.0);
  CHECK_THROWS_WITH_AS(load_embedding_tsv(path, 6), doctest::Contains("5 embedding rows"),
                       ValidationError);
}

TEST_CASE("cosine similarity basics") {
  Eigen::VectorXd e1(2), e2(2), neg(2), zero(2);
  e1 << 1, 0;
  e2 << 0, 1;
  neg << -1, 0;
  zero << 0, 0;
  CHECK(cosine_similarity(e1, e1) == 1.0);
  CHECK(cosine_similarity(e1, e2) == 0.0);
  CHECK(cosine_similarity(e1, neg) == -1.0);
  CHECK(cosine_similarity(e1, zero) == 0.0);
  Eigen::VectorXd e3(3);
  e3 << 1, 0, 0;
  CHECK_THROWS_AS(cosine_similarity(e1, e3), ValidationError);
}

TEST_CASE("similarity index on identical embeddings") {
  Eigen::MatrixXd m(3, 4);
  m << 1, 2, 3, 4, 1, 2, 3, 4, 1, 2, 3, 4;
  const auto index = build_similarity_index(EmbeddingMatrix{m}, 2);
  for (std::int32_t i = 0; i < 3; ++i) {
    const auto& list = index.neighbors[static_cast<std::size_t>(i)];
    REQUIRE(list.size() == 2);
    for (const auto& [j, score] : list) {
      CHECK(j != i);
      CHECK(score == doctest::Approx(1.0));
    }
  }
  // Ties break toward the lower node index.
  CHECK(index.neighbors[0][0].first == 1);
  CHECK(index.neighbors[0][1].first == 2);
  CHECK(index.neighbors[1][0].first == 0);
}

TEST_CASE("similarity index equals the brute-force oracle") {
  const auto emb = random_embedding(50, 8, 21);
  for (std::int32_t k_sim : {3, 10, 49, 80}) {
    const auto index = build_similarity_index(emb, k_sim);
    for (std::int32_t i = 0; i < 50; ++i) {
      std::vector<std::pair<double, std::int32_t>> oracle;
      for (std::int32_t j = 0; j < 50; ++j) {
        if (j == i) continue;
        oracle.emplace_back(
            cosine_similarity(emb.values.row(i).transpose(), emb.values.row(j).transpose()), j);
      }
      std::sort(oracle.begin(), oracle.end(), [](const auto& a, const auto& b) {
        if (a.first != b.first) return a.first > b.first;
        return a.second < b.second;
      });
      const auto& list = index.neighbors[static_cast<std::size_t>(i)];
      REQUIRE(list.size() == std::min<std::size_t>(k_sim, 49));
      for (std::size_t t = 0; t < list.size(); ++t) {
        CHECK(list[t].first == oracle[t].second);
        CHECK(list[t].second == doctest::Approx(oracle[t].first).epsilon(1e-12));
        if (t > 0) CHECK(list[t].second <= list[t - 1].second);
      }
    }
  }
}

TEST_CASE("low similarity candidates pick orthogonal pairs first") {
  Eigen::MatrixXd m(4, 2);
  m << 1, 0, 1, 0, 0, 1, 0, 1;
  const auto got = low_similarity_candidates(EmbeddingMatrix{m}, 2, {}, 0);
  CHECK_FALSE(got.exhausted);
  // All four cross-group pairs tie at similarity 0; lexicographic order wins.
  CHECK(got.pairs == std::vector<Edge>{{0, 2}, {0, 3}});
}

TEST_CASE("low similarity candidates respect exclusions and exhaustion") {
  Eigen::MatrixXd m(4, 2);
  m << 1, 0, 1, 0, 0, 1, 0, 1;
  EdgeSet all_pairs;
  for (std::int32_t i = 0; i < 4; ++i) {
    for (std::int32_t j = i + 1; j < 4; ++j) all_pairs.insert(Edge{i, j});
  }
  const auto none = low_similarity_candidates(EmbeddingMatrix{m}, 2, all_pairs, 0);
  CHECK(none.pairs.empty());
  CHECK(none.exhausted);

  const auto emb = random_embedding(12, 4, 5);
  Rng rng(7);
  for (int trial = 0; trial < 20; ++trial) {
    const EdgeSet exclude = testutil::random_edge_set(12, 0.4, rng);
    const auto got = low_similarity_candidates(emb, 10, exclude, 3);
    for (const Edge& e : got.pairs) CHECK(exclude.count(e) == 0);
    const EdgeSet unique(got.pairs.begin(), got.pairs.end());
    CHECK(unique.size() == got.pairs.size());
  }
}

TEST_CASE("low similarity candidates are sorted ascending by similarity") {
  const auto emb = random_embedding(30, 6, 13);
  const auto got = low_similarity_candidates(emb, 40, {}, 0);
  REQUIRE(got.pairs.size() == 40);
  double prev = -2.0;
  for (const Edge& e : got.pairs) {
    const double sim =
        cosine_similarity(emb.values.row(e.u).transpose(), emb.values.row(e.v).transpose());
    CHECK(sim >= prev - 1e-12);
    prev = sim;
  }
}
