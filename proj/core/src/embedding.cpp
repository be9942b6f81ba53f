#include "graphshield/embedding.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <fstream>

#include "graphshield/rng.hpp"

namespace gshield {

namespace {

constexpr std::uint64_t kFnvOffset = 0xcbf29ce484222325ULL;
constexpr std::uint64_t kFnvPrime = 0x100000001b3ULL;

std::uint64_t fnv1a64_token(const std::string& token) {
  std::uint64_t h = kFnvOffset;
  for (unsigned char c : token) {
    h ^= c;
    h *= kFnvPrime;
  }
  return h;
}

}  // namespace

EmbeddingMatrix hash_embed_texts(const std::vector<std::string>& texts, std::int32_t dim) {
  if (dim < 1) throw ValidationError("hash embedding dim must be positive");
  Eigen::MatrixXd m = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(texts.size()), dim);
  std::string token;
  for (std::size_t i = 0; i < texts.size(); ++i) {
    token.clear();
    auto flush = [&] {
      if (!token.empty()) {
        m(static_cast<Eigen::Index>(i),
          static_cast<Eigen::Index>(fnv1a64_token(token) % static_cast<std::uint64_t>(dim))) +=
            1.0;
        token.clear();
      }
    };
    for (unsigned char c : texts[i]) {
      if (std::isalnum(c)) {
        token.push_back(static_cast<char>(std::tolower(c)));
      } else {
        flush();
      }
    }
    flush();
    const double norm = m.row(static_cast<Eigen::Index>(i)).norm();
    if (norm > 0.0) m.row(static_cast<Eigen::Index>(i)) /= norm;
  }
  return EmbeddingMatrix{std::move(m)};
}

EmbeddingMatrix load_embedding_tsv(const std::filesystem::path& path,
                                   std::int32_t expected_nodes) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<std::vector<double>> rows;
  std::string line;
  std::size_t line_no = 0;
  std::int64_t dim = -1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::vector<double> row;
    std::size_t pos = 0;
    std::int64_t field = 0;
    std::int64_t node_id = -1;
    while (pos <= line.size()) {
      std::size_t tab = line.find('\t', pos);
      if (tab == std::string::npos) tab = line.size();
      const std::string_view cell(line.data() + pos, tab - pos);
      if (field == 0) {
        auto [p, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), node_id);
        if (ec != std::errc() || p != cell.data() + cell.size()) {
          throw ParseError(path.string() + ":" + std::to_string(line_no) + ": bad node id");
        }
      } else {
        double v = 0.0;
        auto [p, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), v);
        if (ec != std::errc() || p != cell.data() + cell.size() || !std::isfinite(v)) {
          throw ParseError(path.string() + ":" + std::to_string(line_no) +
                           ": bad float in column " + std::to_string(field));
        }
        row.push_back(v);
      }
      ++field;
      pos = tab + 1;
      if (tab == line.size()) break;
    }
    if (node_id != static_cast<std::int64_t>(rows.size())) {
      throw ValidationError(path.string() + ":" + std::to_string(line_no) + ": node id " +
                            std::to_string(node_id) + " not ascending from 0");
    }
    if (dim < 0) dim = static_cast<std::int64_t>(row.size());
    if (static_cast<std::int64_t>(row.size()) != dim || dim == 0) {
      throw ValidationError(path.string() + ":" + std::to_string(line_no) +
                            ": inconsistent embedding dimension");
    }
    rows.push_back(std::move(row));
  }
  if (static_cast<std::int64_t>(rows.size()) != expected_nodes) {
    throw ValidationError(path.string() + ": " + std::to_string(rows.size()) +
                          " embedding rows for " + std::to_string(expected_nodes) + " nodes");
  }
  Eigen::MatrixXd m(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(dim));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (std::int64_t j = 0; j < dim; ++j) {
      m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
          rows[i][static_cast<std::size_t>(j)];
    }
  }
  return EmbeddingMatrix{std::move(m)};
}

void save_embedding_tsv(const EmbeddingMatrix& emb, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out.precision(17);
  for (Eigen::Index i = 0; i < emb.values.rows(); ++i) {
    out << i;
    for (Eigen::Index j = 0; j < emb.values.cols(); ++j) out << '\t' << emb.values(i, j);
    out << '\n';
  }
  if (!out) throw IoError("failed writing " + path.string());
}

EmbeddingMatrix embed_texts(const TextAttributedGraph& graph, const EmbeddingProviderSpec& spec) {
  if (spec.provider == "hash") {
    return hash_embed_texts(graph.texts(), spec.dim);
  }
  if (spec.provider == "file") {
    return load_embedding_tsv(spec.path, graph.node_count());
  }
  throw ValidationError("unknown embedding provider \"" + spec.provider + "\"");
}

double cosine_similarity(const Eigen::Ref<const Eigen::VectorXd>& a,
                         const Eigen::Ref<const Eigen::VectorXd>& b) {
  if (a.size() != b.size()) {
    throw ValidationError("cosine similarity dimension mismatch: " + std::to_string(a.size()) +
                          " vs " + std::to_string(b.size()));
  }
  const double na = a.norm();
  const double nb = b.norm();
  if (na == 0.0 || nb == 0.0) return 0.0;
  return a.dot(b) / (na * nb);
}

namespace {

// Rows scaled to unit norm; zero rows stay zero so dot products equal
// cosine_similarity for every pair.
Eigen::MatrixXd unit_rows(const EmbeddingMatrix& emb) {
  Eigen::MatrixXd u = emb.values;
  for (Eigen::Index i = 0; i < u.rows(); ++i) {
    const double norm = u.row(i).norm();
    if (norm > 0.0) u.row(i) /= norm;
  }
  return u;
}

}  // namespace

SimilarityIndex build_similarity_index(const EmbeddingMatrix& emb, std::int32_t k_sim) {
  if (k_sim < 1) throw ValidationError("k_sim must be at least 1");
  const std::int32_t n = emb.node_count();
  const Eigen::MatrixXd u = unit_rows(emb);
  SimilarityIndex index;
  index.k_sim = k_sim;
  index.neighbors.resize(static_cast<std::size_t>(n));
  std::vector<std::pair<std::int32_t, double>> scored;
  for (std::int32_t i = 0; i < n; ++i) {
    const Eigen::VectorXd sims = u * u.row(i).transpose();
    scored.clear();
    scored.reserve(static_cast<std::size_t>(n) - 1);
    for (std::int32_t j = 0; j < n; ++j) {
      if (j != i) scored.emplace_back(j, sims(j));
    }
    const std::size_t k = std::min<std::size_t>(static_cast<std::size_t>(k_sim), scored.size());
    auto better = [](const auto& a, const auto& b) {
      if (a.second != b.second) return a.second > b.second;
      return a.first < b.first;
    };
    std::partial_sort(scored.begin(), scored.begin() + static_cast<std::ptrdiff_t>(k),
                      scored.end(), better);
    scored.resize(k);
    index.neighbors[static_cast<std::size_t>(i)] = scored;
  }
  return index;
}

CandidatePairs low_similarity_candidates(const EmbeddingMatrix& emb, std::size_t count,
                                         const EdgeSet& exclude, std::uint64_t seed) {
  if (count < 1) throw ValidationError("candidate count must be at least 1");
  const std::int32_t n = emb.node_count();
  const Eigen::MatrixXd u = unit_rows(emb);
  const std::uint64_t total = pair_count(n);

  std::vector<std::pair<double, Edge>> scored;
  auto consider = [&](Edge e) {
    if (exclude.count(e)) return;
    scored.emplace_back(u.row(e.u).dot(u.row(e.v)), e);
  };
  if (total <= kExhaustivePairLimit) {
    scored.reserve(static_cast<std::size_t>(total));
    for (std::int32_t i = 0; i < n; ++i) {
      for (std::int32_t j = i + 1; j < n; ++j) consider(Edge{i, j});
    }
  } else {
    // Seeded uniform sample of kExhaustivePairLimit pair indices; ranking
    // within the sample approximates the global bottom-`count`.
    Rng rng(seed);
    EdgeSet sampled;
    for (std::uint64_t t = 0; t < kExhaustivePairLimit; ++t) {
      const Edge e = pair_from_index(rng.next_below(total), n);
      if (sampled.insert(e).second) consider(e);
    }
  }
  const std::size_t k = std::min(count, scored.size());
  std::partial_sort(scored.begin(), scored.begin() + static_cast<std::ptrdiff_t>(k), scored.end(),
                    [](const auto& a, const auto& b) {
                      if (a.first != b.first) return a.first < b.first;
                      return a.second < b.second;
                    });
  CandidatePairs out;
  out.pairs.reserve(k);
  for (std::size_t t = 0; t < k; ++t) out.pairs.push_back(scored[t].second);
  out.exhausted = scored.size() < count;
  return out;
}

}  // namespace gshield
