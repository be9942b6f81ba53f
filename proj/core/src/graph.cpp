#include "graphshield/graph.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include <json.hpp>

#include "graphshield/rng.hpp"

namespace gshield {

namespace {

using nlohmann::json;

json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw ParseError("malformed JSON in " + path.string() + " at byte " + std::to_string(e.byte) +
                     ": " + e.what());
  }
}

void write_json_file(const json& j, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << j.dump(2) << '\n';
  if (!out) throw IoError("failed writing " + path.string());
}

std::uint64_t fnv1a64(std::uint64_t h, const void* data, std::size_t len) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < len; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

constexpr std::uint64_t kFnvOffset = 0xcbf29ce484222325ULL;

}  // namespace

TextAttributedGraph::TextAttributedGraph(std::int32_t node_count, EdgeSet edges,
                                         std::vector<std::string> texts,
                                         std::vector<std::int32_t> labels)
    : node_count_(node_count),
      edges_(std::move(edges)),
      texts_(std::move(texts)),
      labels_(std::move(labels)) {
  if (node_count_ <= 0) throw ValidationError("graph must have at least one node");
  if (texts_.size() != static_cast<std::size_t>(node_count_)) {
    throw ValidationError("texts length " + std::to_string(texts_.size()) +
                          " does not match node count " + std::to_string(node_count_));
  }
  if (labels_.size() != static_cast<std::size_t>(node_count_)) {
    throw ValidationError("labels length " + std::to_string(labels_.size()) +
                          " does not match node count " + std::to_string(node_count_));
  }
  validate_edges_in_range(edges_, node_count_);
  std::int32_t max_label = 0;
  for (std::size_t i = 0; i < labels_.size(); ++i) {
    if (labels_[i] < 0) {
      throw ValidationError("negative label at node " + std::to_string(i));
    }
    max_label = std::max(max_label, labels_[i]);
  }
  num_classes_ = max_label + 1;
}

void validate_edges_in_range(const EdgeSet& edges, std::int32_t node_count) {
  for (const Edge& e : edges) {
    if (e.u == e.v) throw ValidationError("self-loop at node " + std::to_string(e.u));
    if (e.u < 0 || e.v >= node_count) {
      throw ValidationError("edge " + to_string(e) + " endpoint out of range [0," +
                            std::to_string(node_count) + ")");
    }
  }
}

TextAttributedGraph TextAttributedGraph::with_edges(EdgeSet edges) const {
  TextAttributedGraph g(node_count_, std::move(edges), texts_, labels_);
  g.features_ = features_;
  return g;
}

TextAttributedGraph TextAttributedGraph::with_features(Eigen::MatrixXd x) const {
  if (x.rows() != node_count_) {
    throw ValidationError("feature matrix has " + std::to_string(x.rows()) +
                          " rows, expected " + std::to_string(node_count_));
  }
  if (!x.allFinite()) throw ValidationError("feature matrix contains non-finite values");
  TextAttributedGraph g = *this;
  g.features_ = std::move(x);
  return g;
}

std::string TextAttributedGraph::text_fingerprint() const {
  std::uint64_t h = kFnvOffset;
  const std::uint64_t n = static_cast<std::uint64_t>(node_count_);
  h = fnv1a64(h, &n, sizeof(n));
  for (const std::string& t : texts_) {
    const std::uint64_t len = t.size();
    h = fnv1a64(h, &len, sizeof(len));
    h = fnv1a64(h, t.data(), t.size());
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return std::string(buf);
}

TextAttributedGraph load_graph(const std::filesystem::path& path) {
  const json j = read_json_file(path);
  if (!j.is_object() || !j.contains("nodes") || !j.contains("edges")) {
    throw ValidationError(path.string() + ": graph JSON must contain \"nodes\" and \"edges\"");
  }
  const json& nodes = j.at("nodes");
  if (!nodes.is_array() || nodes.empty()) {
    throw ValidationError(path.string() + ": \"nodes\" must be a non-empty array");
  }
  const auto n = static_cast<std::int32_t>(nodes.size());
  std::vector<std::string> texts(static_cast<std::size_t>(n));
  std::vector<std::int32_t> labels(static_cast<std::size_t>(n));
  std::vector<bool> seen(static_cast<std::size_t>(n), false);
  for (std::size_t k = 0; k < nodes.size(); ++k) {
    const json& rec = nodes[k];
    if (!rec.is_object() || !rec.contains("id") || !rec.contains("text") ||
        !rec.contains("label")) {
      throw ValidationError("nodes[" + std::to_string(k) + "]: expected {id, text, label}");
    }
    const auto id = rec.at("id").get<std::int64_t>();
    if (id < 0 || id >= n) {
      throw ValidationError("nodes[" + std::to_string(k) + "]: id " + std::to_string(id) +
                            " outside contiguous range 0.." + std::to_string(n - 1));
    }
    if (seen[static_cast<std::size_t>(id)]) {
      throw ValidationError("nodes[" + std::to_string(k) + "]: duplicate id " +
                            std::to_string(id));
    }
    seen[static_cast<std::size_t>(id)] = true;
    texts[static_cast<std::size_t>(id)] = rec.at("text").get<std::string>();
    labels[static_cast<std::size_t>(id)] = rec.at("label").get<std::int32_t>();
  }
  EdgeSet edges;
  const json& edge_list = j.at("edges");
  if (!edge_list.is_array()) throw ValidationError(path.string() + ": \"edges\" must be an array");
  for (std::size_t k = 0; k < edge_list.size(); ++k) {
    const json& rec = edge_list[k];
    if (!rec.is_array() || rec.size() != 2) {
      throw ValidationError("edges[" + std::to_string(k) + "]: expected a pair [i,j]");
    }
    const auto a = rec[0].get<std::int64_t>();
    const auto b = rec[1].get<std::int64_t>();
    if (a < 0 || b < 0 || a >= n || b >= n) {
      throw ValidationError("edges[" + std::to_string(k) + "]: endpoint out of range [0," +
                            std::to_string(n) + ")");
    }
    if (a == b) {
      throw ValidationError("edges[" + std::to_string(k) + "]: self-loop at node " +
                            std::to_string(a));
    }
    edges.insert(make_edge(static_cast<std::int32_t>(a), static_cast<std::int32_t>(b)));
  }
  return TextAttributedGraph(n, std::move(edges), std::move(texts), std::move(labels));
}

void save_graph(const TextAttributedGraph& graph, const std::filesystem::path& path) {
  json nodes = json::array();
  for (std::int32_t i = 0; i < graph.node_count(); ++i) {
    nodes.push_back({{"id", i}, {"text", graph.text(i)}, {"label", graph.label(i)}});
  }
  json edges = json::array();
  for (const Edge& e : graph.edges()) edges.push_back({e.u, e.v});
  write_json_file(json{{"nodes", std::move(nodes)}, {"edges", std::move(edges)}}, path);
}

SplitMask random_split(const TextAttributedGraph& graph, std::uint64_t seed) {
  const std::int32_t n = graph.node_count();
  if (n < 10) throw ValidationError("graph too small to split");
  const auto share = static_cast<std::size_t>(std::floor(0.10 * n + 0.5));
  std::vector<std::int32_t> order(static_cast<std::size_t>(n));
  for (std::int32_t i = 0; i < n; ++i) order[static_cast<std::size_t>(i)] = i;
  Rng rng(seed);
  rng.shuffle(order);
  SplitMask split;
  split.train.assign(order.begin(), order.begin() + share);
  split.val.assign(order.begin() + share, order.begin() + 2 * share);
  split.test.assign(order.begin() + 2 * share, order.end());
  std::sort(split.train.begin(), split.train.end());
  std::sort(split.val.begin(), split.val.end());
  std::sort(split.test.begin(), split.test.end());
  return split;
}

void save_split(const SplitMask& split, const std::filesystem::path& path) {
  write_json_file(json{{"train", split.train}, {"val", split.val}, {"test", split.test}}, path);
}

SplitMask load_split(const std::filesystem::path& path, std::int32_t node_count) {
  const json j = read_json_file(path);
  SplitMask split;
  try {
    split.train = j.at("train").get<std::vector<std::int32_t>>();
    split.val = j.at("val").get<std::vector<std::int32_t>>();
    split.test = j.at("test").get<std::vector<std::int32_t>>();
  } catch (const json::exception& e) {
    throw ValidationError(path.string() + ": bad split file: " + e.what());
  }
  std::vector<char> seen(static_cast<std::size_t>(node_count), 0);
  std::size_t total = 0;
  for (const auto* part : {&split.train, &split.val, &split.test}) {
    if (part->empty()) throw ValidationError(path.string() + ": empty split part");
    for (std::int32_t i : *part) {
      if (i < 0 || i >= node_count) {
        throw ValidationError(path.string() + ": split index " + std::to_string(i) +
                              " out of range");
      }
      if (seen[static_cast<std::size_t>(i)]++) {
        throw ValidationError(path.string() + ": node " + std::to_string(i) +
                              " appears in two split parts");
      }
      ++total;
    }
  }
  if (total != static_cast<std::size_t>(node_count)) {
    throw ValidationError(path.string() + ": split covers " + std::to_string(total) + " of " +
                          std::to_string(node_count) + " nodes");
  }
  return split;
}

EdgeDelta edge_diff(const TextAttributedGraph& clean, const EdgeSet& perturbed_edges) {
  validate_edges_in_range(perturbed_edges, clean.node_count());
  return diff_edge_sets(clean.edges(), perturbed_edges);
}

double accuracy(std::span<const std::int32_t> predictions, std::span<const std::int32_t> labels,
                std::span<const std::int32_t> mask) {
  if (mask.empty()) throw ValidationError("accuracy over an empty mask");
  std::size_t hits = 0;
  for (std::int32_t i : mask) {
    const auto k = static_cast<std::size_t>(i);
    if (i < 0 || k >= predictions.size() || k >= labels.size()) {
      throw ValidationError("mask index " + std::to_string(i) + " not covered by predictions");
    }
    hits += predictions[k] == labels[k] ? 1 : 0;
  }
  return static_cast<double>(hits) / static_cast<double>(mask.size());
}

}  // namespace gshield
