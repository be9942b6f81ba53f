#include "graphshield/attack.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>

#include <json.hpp>

#include "graphshield/rng.hpp"

namespace gshield {

namespace {

using nlohmann::json;

// Uniform sample of a different-label non-edge not in `skip`: rejection
// first, exhaustive enumeration when rejection keeps missing. Returns
// nullopt when no such pair exists.
std::optional<Edge> sample_cross_label_non_edge(const TextAttributedGraph& graph,
                                                const EdgeSet& current, const EdgeSet& skip,
                                                Rng& rng) {
  const std::int32_t n = graph.node_count();
  const auto& labels = graph.labels();
  auto legal = [&](Edge e) {
    return labels[static_cast<std::size_t>(e.u)] != labels[static_cast<std::size_t>(e.v)] &&
           current.count(e) == 0 && skip.count(e) == 0;
  };
  const std::int64_t cap = 64 + 4 * static_cast<std::int64_t>(n);
  for (std::int64_t t = 0; t < cap; ++t) {
    const auto i = static_cast<std::int32_t>(rng.next_below(static_cast<std::uint64_t>(n)));
    const auto j = static_cast<std::int32_t>(rng.next_below(static_cast<std::uint64_t>(n)));
    if (i == j) continue;
    const Edge e = make_edge(i, j);
    if (legal(e)) return e;
  }
  std::vector<Edge> candidates;
  for (std::int32_t i = 0; i < n; ++i) {
    for (std::int32_t j = i + 1; j < n; ++j) {
      const Edge e{i, j};
      if (legal(e)) candidates.push_back(e);
    }
  }
  if (candidates.empty()) return std::nullopt;
  return candidates[rng.next_below(candidates.size())];
}

AttackResult finish(const TextAttributedGraph& graph, std::string name, EdgeSet perturbed,
                    std::optional<std::int32_t> target, bool partial) {
  AttackResult result;
  result.attack_name = std::move(name);
  result.delta = diff_edge_sets(graph.edges(), perturbed);
  result.perturbed_edges = std::move(perturbed);
  result.budget = static_cast<std::int32_t>(result.delta.size());
  result.target = target;
  result.partial = partial;
  return result;
}

}  // namespace

std::int32_t attack_budget(double ptb_rate, std::size_t edge_count) {
  if (ptb_rate <= 0.0) throw ValidationError("ptb_rate must be positive");
  const auto budget =
      static_cast<std::int64_t>(std::floor(ptb_rate * static_cast<double>(edge_count) + 0.5));
  if (budget < 1) {
    throw ValidationError("attack budget is zero for ptb_rate " + std::to_string(ptb_rate) +
                          " over " + std::to_string(edge_count) + " edges");
  }
  return static_cast<std::int32_t>(budget);
}

AttackResult dice_attack(const TextAttributedGraph& graph, double ptb_rate, std::uint64_t seed) {
  const std::int32_t budget = attack_budget(ptb_rate, graph.edge_count());
  Rng rng(seed);
  EdgeSet current = graph.edges();
  const auto& labels = graph.labels();

  std::vector<Edge> deletable;  // same-label edges still present
  for (const Edge& e : current) {
    if (labels[static_cast<std::size_t>(e.u)] == labels[static_cast<std::size_t>(e.v)]) {
      deletable.push_back(e);
    }
  }

  for (std::int32_t step = 0; step < budget; ++step) {
    bool want_delete = rng.coin();
    bool done = false;
    for (int attempt = 0; attempt < 2 && !done; ++attempt, want_delete = !want_delete) {
      if (want_delete) {
        if (deletable.empty()) continue;
        const std::size_t idx = rng.next_below(deletable.size());
        const Edge e = deletable[idx];
        deletable[idx] = deletable.back();
        deletable.pop_back();
        current.erase(e);
        done = true;
      } else {
        const auto e = sample_cross_label_non_edge(graph, current, {}, rng);
        if (!e) continue;
        current.insert(*e);
        done = true;
      }
    }
    if (!done) throw ValidationError("attack budget infeasible: no legal move remains");
  }
  return finish(graph, "dice", std::move(current), std::nullopt, false);
}

AttackResult random_flip_attack(const TextAttributedGraph& graph, double ptb_rate,
                                std::uint64_t seed) {
  const std::int32_t budget = attack_budget(ptb_rate, graph.edge_count());
  const std::uint64_t total = pair_count(graph.node_count());
  if (static_cast<std::uint64_t>(budget) > total) {
    throw ValidationError("attack budget infeasible: " + std::to_string(budget) +
                          " flips over " + std::to_string(total) + " pairs");
  }
  Rng rng(seed);
  std::set<std::uint64_t> chosen;
  if (static_cast<std::uint64_t>(budget) * 3 >= total) {
    std::vector<std::uint64_t> all(total);
    std::iota(all.begin(), all.end(), 0);
    rng.shuffle(all);
    chosen.insert(all.begin(), all.begin() + budget);
  } else {
    while (chosen.size() < static_cast<std::size_t>(budget)) {
      chosen.insert(rng.next_below(total));
    }
  }
  EdgeSet current = graph.edges();
  for (std::uint64_t k : chosen) {
    const Edge e = pair_from_index(k, graph.node_count());
    if (current.count(e)) {
      current.erase(e);
    } else {
      current.insert(e);
    }
  }
  return finish(graph, "random_flip", std::move(current), std::nullopt, false);
}

namespace {

// Surrogate logits of one node under an edge flip, computed sparsely from
// the 2-hop neighborhood with degree adjustments for the flipped pair.
Eigen::RowVectorXd node_logits_under_flip(const std::vector<std::vector<std::int32_t>>& adj,
                                          const std::vector<double>& degree_tilde,
                                          std::int32_t node, Edge flip, bool flip_adds,
                                          const Eigen::MatrixXd& h) {
  const double shift = flip_adds ? 1.0 : -1.0;
  auto deg = [&](std::int32_t x) {
    return degree_tilde[static_cast<std::size_t>(x)] +
           ((x == flip.u || x == flip.v) ? shift : 0.0);
  };
  auto for_each_neighbor = [&](std::int32_t k, auto&& fn) {
    for (std::int32_t q : adj[static_cast<std::size_t>(k)]) {
      if (!flip_adds && ((k == flip.u && q == flip.v) || (k == flip.v && q == flip.u))) continue;
      fn(q);
    }
    if (flip_adds) {
      if (k == flip.u) fn(flip.v);
      if (k == flip.v) fn(flip.u);
    }
  };

  // Row `node` of A_hat, then its product with A_hat.
  std::map<std::int32_t, double> row;
  const double inv_node = 1.0 / std::sqrt(deg(node));
  row[node] = inv_node * inv_node;
  for_each_neighbor(node, [&](std::int32_t k) { row[k] = inv_node / std::sqrt(deg(k)); });

  std::map<std::int32_t, double> two_hop;
  for (const auto& [k, a_nk] : row) {
    const double inv_k = 1.0 / std::sqrt(deg(k));
    two_hop[k] += a_nk * inv_k * inv_k;
    for_each_neighbor(k, [&](std::int32_t q) { two_hop[q] += a_nk * inv_k / std::sqrt(deg(q)); });
  }

  Eigen::RowVectorXd logits = Eigen::RowVectorXd::Zero(h.cols());
  for (const auto& [q, w] : two_hop) logits += w * h.row(q);
  return logits;
}

}  // namespace

AttackResult targeted_surrogate_attack(const TextAttributedGraph& graph,
                                       const Eigen::MatrixXd& features, const SplitMask& split,
                                       std::int32_t target, std::int32_t n_perturb,
                                       std::uint64_t /*seed*/, const SurrogateModel* surrogate) {
  const std::int32_t n = graph.node_count();
  if (target < 0 || target >= n) throw ValidationError("target node out of range");
  if (n_perturb < 1) throw ValidationError("n_perturb must be at least 1");
  if (n < 2) throw ValidationError("no legal structure flip exists for the target");

  SurrogateModel local;
  if (surrogate == nullptr) {
    local = surrogate_fit(graph.edges(), n, features, graph.labels(), split.train);
    surrogate = &local;
  }
  const Eigen::MatrixXd h = features * surrogate->w;
  const std::int32_t label = graph.label(target);

  EdgeSet current = graph.edges();
  std::vector<double> margins;
  for (std::int32_t step = 0; step < n_perturb; ++step) {
    std::vector<std::vector<std::int32_t>> adj(static_cast<std::size_t>(n));
    std::vector<double> degree_tilde(static_cast<std::size_t>(n), 1.0);
    for (const Edge& e : current) {
      adj[static_cast<std::size_t>(e.u)].push_back(e.v);
      adj[static_cast<std::size_t>(e.v)].push_back(e.u);
      degree_tilde[static_cast<std::size_t>(e.u)] += 1.0;
      degree_tilde[static_cast<std::size_t>(e.v)] += 1.0;
    }
    double best_margin = std::numeric_limits<double>::infinity();
    std::int32_t best_j = -1;
    bool best_adds = false;
    for (std::int32_t j = 0; j < n; ++j) {
      if (j == target) continue;
      const Edge flip = make_edge(target, j);
      const bool adds = current.count(flip) == 0;
      const auto logits =
          node_logits_under_flip(adj, degree_tilde, target, flip, adds, h);
      const double margin = classification_margin(logits, label);
      if (margin < best_margin) {
        best_margin = margin;
        best_j = j;
        best_adds = adds;
      }
    }
    const Edge flip = make_edge(target, best_j);
    if (best_adds) {
      current.insert(flip);
    } else {
      current.erase(flip);
    }
    margins.push_back(best_margin);
  }
  AttackResult result = finish(graph, "targeted_surrogate", std::move(current), target, false);
  result.margin_log = std::move(margins);
  return result;
}

void project_l1_box(Eigen::VectorXd& p, double radius) {
  p = p.cwiseMax(0.0).cwiseMin(1.0);
  if (p.sum() <= radius) return;
  double lo = 0.0, hi = p.maxCoeff();
  for (int iter = 0; iter < 64; ++iter) {
    const double mu = 0.5 * (lo + hi);
    const double mass = (p.array() - mu).max(0.0).sum();
    if (mass > radius) {
      lo = mu;
    } else {
      hi = mu;
    }
  }
  p = (p.array() - hi).max(0.0).matrix();
}

AttackResult pgd_structure_attack(const TextAttributedGraph& graph,
                                  const Eigen::MatrixXd& features, const SplitMask& split,
                                  double ptb_rate, std::int32_t steps, std::uint64_t /*seed*/,
                                  const PgdAttackConfig& config) {
  const std::int32_t budget = attack_budget(ptb_rate, graph.edge_count());
  if (steps < 1) throw ValidationError("pgd steps must be at least 1");
  const std::int32_t n = graph.node_count();
  const std::uint64_t total = pair_count(n);
  if (static_cast<std::uint64_t>(budget) > total) {
    throw ValidationError("attack budget infeasible: more flips than node pairs");
  }

  const SurrogateModel surrogate =
      surrogate_fit(graph.edges(), n, features, graph.labels(), split.train);

  Eigen::MatrixXd base = Eigen::MatrixXd::Zero(n, n);
  for (const Edge& e : graph.edges()) {
    base(e.u, e.v) = 1.0;
    base(e.v, e.u) = 1.0;
  }
  Eigen::VectorXd p = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(total));

  Eigen::MatrixXd effective(n, n);
  for (std::int32_t step = 1; step <= steps; ++step) {
    effective = base;
    for (std::uint64_t k = 0; k < total; ++k) {
      if (p(static_cast<Eigen::Index>(k)) == 0.0) continue;
      const Edge e = pair_from_index(k, n);
      const double v = base(e.u, e.v) +
                       p(static_cast<Eigen::Index>(k)) * (1.0 - 2.0 * base(e.u, e.v));
      effective(e.u, e.v) = v;
      effective(e.v, e.u) = v;
    }
    const Eigen::MatrixXd pair_grad =
        surrogate_adjacency_gradient(surrogate, effective, features, graph.labels(), split.train);
    if (!pair_grad.allFinite()) throw Error("surrogate diverged");

    const double lr = config.step_scale * static_cast<double>(budget) /
                      std::sqrt(static_cast<double>(step));
    for (std::uint64_t k = 0; k < total; ++k) {
      const Edge e = pair_from_index(k, n);
      p(static_cast<Eigen::Index>(k)) +=
          lr * pair_grad(e.u, e.v) * (1.0 - 2.0 * base(e.u, e.v));
    }
    project_l1_box(p, static_cast<double>(budget));
  }

  std::vector<std::uint64_t> order(total);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::uint64_t a, std::uint64_t b) {
    const double pa = p(static_cast<Eigen::Index>(a));
    const double pb = p(static_cast<Eigen::Index>(b));
    if (pa != pb) return pa > pb;
    return a < b;
  });
  EdgeSet current = graph.edges();
  for (std::int32_t k = 0; k < budget; ++k) {
    const Edge e = pair_from_index(order[static_cast<std::size_t>(k)], n);
    if (current.count(e)) {
      current.erase(e);
    } else {
      current.insert(e);
    }
  }
  return finish(graph, "pgd_structure", std::move(current), std::nullopt, false);
}

AttackResult adaptive_attack(const TextAttributedGraph& graph, ScorerBackend& scorer,
                             double ptb_rate, std::uint64_t seed) {
  const std::int32_t budget = attack_budget(ptb_rate, graph.edge_count());
  Rng rng(seed);
  EdgeSet current = graph.edges();
  EdgeSet attempted;
  EdgeSet added;
  const std::int64_t cap = 100LL * budget;
  std::int64_t draws = 0;
  while (static_cast<std::int32_t>(added.size()) < budget && draws < cap) {
    const auto candidate = sample_cross_label_non_edge(graph, current, attempted, rng);
    if (!candidate) break;
    ++draws;
    attempted.insert(*candidate);
    const RelevanceJudgment judgment =
        scorer.score(graph.text(candidate->u), graph.text(candidate->v), *candidate);
    if (judgment.score && *judgment.score >= 4) {
      added.insert(*candidate);
      current.insert(*candidate);
    }
  }
  const bool partial = static_cast<std::int32_t>(added.size()) < budget;
  return finish(graph, "adaptive", std::move(current), std::nullopt, partial);
}

void save_attack(const AttackResult& result, const std::filesystem::path& path) {
  json added = json::array();
  for (const Edge& e : result.delta.added) added.push_back({e.u, e.v});
  json removed = json::array();
  for (const Edge& e : result.delta.removed) removed.push_back({e.u, e.v});
  json j{{"attack", result.attack_name}, {"budget", result.budget},
         {"added", std::move(added)},   {"removed", std::move(removed)},
         {"target", nullptr},           {"partial", result.partial}};
  if (result.target) j["target"] = *result.target;
  std::ofstream out(path);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << j.dump(2) << '\n';
  if (!out) throw IoError("failed writing " + path.string());
}

AttackResult load_attack(const std::filesystem::path& path, const TextAttributedGraph& clean) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
  AttackResult result;
  try {
    result.attack_name = j.at("attack").get<std::string>();
    result.budget = j.at("budget").get<std::int32_t>();
    result.partial = j.at("partial").get<bool>();
    if (!j.at("target").is_null()) result.target = j.at("target").get<std::int32_t>();
    for (const auto& rec : j.at("added")) {
      result.delta.added.insert(make_edge(rec.at(0).get<std::int32_t>(),
                                          rec.at(1).get<std::int32_t>()));
    }
    for (const auto& rec : j.at("removed")) {
      result.delta.removed.insert(make_edge(rec.at(0).get<std::int32_t>(),
                                            rec.at(1).get<std::int32_t>()));
    }
  } catch (const json::exception& e) {
    throw ValidationError(path.string() + ": bad attack file: " + e.what());
  }
  if (result.budget != static_cast<std::int32_t>(result.delta.size())) {
    throw ValidationError(path.string() + ": budget does not match delta size");
  }
  result.perturbed_edges = apply_delta(clean.edges(), result.delta);
  validate_edges_in_range(result.perturbed_edges, clean.node_count());
  return result;
}

}  // namespace gshield
