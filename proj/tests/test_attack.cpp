#include <doctest.h>

#include <cmath>

#include "graphshield/attack.hpp"
#include "graphshield/synth.hpp"
#include "test_util.hpp"

using namespace gshield;

namespace {

bool same_label(const TextAttributedGraph& g, Edge e) { return g.label(e.u) == g.label(e.v); }

TextAttributedGraph labeled_graph(std::int32_t n, EdgeSet edges, std::vector<std::int32_t> labels) {
  std::vector<std::string> texts;
  for (std::int32_t i = 0; i < n; ++i) texts.push_back("node " + std::to_string(i));
  return TextAttributedGraph(n, std::move(edges), std::move(texts), std::move(labels));
}

}  // namespace

TEST_CASE("attack budget rounds half up and rejects zero") {
  CHECK(attack_budget(0.4, 98) == 39);
  CHECK(attack_budget(0.5, 5) == 3);  // 2.5 rounds half up
  CHECK(attack_budget(1.0, 7) == 7);
  CHECK_THROWS_AS(attack_budget(0.001, 10), ValidationError);
  CHECK_THROWS_AS(attack_budget(-0.2, 10), ValidationError);
}

TEST_CASE("dice on a single-label graph only deletes") {
  const auto graph =
      labeled_graph(6, EdgeSet{{0, 1}, {1, 2}, {2, 3}, {3, 4}, {4, 5}}, {0, 0, 0, 0, 0, 0});
  const auto result = dice_attack(graph, 0.6, 9);
  CHECK(result.budget == 3);
  CHECK(result.delta.added.empty());
  CHECK(result.delta.removed.size() == 3);
}

TEST_CASE("dice is infeasible on a complete bipartite-by-label graph") {
  // Every same-label pair is a non-edge; every cross-label pair is an edge.
  EdgeSet edges;
  for (std::int32_t i = 0; i < 3; ++i) {
    for (std::int32_t j = 3; j < 6; ++j) edges.insert(make_edge(i, j));
  }
  const auto graph = labeled_graph(6, std::move(edges), {0, 0, 0, 1, 1, 1});
  CHECK_THROWS_WITH_AS(dice_attack(graph, 0.2, 1), doctest::Contains("infeasible"),
                       ValidationError);
}

TEST_CASE("dice respects label discipline on an SBM") {
  const auto graph = synth_sbm_graph({.nodes = 200, .classes = 2, .p_in = 0.10, .p_out = 0.01,
                                      .seed = 4});
  const auto result = dice_attack(graph, 0.4, 17);
  CHECK(result.budget ==
        static_cast<std::int32_t>(std::floor(0.4 * graph.edge_count() + 0.5)));
  CHECK(result.delta.size() == static_cast<std::size_t>(result.budget));
  for (const Edge& e : result.delta.removed) {
    CHECK(same_label(graph, e));
    CHECK(graph.has_edge(e));
  }
  for (const Edge& e : result.delta.added) {
    CHECK_FALSE(same_label(graph, e));
    CHECK_FALSE(graph.has_edge(e));
  }
  CHECK(apply_delta(graph.edges(), result.delta) == result.perturbed_edges);

  const auto again = dice_attack(graph, 0.4, 17);
  CHECK(again.delta.added == result.delta.added);
  CHECK(again.delta.removed == result.delta.removed);
  const auto other_seed = dice_attack(graph, 0.4, 18);
  CHECK((other_seed.delta.added != result.delta.added ||
         other_seed.delta.removed != result.delta.removed));
}

TEST_CASE("random flips on a 2-node graph can only remove the edge") {
  const auto graph = labeled_graph(2, EdgeSet{{0, 1}}, {0, 1});
  const auto result = random_flip_attack(graph, 1.0, 3);
  CHECK(result.budget == 1);
  CHECK(result.delta.removed == EdgeSet{{0, 1}});
  CHECK(result.perturbed_edges.empty());
}

TEST_CASE("random flips are distinct, deterministic and bounded") {
  const auto graph = testutil::random_graph(20, 0.3, 2, 5);
  const auto a = random_flip_attack(graph, 0.5, 11);
  const auto b = random_flip_attack(graph, 0.5, 11);
  CHECK(a.delta.added == b.delta.added);
  CHECK(a.delta.removed == b.delta.removed);
  CHECK(a.delta.size() == static_cast<std::size_t>(a.budget));

  const auto tiny = labeled_graph(2, EdgeSet{{0, 1}}, {0, 1});
  CHECK_THROWS_WITH_AS(random_flip_attack(tiny, 3.0, 1), doctest::Contains("infeasible"),
                       ValidationError);
}

namespace {

// Dense recomputation of the target's surrogate margin on an explicit
// structure, used as the oracle for the greedy targeted attack.
double dense_margin(const EdgeSet& edges, std::int32_t n, const Eigen::MatrixXd& x,
                    const SurrogateModel& model, std::int32_t target, std::int32_t label) {
  const Eigen::MatrixXd logits = surrogate_logits(model, edges, n, x);
  return classification_margin(logits.row(target), label);
}

}  // namespace

TEST_CASE("targeted attack picks the argmin flip verified by exhaustive scan") {
  const auto graph = synth_sbm_graph({.nodes = 40, .classes = 2, .p_in = 0.3, .p_out = 0.02,
                                      .seed = 21});
  const auto emb = hash_embed_texts(graph.texts(), 32);
  const SplitMask split = random_split(graph, 2);
  const std::int32_t target = split.test[0];

  const SurrogateModel surrogate = surrogate_fit(graph.edges(), graph.node_count(), emb.values,
                                                 graph.labels(), split.train);
  const auto result =
      targeted_surrogate_attack(graph, emb.values, split, target, 1, 0, &surrogate);
  REQUIRE(result.delta.size() == 1);
  REQUIRE(result.margin_log.size() == 1);

  double best = std::numeric_limits<double>::infinity();
  Edge best_flip{0, 1};
  for (std::int32_t j = 0; j < graph.node_count(); ++j) {
    if (j == target) continue;
    const Edge flip = make_edge(target, j);
    EdgeSet flipped = graph.edges();
    if (flipped.count(flip)) {
      flipped.erase(flip);
    } else {
      flipped.insert(flip);
    }
    const double margin = dense_margin(flipped, graph.node_count(), emb.values, surrogate,
                                       target, graph.label(target));
    if (margin < best) {
      best = margin;
      best_flip = flip;
    }
  }
  const Edge chosen = result.delta.added.empty() ? *result.delta.removed.begin()
                                                 : *result.delta.added.begin();
  CHECK(chosen == best_flip);
  CHECK(result.margin_log[0] == doctest::Approx(best).epsilon(1e-9));
}

TEST_CASE("targeted attack margins are monotone non-increasing") {
  const auto graph = synth_sbm_graph({.nodes = 60, .classes = 2, .p_in = 0.25, .p_out = 0.02,
                                      .seed = 31});
  const auto emb = hash_embed_texts(graph.texts(), 32);
  const SplitMask split = random_split(graph, 3);
  for (std::int32_t target : {split.test[0], split.test[1], split.test[2]}) {
    const auto result = targeted_surrogate_attack(graph, emb.values, split, target, 5, 0);
    REQUIRE(result.margin_log.size() == 5);
    for (std::size_t k = 1; k < result.margin_log.size(); ++k) {
      CHECK(result.margin_log[k] <= result.margin_log[k - 1] + 1e-9);
    }
    // Realized margin matches a dense recomputation of the final structure.
    const SurrogateModel surrogate = surrogate_fit(graph.edges(), graph.node_count(), emb.values,
                                                   graph.labels(), split.train);
    const double recomputed = dense_margin(result.perturbed_edges, graph.node_count(),
                                           emb.values, surrogate, target, graph.label(target));
    CHECK(result.margin_log.back() == doctest::Approx(recomputed).epsilon(1e-9));
  }
}

TEST_CASE("targeted attack validates its inputs") {
  const auto graph = testutil::random_graph(10, 0.3, 2, 41);
  const auto emb = hash_embed_texts(graph.texts(), 8);
  const SplitMask split = random_split(graph, 1);
  CHECK_THROWS_AS(targeted_surrogate_attack(graph, emb.values, split, 0, 0, 0), ValidationError);
  CHECK_THROWS_AS(targeted_surrogate_attack(graph, emb.values, split, 99, 1, 0),
                  ValidationError);
}

TEST_CASE("l1-box projection preserves ordering and hits the radius") {
  Eigen::VectorXd p(3);
  p << 0.9, 0.8, 0.7;
  project_l1_box(p, 1.0);
  CHECK(p.sum() == doctest::Approx(1.0).epsilon(1e-9));
  CHECK(p(0) > p(1));
  CHECK(p(1) > p(2));
  CHECK(p.minCoeff() >= 0.0);

  Eigen::VectorXd q(3);
  q << 0.2, 0.1, 0.05;
  project_l1_box(q, 1.0);  // already feasible, untouched
  CHECK(q(0) == 0.2);

  Eigen::VectorXd r(4);
  r << 2.0, -1.0, 0.5, 0.25;
  project_l1_box(r, 10.0);  // box clipping only
  CHECK(r(0) == 1.0);
  CHECK(r(1) == 0.0);
}

TEST_CASE("pgd attack finds the single most harmful flip on a two-triangle graph") {
  const EdgeSet edges{{0, 1}, {0, 2}, {1, 2}, {3, 4}, {3, 5}, {4, 5}};
  auto graph = labeled_graph(6, edges, {0, 0, 0, 1, 1, 1});
  Eigen::MatrixXd x(6, 2);
  x << 1, 0, 1, 0, 1, 0, 0, 1, 0, 1, 0, 1;
  SplitMask split;
  split.train = {0, 1, 3, 4};
  split.val = {2};
  split.test = {5};

  const auto result = pgd_structure_attack(graph, x, split, 1.0 / 6.0, 50, 0);
  REQUIRE(result.budget == 1);
  REQUIRE(result.delta.size() == 1);

  // Exhaustive oracle: evaluate the surrogate training loss of every single
  // flip and demand the attack chose the argmax.
  const SurrogateModel surrogate =
      surrogate_fit(graph.edges(), 6, x, graph.labels(), split.train);
  double best_loss = -1.0;
  EdgeSet best_flips;
  for (std::uint64_t k = 0; k < pair_count(6); ++k) {
    const Edge e = pair_from_index(k, 6);
    Eigen::MatrixXd adj = Eigen::MatrixXd::Zero(6, 6);
    EdgeSet flipped = graph.edges();
    if (flipped.count(e)) {
      flipped.erase(e);
    } else {
      flipped.insert(e);
    }
    for (const Edge& fe : flipped) {
      adj(fe.u, fe.v) = 1.0;
      adj(fe.v, fe.u) = 1.0;
    }
    const double loss = surrogate_loss_dense(surrogate, adj, x, graph.labels(), split.train);
    if (loss > best_loss + 1e-12) {
      best_loss = loss;
      best_flips = {e};
    } else if (std::abs(loss - best_loss) <= 1e-12) {
      best_flips.insert(e);
    }
  }
  const Edge chosen = result.delta.added.empty() ? *result.delta.removed.begin()
                                                 : *result.delta.added.begin();
  CHECK(best_flips.count(chosen) == 1);
  // The worst flip bridges the triangles.
  CHECK_FALSE(same_label(graph, chosen));
}

TEST_CASE("pgd selects exactly budget flips and is deterministic") {
  const auto graph = synth_sbm_graph({.nodes = 30, .classes = 2, .p_in = 0.3, .p_out = 0.05,
                                      .seed = 3});
  const auto emb = hash_embed_texts(graph.texts(), 16);
  const SplitMask split = random_split(graph, 1);
  const auto a = pgd_structure_attack(graph, emb.values, split, 0.2, 20, 7);
  const auto b = pgd_structure_attack(graph, emb.values, split, 0.2, 20, 7);
  CHECK(a.budget == attack_budget(0.2, graph.edge_count()));
  CHECK(a.delta.size() == static_cast<std::size_t>(a.budget));
  CHECK(a.delta.added == b.delta.added);
  CHECK(a.delta.removed == b.delta.removed);
  CHECK_THROWS_AS(pgd_structure_attack(graph, emb.values, split, 0.2, 0, 7), ValidationError);
}

TEST_CASE("adaptive attack keeps only pairs the scorer rates at least 4") {
  const auto graph = synth_sbm_graph({.nodes = 40, .classes = 2, .p_in = 0.3, .p_out = 0.02,
                                      .seed = 13});

  testutil::FixedScorer reject_all(1);
  const auto rejected = adaptive_attack(graph, reject_all, 0.2, 5);
  CHECK(rejected.partial);
  CHECK(rejected.delta.added.empty());
  CHECK(rejected.budget == 0);

  testutil::FixedScorer accept_all(6);
  const auto accepted = adaptive_attack(graph, accept_all, 0.2, 5);
  CHECK_FALSE(accepted.partial);
  CHECK(accepted.delta.removed.empty());
  CHECK(accepted.budget == attack_budget(0.2, graph.edge_count()));
  for (const Edge& e : accepted.delta.added) {
    CHECK_FALSE(same_label(graph, e));
    CHECK_FALSE(graph.has_edge(e));
  }

  // Determinism under a fixed seed and scorer.
  testutil::FixedScorer accept_again(6);
  const auto repeat = adaptive_attack(graph, accept_again, 0.2, 5);
  CHECK(repeat.delta.added == accepted.delta.added);
}

TEST_CASE("adaptive attack results re-score at least 4 under the same backend") {
  // Classes share half their vocabulary, so the heuristic accepts some
  // cross-label pairs and rejects others.
  std::vector<std::string> texts;
  std::vector<std::int32_t> labels;
  Rng rng(99);
  for (std::int32_t i = 0; i < 40; ++i) {
    const std::int32_t cls = i < 20 ? 0 : 1;
    labels.push_back(cls);
    std::string text;
    const bool bilingual = rng.next_below(3) == 0;
    for (int w = 0; w < 8; ++w) {
      const bool shared = bilingual && w < 4;
      text += (shared ? "both" : "cls" + std::to_string(cls)) + "word" +
              std::to_string(rng.next_below(12)) + " ";
    }
    texts.push_back(text);
  }
  Rng edge_rng(100);
  EdgeSet edges = testutil::random_edge_set(40, 0.15, edge_rng);
  const TextAttributedGraph graph(40, std::move(edges), std::move(texts), std::move(labels));
  const auto emb = hash_embed_texts(graph.texts(), 64);
  HeuristicScorer scorer(emb);

  const auto result = adaptive_attack(graph, scorer, 0.3, 1);
  CHECK_FALSE(result.delta.added.empty());
  for (const Edge& e : result.delta.added) {
    const auto verdict = heuristic_score(emb, e);
    REQUIRE(verdict.scored());
    CHECK(*verdict.score >= 4);
  }
}

TEST_CASE("attack serialization round-trips and validates") {
  const auto graph = testutil::random_graph(15, 0.3, 2, 55);
  const auto result = random_flip_attack(graph, 0.4, 2);
  const auto path = std::filesystem::temp_directory_path() / "gs_attack.json";
  save_attack(result, path);
  const auto loaded = load_attack(path, graph);
  CHECK(loaded.attack_name == result.attack_name);
  CHECK(loaded.budget == result.budget);
  CHECK(loaded.delta.added == result.delta.added);
  CHECK(loaded.delta.removed == result.delta.removed);
  CHECK(loaded.perturbed_edges == result.perturbed_edges);
  CHECK_FALSE(loaded.target.has_value());
}
