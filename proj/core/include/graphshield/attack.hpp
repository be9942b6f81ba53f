#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "graphshield/gnn.hpp"
#include "graphshield/graph.hpp"
#include "graphshield/scorer.hpp"

namespace gshield {

// A structure perturbation with its exact ground truth: the perturbed edge
// set always equals clean edges with `delta` applied, and
// |delta.added| + |delta.removed| equals `budget` (the realized size).
struct AttackResult {
  std::string attack_name;
  EdgeSet perturbed_edges;
  EdgeDelta delta;
  std::int32_t budget = 0;
  std::optional<std::int32_t> target;
  bool partial = false;
  // Post-flip surrogate margins per greedy step (targeted attack only).
  std::vector<double> margin_log;
};

// round-half-up(ptb_rate * edge_count); throws when the result is zero.
std::int32_t attack_budget(double ptb_rate, std::size_t edge_count);

// Each perturbation is a coin flip between deleting a random same-label
// edge and inserting a random different-label non-edge; an exhausted move
// type falls back to the other.
AttackResult dice_attack(const TextAttributedGraph& graph, double ptb_rate, std::uint64_t seed);

// Flips `budget` distinct uniformly random pairs. Baseline attacker.
AttackResult random_flip_attack(const TextAttributedGraph& graph, double ptb_rate,
                                std::uint64_t seed);

// Greedy direct structure attack on one node: each step applies the
// incident edge flip that minimizes the surrogate classification margin of
// `target`, re-evaluated exactly per candidate flip.
AttackResult targeted_surrogate_attack(const TextAttributedGraph& graph,
                                       const Eigen::MatrixXd& features, const SplitMask& split,
                                       std::int32_t target, std::int32_t n_perturb,
                                       std::uint64_t seed,
                                       const SurrogateModel* surrogate = nullptr);

struct PgdAttackConfig {
  std::int32_t steps = 100;
  // Ascent rate at step t is step_scale * budget / sqrt(t).
  double step_scale = 0.1;
};

// First-order relaxation attack: ascends the surrogate training loss in a
// continuous perturbation variable per node pair, projects onto the
// [0,1]-box intersected with the L1 ball of radius `budget`, then flips the
// `budget` pairs with the largest relaxed value.
AttackResult pgd_structure_attack(const TextAttributedGraph& graph,
                                  const Eigen::MatrixXd& features, const SplitMask& split,
                                  double ptb_rate, std::int32_t steps, std::uint64_t seed,
                                  const PgdAttackConfig& config = {});

// Worst-case attacker with scorer access: samples different-label
// insertions and keeps only those the scorer rates >= 4, until the budget
// fills or a sampling cap of 100x budget runs out (partial result).
AttackResult adaptive_attack(const TextAttributedGraph& graph, ScorerBackend& scorer,
                             double ptb_rate, std::uint64_t seed);

// In-place projection onto {p in [0,1]^m : sum(p) <= radius} by bisecting
// the L1 multiplier.
void project_l1_box(Eigen::VectorXd& p, double radius);

// JSON {"attack","budget","added","removed","target","partial"}.
void save_attack(const AttackResult& result, const std::filesystem::path& path);
AttackResult load_attack(const std::filesystem::path& path, const TextAttributedGraph& clean);

}  // namespace gshield
