#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <utility>
#include <vector>

#include "graphshield/graph.hpp"
#include "graphshield/scorer.hpp"

namespace gshield {

struct PurificationReport {
  EdgeSet purified_edges;
  std::vector<std::pair<Edge, std::int32_t>> removed;  // score <= beta
  EdgeSet added;
  std::vector<Edge> unscored_preserved;  // fail-open edges kept
  std::optional<std::pair<std::int32_t, double>> adv_edge;
};

// Keeps edges whose score exceeds beta, preserves unscored ones (logged),
// then unions in e_add. Judgments must cover exactly the perturbed edges;
// e_add must be disjoint from them.
PurificationReport purify_graph(const EdgeSet& perturbed_edges,
                                const std::vector<RelevanceJudgment>& judgments,
                                const EdgeSet& e_add, std::int32_t beta);

// (surviving injected edges, fraction of the injected set).
std::pair<std::int32_t, double> adv_edge_metric(const PurificationReport& report,
                                                const EdgeDelta& ground_truth);

void save_purification_report(const PurificationReport& report,
                              const std::filesystem::path& json_path,
                              const std::filesystem::path& removal_csv_path);

}  // namespace gshield
