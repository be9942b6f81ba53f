#include "graphshield/purify.hpp"

#include <fstream>
#include <map>

#include <json.hpp>

namespace gshield {

namespace {
using nlohmann::json;
}

PurificationReport purify_graph(const EdgeSet& perturbed_edges,
                                const std::vector<RelevanceJudgment>& judgments,
                                const EdgeSet& e_add, std::int32_t beta) {
  if (beta < 1 || beta > 6) throw ValidationError("beta must lie in 1..6");
  std::map<Edge, const RelevanceJudgment*> by_pair;
  for (const RelevanceJudgment& j : judgments) {
    if (perturbed_edges.count(j.pair) == 0) {
      throw ValidationError("judgment for " + to_string(j.pair) +
                            " which is not a perturbed edge; score only real edges");
    }
    const auto [it, inserted] = by_pair.emplace(j.pair, &j);
    if (!inserted && it->second->score != j.score) {
      throw ValidationError("conflicting judgments for " + to_string(j.pair));
    }
  }

  PurificationReport report;
  for (const Edge& e : perturbed_edges) {
    const auto it = by_pair.find(e);
    if (it == by_pair.end()) {
      throw ValidationError("edge " + to_string(e) + " has no judgment");
    }
    const RelevanceJudgment& j = *it->second;
    if (!j.scored()) {
      report.unscored_preserved.push_back(e);  // fail-open
      report.purified_edges.insert(e);
    } else if (*j.score > beta) {
      report.purified_edges.insert(e);
    } else {
      report.removed.emplace_back(e, *j.score);
    }
  }
  for (const Edge& e : e_add) {
    if (perturbed_edges.count(e) != 0) {
      throw ValidationError("e_add contains edge " + to_string(e) +
                            " already present in the perturbed structure");
    }
    report.purified_edges.insert(e);
    report.added.insert(e);
  }
  return report;
}

std::pair<std::int32_t, double> adv_edge_metric(const PurificationReport& report,
                                                const EdgeDelta& ground_truth) {
  if (ground_truth.added.empty()) {
    throw ValidationError("adv_edge_metric needs a non-empty injected edge set");
  }
  std::int32_t count = 0;
  for (const Edge& e : ground_truth.added) {
    if (report.purified_edges.count(e)) ++count;
  }
  return {count, static_cast<double>(count) / static_cast<double>(ground_truth.added.size())};
}

void save_purification_report(const PurificationReport& report,
                              const std::filesystem::path& json_path,
                              const std::filesystem::path& removal_csv_path) {
  json purified = json::array();
  for (const Edge& e : report.purified_edges) purified.push_back({e.u, e.v});
  json removed = json::array();
  for (const auto& [e, score] : report.removed) removed.push_back({e.u, e.v, score});
  json added = json::array();
  for (const Edge& e : report.added) added.push_back({e.u, e.v});
  json unscored = json::array();
  for (const Edge& e : report.unscored_preserved) unscored.push_back({e.u, e.v});
  json j{{"purified_edges", std::move(purified)},
         {"removed", std::move(removed)},
         {"added", std::move(added)},
         {"unscored_preserved", std::move(unscored)},
         {"adv_edge", nullptr}};
  if (report.adv_edge) {
    j["adv_edge"] = {{"count", report.adv_edge->first}, {"fraction", report.adv_edge->second}};
  }
  std::ofstream out(json_path);
  if (!out) throw IoError("cannot open " + json_path.string() + " for writing");
  out << j.dump(2) << '\n';
  if (!out) throw IoError("failed writing " + json_path.string());

  std::ofstream csv(removal_csv_path);
  if (!csv) throw IoError("cannot open " + removal_csv_path.string() + " for writing");
  csv << "i,j,score\n";
  for (const auto& [e, score] : report.removed) {
    csv << e.u << ',' << e.v << ',' << score << '\n';
  }
  if (!csv) throw IoError("failed writing " + removal_csv_path.string());
}

}  // namespace gshield
