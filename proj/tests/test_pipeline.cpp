#include <doctest.h>

#include <fstream>
#include <regex>
#include <sstream>

#include <json.hpp>

#include "graphshield/pipeline.hpp"
#include "test_util.hpp"

using namespace gshield;
using nlohmann::json;

namespace {

const char* kMinimalConfig = R"({
  "dataset": {"synth": {"nodes": 40, "classes": 2, "p_in": 0.3, "p_out": 0.02, "seed": 5}},
  "embedding": {"provider": "hash", "dim": 64},
  "attack": {"name": "dice", "ptb_rate": 0.3},
  "scorer": {"backend": "heuristic"},
  "grids": {"beta": [3], "gamma": [0.6, 0.9], "k": [1, 2]},
  "gnn": {"epochs": 40},
  "predictor": {"hidden": 32, "epochs": 30, "candidate_count": 100},
  "seed": 11
})";

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string strip_timing(std::string text) {
  text = std::regex_replace(text, std::regex("\"wall_ms\": [0-9.eE+-]+"), "\"wall_ms\": 0");
  text = std::regex_replace(text, std::regex("\"generated_at\": \"[^\"]*\""),
                            "\"generated_at\": \"\"");
  return text;
}

}  // namespace

TEST_CASE("config parsing applies defaults and validates") {
  const auto config = parse_experiment_config(kMinimalConfig);
  CHECK(config.synth.has_value());
  CHECK_FALSE(config.dataset_path.has_value());
  CHECK(config.embedding.provider == "hash");
  CHECK(config.embedding.dim == 64);
  CHECK(config.attack.name == "dice");
  CHECK(config.gnn.hidden == 16);          // default
  CHECK(config.gnn.weight_decay == 5e-4);  // default
  CHECK(config.predictor.config.batch == 512);
  CHECK(config.beta_grid == std::vector<std::int32_t>{3});
  CHECK(config.candidates.mode == CandidateMode::kFull);
  CHECK(config.seed == 11);

  const auto defaults = parse_experiment_config(R"({"dataset": {"synth": {}}})");
  CHECK(defaults.beta_grid == std::vector<std::int32_t>{2, 3, 4});
  CHECK(defaults.gamma_grid == std::vector<double>{0.91, 0.93, 0.95, 0.97, 0.99});
  CHECK(defaults.k_grid == std::vector<std::int32_t>{1, 3, 5, 7, 9});
}

TEST_CASE("config parsing rejects bad inputs") {
  CHECK_THROWS_AS(parse_experiment_config("{nope"), ParseError);
  CHECK_THROWS_AS(parse_experiment_config(R"({})"), ValidationError);  // no dataset
  CHECK_THROWS_AS(parse_experiment_config(
                      R"({"dataset": {"path": "x", "synth": {}}})"),
                  ValidationError);  // both datasets
  CHECK_THROWS_AS(parse_experiment_config(
                      R"({"dataset": {"synth": {}}, "scorer": {"backend": "oracle"}})"),
                  ValidationError);
  CHECK_THROWS_AS(parse_experiment_config(
                      R"({"dataset": {"synth": {}}, "grids": {"beta": []}})"),
                  ValidationError);
  CHECK_THROWS_AS(parse_experiment_config(
                      R"({"dataset": {"synth": {}}, "grids": {"beta": [9]}})"),
                  ValidationError);
  CHECK_THROWS_AS(parse_experiment_config(
                      R"({"dataset": {"synth": {}}, "scorer": {"backend": "remote"}})"),
                  ValidationError);  // missing base_url/model
  CHECK_THROWS_AS(parse_experiment_config(
                      R"({"dataset": {"synth": {}}, "embedding": {"provider": "file"}})"),
                  ValidationError);  // missing path
  CHECK_THROWS_AS(parse_experiment_config(
                      R"({"dataset": {"synth": {}}, "candidates": {"mode": "restricted"}})"),
                  ValidationError);  // missing k_sim
}

TEST_CASE("synth generator invariants") {
  const SynthConfig spec{.nodes = 100, .classes = 2, .p_in = 0.2, .p_out = 0.01, .seed = 9};
  const auto graph = synth_sbm_graph(spec);
  CHECK(graph.node_count() == 100);
  CHECK(graph.num_classes() == 2);
  std::int32_t class0 = 0;
  for (std::int32_t i = 0; i < 100; ++i) class0 += graph.label(i) == 0 ? 1 : 0;
  CHECK(class0 == 50);
  for (const auto& text : graph.texts()) CHECK_FALSE(text.empty());

  const auto again = synth_sbm_graph(spec);
  CHECK(again.edges() == graph.edges());
  CHECK(again.texts() == graph.texts());

  // Extremes: p_in 1 / p_out 0 gives two cliques.
  const auto cliques =
      synth_sbm_graph({.nodes = 12, .classes = 2, .p_in = 1.0, .p_out = 0.0, .seed = 1});
  CHECK(cliques.edge_count() == 2 * (6 * 5 / 2));

  // Hash embeddings separate the classes for the heuristic scorer.
  const auto emb = hash_embed_texts(graph.texts(), 256);
  Rng rng(5);
  for (int trial = 0; trial < 200; ++trial) {
    const auto i = static_cast<std::int32_t>(rng.next_below(100));
    const auto j = static_cast<std::int32_t>(rng.next_below(100));
    if (i == j) continue;
    const auto verdict = heuristic_score(emb, make_edge(i, j));
    if (graph.label(i) == graph.label(j)) {
      CHECK(*verdict.score >= 5);
    } else {
      CHECK(*verdict.score <= 3);
    }
  }
}

TEST_CASE("mettack and minmax requests are served by the pgd substitute") {
  const auto graph = synth_sbm_graph({.nodes = 24, .classes = 2, .p_in = 0.4, .p_out = 0.05,
                                      .seed = 2});
  const auto emb = hash_embed_texts(graph.texts(), 32);
  const SplitMask split = random_split(graph, 1);
  AttackSpec spec;
  spec.name = "mettack";
  spec.ptb_rate = 0.1;
  spec.steps = 5;
  const auto result = run_attack(spec, graph, emb, split, nullptr, 3);
  CHECK(result.attack_name == "pgd_structure");
}

TEST_CASE("pipeline produces a coherent report and selects by validation accuracy") {
  const auto config = parse_experiment_config(kMinimalConfig);
  ScoreCache cache;
  const auto report = run_pipeline(config, {.n_seeds = 2}, cache);
  REQUIRE(report.seeds.size() == 2);
  CHECK(report.attack_name == "dice");
  for (const SeedResult& s : report.seeds) {
    CHECK(s.grid.size() == 4);  // 1 beta x 2 gamma x 2 k
    CHECK(s.clean_test_accuracy >= 0.0);
    CHECK(s.clean_test_accuracy <= 1.0);
    double best_val = -1.0;
    for (const GridCell& cell : s.grid) {
      CHECK(cell.beta == 3);
      best_val = std::max(best_val, cell.val_accuracy);
    }
    CHECK(s.selected.val_accuracy == best_val);
    CHECK(s.purified_test_accuracy >= 0.0);
    CHECK(s.purified_test_accuracy <= 1.0);
  }
  CHECK(cache.size() > 0);
}

TEST_CASE("pipeline reports reproduce byte-for-byte modulo timing with a warm cache") {
  const auto config = parse_experiment_config(kMinimalConfig);
  const auto dir = std::filesystem::temp_directory_path();
  ScoreCache cache;
  const auto first = run_pipeline(config, {.n_seeds = 1}, cache);
  write_report_json(first, dir / "gs_report_a.json", utc_timestamp());
  write_report_csv(first, dir / "gs_report_a.csv");
  const auto second = run_pipeline(config, {.n_seeds = 1}, cache);
  write_report_json(second, dir / "gs_report_b.json", utc_timestamp());
  write_report_csv(second, dir / "gs_report_b.csv");

  CHECK(strip_timing(read_file(dir / "gs_report_a.json")) ==
        strip_timing(read_file(dir / "gs_report_b.json")));
  const auto strip_csv = [](std::string text) {
    return std::regex_replace(text, std::regex(",[0-9.eE+-]+\n"), ",0\n");
  };
  CHECK(strip_csv(read_file(dir / "gs_report_a.csv")) ==
        strip_csv(read_file(dir / "gs_report_b.csv")));
}

TEST_CASE("report JSON exposes validation-only grids and selected test accuracy") {
  const auto config = parse_experiment_config(kMinimalConfig);
  ScoreCache cache;
  const auto report = run_pipeline(config, {.n_seeds = 1}, cache);
  const auto path = std::filesystem::temp_directory_path() / "gs_report_fields.json";
  write_report_json(report, path, utc_timestamp());
  std::ifstream in(path);
  const json j = json::parse(in);
  const json& seed = j.at("seeds").at(0);
  for (const json& cell : seed.at("grid")) {
    CHECK(cell.contains("val_accuracy"));
    CHECK_FALSE(cell.contains("purified_test_accuracy"));  // provenance: val-only
  }
  CHECK(seed.at("selected").contains("purified_test_accuracy"));
  CHECK(j.at("summary").at("purified_test_accuracy").contains("mean"));
  // Single-seed runs omit the standard deviation.
  CHECK(j.at("summary").at("purified_test_accuracy").at("std").is_null());
}

TEST_CASE("grid csv lists every cell") {
  const auto config = parse_experiment_config(kMinimalConfig);
  ScoreCache cache;
  const auto report = run_pipeline(config, {.n_seeds = 1}, cache);
  const auto path = std::filesystem::temp_directory_path() / "gs_grid.csv";
  write_grid_csv(report, path);
  std::ifstream in(path);
  std::string line;
  std::size_t lines = 0;
  while (std::getline(in, line)) ++lines;
  CHECK(lines == 1 + 4);  // header + cells
}

TEST_CASE("backend override is honored and validated") {
  auto config = parse_experiment_config(kMinimalConfig);
  ScoreCache cache;
  CHECK_THROWS_AS(run_pipeline(config, {.n_seeds = 1, .backend_override = "remote"}, cache),
                  ValidationError);
  // Replay on a cold cache fails with the missing pairs.
  CHECK_THROWS_AS(run_pipeline(config, {.n_seeds = 1, .backend_override = "replay"}, cache),
                  ReplayMissError);
  // Heuristic then replay over the warm cache succeeds.
  const auto warm = run_pipeline(config, {.n_seeds = 1}, cache);
  const auto replayed = run_pipeline(config, {.n_seeds = 1, .backend_override = "replay"}, cache);
  CHECK(replayed.seeds[0].purified_test_accuracy ==
        doctest::Approx(warm.seeds[0].purified_test_accuracy));
}
