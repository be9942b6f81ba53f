#include <algorithm>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "graphshield/edge_predictor.hpp"
#include "graphshield/instruct.hpp"
#include "graphshield/log.hpp"
#include "graphshield/pipeline.hpp"
#include "graphshield/purify.hpp"
#include "graphshield/rng.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace gshield;

namespace {

struct Paths {
  fs::path dir;

  fs::path split() const { return dir / "split.json"; }
  fs::path attack() const { return dir / "attack.json"; }
  fs::path predictor() const { return dir / "predictor.json"; }
  fs::path purified() const { return dir / "purified.json"; }
  fs::path removals() const { return dir / "removals.csv"; }
  fs::path instructions() const { return dir / "instructions.jsonl"; }
  fs::path manifest() const { return dir / "manifest.json"; }
  fs::path report_json() const { return dir / "report.json"; }
  fs::path report_csv() const { return dir / "report.csv"; }
  fs::path grid_csv() const { return dir / "grid.csv"; }
  fs::path gnn(const std::string& structure) const {
    return dir / ("gnn_" + structure + ".json");
  }
  fs::path cache(const ExperimentConfig& config) const {
    return config.scorer.cache_path.empty() ? dir / "cache.jsonl" : config.scorer.cache_path;
  }
};

void require_artifact(const fs::path& path, const std::string& producer) {
  if (!fs::exists(path)) {
    throw ValidationError(path.string() + " not found; run `graphshield " + producer +
                          "` first");
  }
}

ExperimentConfig load_config(const std::string& config_path, const std::string& backend) {
  if (config_path.empty()) throw UsageError("--config is required");
  ExperimentConfig config = load_experiment_config(config_path);
  if (!backend.empty()) {
    if (backend != "remote" && backend != "replay" && backend != "heuristic") {
      throw UsageError("--backend must be remote, replay or heuristic");
    }
    config.scorer.backend = backend;
    if (backend == "remote" && (config.scorer.base_url.empty() || config.scorer.model.empty())) {
      throw ValidationError("remote scorer requires base_url and model in the config");
    }
  }
  return config;
}

SplitMask load_or_derive_split(const Paths& paths, const TextAttributedGraph& graph,
                               const ExperimentConfig& config) {
  if (fs::exists(paths.split())) return load_split(paths.split(), graph.node_count());
  return random_split(graph, mix_seed(config.seed, stage_seed::kSplit));
}

EdgeSet load_purified_edges(const fs::path& path, const TextAttributedGraph& graph) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
  EdgeSet edges;
  try {
    for (const auto& rec : j.at("purified_edges")) {
      edges.insert(make_edge(rec.at(0).get<std::int32_t>(), rec.at(1).get<std::int32_t>()));
    }
  } catch (const json::exception& e) {
    throw ValidationError(path.string() + ": bad purification report: " + e.what());
  }
  validate_edges_in_range(edges, graph.node_count());
  return edges;
}

EdgeSet structure_edges(const std::string& structure, const TextAttributedGraph& graph,
                        const Paths& paths) {
  if (structure == "clean") return graph.edges();
  if (structure == "attacked") {
    require_artifact(paths.attack(), "attack");
    return load_attack(paths.attack(), graph).perturbed_edges;
  }
  if (structure == "purified") {
    require_artifact(paths.purified(), "purify");
    return load_purified_edges(paths.purified(), graph);
  }
  throw UsageError("--structure must be clean, attacked or purified");
}

std::vector<RelevanceJudgment> judge_perturbed_edges(const ExperimentConfig& config,
                                                     const TextAttributedGraph& graph,
                                                     const EmbeddingMatrix& emb,
                                                     const EdgeSet& perturbed, ScoreCache& cache) {
  auto backend = make_scorer_backend(config.scorer, emb);
  const std::vector<Edge> pairs(perturbed.begin(), perturbed.end());
  return score_edges(graph, pairs, backend.get(), cache);
}

int cmd_synth(const SynthConfig& synth, const std::string& out_path) {
  const TextAttributedGraph graph = synth_sbm_graph(synth);
  save_graph(graph, out_path);
  std::cout << "wrote " << out_path << " (" << graph.node_count() << " nodes, "
            << graph.edge_count() << " edges, " << graph.num_classes() << " classes)\n";
  return 0;
}

int cmd_attack(const ExperimentConfig& config, const Paths& paths) {
  const TextAttributedGraph graph = load_config_dataset(config);
  const EmbeddingMatrix emb = embed_texts(graph, config.embedding);
  const SplitMask split = load_or_derive_split(paths, graph, config);

  ScoreCache cache = ScoreCache::load(paths.cache(config));
  std::unique_ptr<ScorerBackend> backend;
  if (config.attack.name == "adaptive") {
    backend = make_scorer_backend(config.scorer, emb);
    if (backend == nullptr) {
      throw ValidationError("adaptive attack requires a live scorer backend (not replay)");
    }
  }
  const AttackResult result = run_attack(config.attack, graph, emb, split, backend.get(),
                                         mix_seed(config.seed, stage_seed::kAttack));
  save_split(split, paths.split());
  save_attack(result, paths.attack());
  std::cout << "attack " << result.attack_name << ": budget " << result.budget << " (+"
            << result.delta.added.size() << "/-" << result.delta.removed.size() << ")"
            << (result.partial ? " [partial]" : "") << "\n"
            << "wrote " << paths.attack().string() << " and " << paths.split().string() << "\n";
  return 0;
}

int cmd_score_edges(const ExperimentConfig& config, const Paths& paths) {
  const TextAttributedGraph graph = load_config_dataset(config);
  const EmbeddingMatrix emb = embed_texts(graph, config.embedding);
  require_artifact(paths.attack(), "attack");
  const AttackResult attack = load_attack(paths.attack(), graph);

  ScoreCache cache = ScoreCache::load(paths.cache(config));
  const auto judgments =
      judge_perturbed_edges(config, graph, emb, attack.perturbed_edges, cache);
  cache.save(paths.cache(config));

  std::size_t failed = 0;
  for (const auto& j : judgments) failed += j.scored() ? 0 : 1;
  std::cout << "scored " << judgments.size() << " edges (" << failed
            << " failed open); cache now holds " << cache.size() << " judgments\n"
            << "wrote " << paths.cache(config).string() << "\n";
  return 0;
}

int cmd_build_instructions(const ExperimentConfig& config, const Paths& paths,
                           std::vector<std::string> attack_files) {
  const TextAttributedGraph graph = load_config_dataset(config);
  const EmbeddingMatrix emb = embed_texts(graph, config.embedding);
  if (attack_files.empty()) {
    require_artifact(paths.attack(), "attack");
    attack_files.push_back(paths.attack().string());
  }
  std::vector<EdgeDelta> deltas;
  InstructionManifest manifest;
  manifest.graph_id = graph.text_fingerprint();
  for (const std::string& file : attack_files) {
    require_artifact(file, "attack");
    const AttackResult attack = load_attack(file, graph);
    manifest.attack_names.push_back(attack.attack_name);
    deltas.push_back(attack.delta);
  }
  const QueryEdgeSet query =
      build_query_edges(graph, deltas, mix_seed(config.seed, stage_seed::kBalance));
  manifest.negatives = query.negatives.size();
  manifest.positives = query.positives.size();

  ScoreCache cache = ScoreCache::load(paths.cache(config));
  auto backend = make_scorer_backend(config.scorer, emb);
  const auto judged = collect_judgments(graph, query, backend.get(), cache);
  cache.save(paths.cache(config));
  manifest.judged = judged.size();

  const auto records = filter_judgments(graph, judged);
  manifest.kept = records.size();
  const ExportStats stats = export_instruction_dataset(records, paths.instructions());
  if (stats.empty_warning) log_warn("instruction dataset is empty");
  save_instruction_manifest(manifest, paths.manifest());
  std::cout << "kept " << manifest.kept << " of " << manifest.judged << " judged pairs\n"
            << "wrote " << paths.instructions().string() << " and " << paths.manifest().string()
            << "\n";
  return 0;
}

int cmd_train_edge_predictor(const ExperimentConfig& config, const Paths& paths) {
  const TextAttributedGraph graph = load_config_dataset(config);
  const EmbeddingMatrix emb = embed_texts(graph, config.embedding);
  require_artifact(paths.attack(), "attack");
  const AttackResult attack = load_attack(paths.attack(), graph);

  ScoreCache cache = ScoreCache::load(paths.cache(config));
  const auto judgments =
      judge_perturbed_edges(config, graph, emb, attack.perturbed_edges, cache);
  cache.save(paths.cache(config));

  std::vector<RelevanceJudgment> scored;
  for (const auto& j : judgments) {
    if (j.scored()) scored.push_back(j);
  }
  EdgePredictorConfig predictor_config = config.predictor.config;
  predictor_config.seed = mix_seed(config.seed, stage_seed::kPredictor);
  const auto labeled = derive_edge_labels(scored);
  const TrainingSet training_set =
      build_training_set(labeled, emb, attack.perturbed_edges, config.predictor.candidate_count,
                         predictor_config.seed);
  const EdgePredictorModel model = train_edge_predictor(training_set, predictor_config);
  save_edge_predictor(model, paths.predictor());
  std::cout << "trained on " << training_set.pairs.size() << " pairs; final loss "
            << model.loss_history.back() << "\n"
            << "wrote " << paths.predictor().string() << "\n";
  return 0;
}

int cmd_purify(const ExperimentConfig& config, const Paths& paths, std::int32_t beta,
               double gamma, std::int32_t k) {
  if (std::find(config.beta_grid.begin(), config.beta_grid.end(), beta) ==
      config.beta_grid.end()) {
    throw ValidationError("beta outside configured grid");
  }
  const TextAttributedGraph graph = load_config_dataset(config);
  const EmbeddingMatrix emb = embed_texts(graph, config.embedding);
  require_artifact(paths.attack(), "attack");
  const AttackResult attack = load_attack(paths.attack(), graph);

  ScoreCache cache = ScoreCache::load(paths.cache(config));
  const auto judgments =
      judge_perturbed_edges(config, graph, emb, attack.perturbed_edges, cache);
  cache.save(paths.cache(config));

  EdgeSet e_add;
  if (gamma > 0.0) {
    require_artifact(paths.predictor(), "train-edge-predictor");
    const EdgePredictorModel model = load_edge_predictor(paths.predictor());
    std::optional<SimilarityIndex> index;
    if (config.candidates.mode == CandidateMode::kSimilarityRestricted) {
      index = build_similarity_index(emb, config.candidates.k_sim);
    }
    e_add = select_important_edges(model, emb, attack.perturbed_edges, gamma, k,
                                   config.candidates.mode, index ? &*index : nullptr);
  }
  PurificationReport report = purify_graph(attack.perturbed_edges, judgments, e_add, beta);
  if (!attack.delta.added.empty()) {
    report.adv_edge = adv_edge_metric(report, attack.delta);
  }
  save_purification_report(report, paths.purified(), paths.removals());
  std::cout << "purified: kept " << report.purified_edges.size() - report.added.size()
            << ", removed " << report.removed.size() << ", added " << report.added.size()
            << ", preserved-unscored " << report.unscored_preserved.size() << "\n";
  if (report.adv_edge) {
    std::cout << "adv_edge: " << report.adv_edge->first << " (" << report.adv_edge->second
              << ")\n";
  }
  std::cout << "wrote " << paths.purified().string() << " and " << paths.removals().string()
            << "\n";
  return 0;
}

int cmd_train_gnn(const ExperimentConfig& config, const Paths& paths,
                  const std::string& structure) {
  const TextAttributedGraph graph = load_config_dataset(config);
  const EmbeddingMatrix emb = embed_texts(graph, config.embedding);
  const SplitMask split = load_or_derive_split(paths, graph, config);
  const EdgeSet edges = structure_edges(structure, graph, paths);

  GcnConfig gcn_config = config.gnn;
  gcn_config.seed = mix_seed(config.seed, stage_seed::kGcn);
  const GcnModel model = train_gcn(edges, emb.values, graph.labels(), split, gcn_config);
  save_gcn(model, paths.gnn(structure));
  save_split(split, paths.split());
  std::cout << "trained " << structure << " gcn: best val accuracy " << model.best_val_accuracy
            << " at epoch " << model.best_epoch << "\n"
            << "wrote " << paths.gnn(structure).string() << "\n";
  return 0;
}

int cmd_evaluate(const ExperimentConfig& config, const Paths& paths,
                 const std::string& structure, const std::string& mask_name) {
  const TextAttributedGraph graph = load_config_dataset(config);
  const EmbeddingMatrix emb = embed_texts(graph, config.embedding);
  const SplitMask split = load_or_derive_split(paths, graph, config);
  const EdgeSet edges = structure_edges(structure, graph, paths);
  require_artifact(paths.gnn(structure), "train-gnn --structure " + structure);
  const GcnModel model = load_gcn(paths.gnn(structure));

  const std::vector<std::int32_t>* mask = nullptr;
  if (mask_name == "test") {
    mask = &split.test;
  } else if (mask_name == "val") {
    mask = &split.val;
  } else if (mask_name == "train") {
    mask = &split.train;
  } else {
    throw UsageError("--mask must be train, val or test");
  }
  const double acc = evaluate_gcn(model, edges, emb.values, graph.labels(), *mask);
  std::cout << structure << " " << mask_name << " accuracy: " << acc << "\n";
  return 0;
}

int cmd_pipeline(const ExperimentConfig& config, const Paths& paths, std::int32_t seeds) {
  ScoreCache cache = ScoreCache::load(paths.cache(config));
  PipelineOptions options;
  options.n_seeds = seeds;
  const ExperimentReport report = run_pipeline(config, options, cache);
  cache.save(paths.cache(config));
  write_report_json(report, paths.report_json(), utc_timestamp());
  write_report_csv(report, paths.report_csv());
  write_grid_csv(report, paths.grid_csv());

  double clean = 0.0, attacked = 0.0, purified = 0.0;
  for (const SeedResult& s : report.seeds) {
    clean += s.clean_test_accuracy;
    attacked += s.attacked_test_accuracy;
    purified += s.purified_test_accuracy;
  }
  const auto n = static_cast<double>(report.seeds.size());
  std::cout << "pipeline over " << report.seeds.size() << " seed(s): clean " << clean / n
            << ", attacked " << attacked / n << ", purified " << purified / n << "\n"
            << "wrote " << paths.report_json().string() << ", " << paths.report_csv().string()
            << ", " << paths.grid_csv().string() << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"graph structure purification toolkit"};
  app.require_subcommand(1);

  std::string config_path;
  std::string out_dir = "out";
  std::string backend_override;
  std::string log_level = "warn";
  app.add_option("--log-level", log_level, "error|warn|info|debug");

  auto add_common = [&](CLI::App* cmd, bool needs_config = true) {
    if (needs_config) cmd->add_option("--config", config_path, "experiment config JSON");
    cmd->add_option("--out-dir", out_dir, "artifact directory (default: out)");
    cmd->add_option("--backend", backend_override, "override scorer backend");
  };

  SynthConfig synth;
  std::string synth_out = "graph.json";
  auto* synth_cmd = app.add_subcommand("synth", "generate the built-in SBM dataset");
  synth_cmd->add_option("--out", synth_out, "output graph JSON path");
  synth_cmd->add_option("--nodes", synth.nodes);
  synth_cmd->add_option("--classes", synth.classes);
  synth_cmd->add_option("--p-in", synth.p_in);
  synth_cmd->add_option("--p-out", synth.p_out);
  synth_cmd->add_option("--seed", synth.seed);

  auto* attack_cmd = app.add_subcommand("attack", "generate a poisoned structure");
  add_common(attack_cmd);
  auto* score_cmd = app.add_subcommand("score-edges", "score perturbed edges via the backend");
  add_common(score_cmd);
  std::vector<std::string> attack_files;
  auto* instr_cmd =
      app.add_subcommand("build-instructions", "build the fine-tuning instruction dataset");
  add_common(instr_cmd);
  instr_cmd->add_option("--attack-file", attack_files,
                        "attack JSON(s) to union (default: <out-dir>/attack.json)");
  auto* pred_cmd =
      app.add_subcommand("train-edge-predictor", "train the MLP edge predictor");
  add_common(pred_cmd);
  std::int32_t beta = 0;
  double gamma = 0.0;
  std::int32_t top_k = 1;
  auto* purify_cmd = app.add_subcommand("purify", "apply threshold removal and edge addition");
  add_common(purify_cmd);
  purify_cmd->add_option("--beta", beta, "purification threshold (must be in the config grid)")
      ->required();
  purify_cmd->add_option("--gamma", gamma, "edge-predictor threshold; omit to skip additions");
  purify_cmd->add_option("--k", top_k, "per-node addition cap");
  std::string structure = "purified";
  auto* train_cmd = app.add_subcommand("train-gnn", "train the GCN on a structure");
  add_common(train_cmd);
  train_cmd->add_option("--structure", structure, "clean|attacked|purified");
  std::string eval_structure = "purified";
  std::string mask_name = "test";
  auto* eval_cmd = app.add_subcommand("evaluate", "evaluate a trained GCN");
  add_common(eval_cmd);
  eval_cmd->add_option("--structure", eval_structure, "clean|attacked|purified");
  eval_cmd->add_option("--mask", mask_name, "train|val|test");
  std::int32_t seeds = 10;
  auto* pipe_cmd = app.add_subcommand("pipeline", "run the end-to-end harness");
  add_common(pipe_cmd);
  pipe_cmd->add_option("--seeds", seeds, "number of seeds (default 10)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 1;
  }

  try {
    set_log_level(parse_log_level(log_level));
    if (synth_cmd->parsed()) return cmd_synth(synth, synth_out);

    Paths paths{fs::path(out_dir)};
    fs::create_directories(paths.dir);
    const ExperimentConfig config = load_config(config_path, backend_override);
    if (attack_cmd->parsed()) return cmd_attack(config, paths);
    if (score_cmd->parsed()) return cmd_score_edges(config, paths);
    if (instr_cmd->parsed()) return cmd_build_instructions(config, paths, attack_files);
    if (pred_cmd->parsed()) return cmd_train_edge_predictor(config, paths);
    if (purify_cmd->parsed()) return cmd_purify(config, paths, beta, gamma, top_k);
    if (train_cmd->parsed()) return cmd_train_gnn(config, paths, structure);
    if (eval_cmd->parsed()) return cmd_evaluate(config, paths, eval_structure, mask_name);
    if (pipe_cmd->parsed()) return cmd_pipeline(config, paths, seeds);
    throw UsageError("no subcommand given");
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const RemoteError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}
