#include "graphshield/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <ctime>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "graphshield/log.hpp"
#include "graphshield/rng.hpp"

namespace gshield {

namespace {

using nlohmann::json;

template <class T>
T get_or(const json& j, const char* key, T fallback) {
  if (!j.contains(key) || j.at(key).is_null()) return fallback;
  return j.at(key).get<T>();
}

}  // namespace

ExperimentConfig parse_experiment_config(const std::string& json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("malformed config JSON at byte ") + std::to_string(e.byte) +
                     ": " + e.what());
  }
  ExperimentConfig config;
  try {
    const json dataset = j.value("dataset", json::object());
    if (dataset.contains("path")) {
      config.dataset_path = dataset.at("path").get<std::string>();
    }
    if (dataset.contains("synth")) {
      const json& s = dataset.at("synth");
      SynthConfig synth;
      synth.nodes = get_or<std::int32_t>(s, "nodes", synth.nodes);
      synth.classes = get_or<std::int32_t>(s, "classes", synth.classes);
      synth.p_in = get_or<double>(s, "p_in", synth.p_in);
      synth.p_out = get_or<double>(s, "p_out", synth.p_out);
      synth.seed = get_or<std::uint64_t>(s, "seed", synth.seed);
      config.synth = synth;
    }
    if (config.dataset_path.has_value() == config.synth.has_value()) {
      throw ValidationError("config dataset must name exactly one of \"path\" or \"synth\"");
    }

    const json emb = j.value("embedding", json::object());
    config.embedding.provider = get_or<std::string>(emb, "provider", "hash");
    config.embedding.dim = get_or<std::int32_t>(emb, "dim", 256);
    if (emb.contains("path")) config.embedding.path = emb.at("path").get<std::string>();
    if (config.embedding.provider == "file" && config.embedding.path.empty()) {
      throw ValidationError("embedding provider \"file\" requires a path");
    }

    const json attack = j.value("attack", json::object());
    config.attack.name = get_or<std::string>(attack, "name", "dice");
    config.attack.ptb_rate = get_or<double>(attack, "ptb_rate", 0.2);
    config.attack.steps = get_or<std::int32_t>(attack, "steps", 100);
    config.attack.n_perturb = get_or<std::int32_t>(attack, "n_perturb", 2);
    if (attack.contains("target") && !attack.at("target").is_null()) {
      config.attack.target = attack.at("target").get<std::int32_t>();
    }
    if (attack.contains("seed") && !attack.at("seed").is_null()) {
      config.attack.seed = attack.at("seed").get<std::uint64_t>();
    }

    const json scorer = j.value("scorer", json::object());
    config.scorer.backend = get_or<std::string>(scorer, "backend", "heuristic");
    if (config.scorer.backend != "heuristic" && config.scorer.backend != "remote" &&
        config.scorer.backend != "replay") {
      throw ValidationError("scorer backend must be heuristic, remote or replay");
    }
    config.scorer.base_url = get_or<std::string>(scorer, "base_url", "");
    config.scorer.model = get_or<std::string>(scorer, "model", "");
    if (scorer.contains("cache")) {
      config.scorer.cache_path = scorer.at("cache").get<std::string>();
    }
    config.scorer.timeout_s = get_or<double>(scorer, "timeout_s", 60.0);
    if (config.scorer.backend == "remote" &&
        (config.scorer.base_url.empty() || config.scorer.model.empty())) {
      throw ValidationError("remote scorer requires base_url and model");
    }

    const json grids = j.value("grids", json::object());
    if (grids.contains("beta")) config.beta_grid = grids.at("beta").get<std::vector<std::int32_t>>();
    if (grids.contains("gamma")) config.gamma_grid = grids.at("gamma").get<std::vector<double>>();
    if (grids.contains("k")) config.k_grid = grids.at("k").get<std::vector<std::int32_t>>();
    if (config.beta_grid.empty() || config.gamma_grid.empty() || config.k_grid.empty()) {
      throw ValidationError("hyperparameter grids must be non-empty");
    }
    for (std::int32_t beta : config.beta_grid) {
      if (beta < 1 || beta > 6) throw ValidationError("beta grid values must lie in 1..6");
    }
    for (double gamma : config.gamma_grid) {
      if (!(gamma > 0.0 && gamma < 1.0)) throw ValidationError("gamma grid values must lie in (0,1)");
    }
    for (std::int32_t k : config.k_grid) {
      if (k < 1) throw ValidationError("K grid values must be positive");
    }

    const json cand = j.value("candidates", json::object());
    const std::string mode = get_or<std::string>(cand, "mode", "full");
    if (mode == "full") {
      config.candidates.mode = CandidateMode::kFull;
    } else if (mode == "restricted") {
      config.candidates.mode = CandidateMode::kSimilarityRestricted;
      config.candidates.k_sim = get_or<std::int32_t>(cand, "k_sim", 0);
      if (config.candidates.k_sim < 1) {
        throw ValidationError("restricted candidate mode requires k_sim >= 1");
      }
    } else {
      throw ValidationError("candidate mode must be full or restricted");
    }

    const json gnn = j.value("gnn", json::object());
    config.gnn.hidden = get_or<std::int32_t>(gnn, "hidden", 16);
    config.gnn.lr = get_or<double>(gnn, "lr", 0.01);
    config.gnn.weight_decay = get_or<double>(gnn, "weight_decay", 5e-4);
    config.gnn.epochs = get_or<std::int32_t>(gnn, "epochs", 200);

    const json pred = j.value("predictor", json::object());
    config.predictor.config.hidden = get_or<std::int32_t>(pred, "hidden", 256);
    config.predictor.config.epochs = get_or<std::int32_t>(pred, "epochs", 200);
    config.predictor.config.batch = get_or<std::int32_t>(pred, "batch", 512);
    config.predictor.config.lr = get_or<double>(pred, "lr", 1e-3);
    config.predictor.candidate_count = get_or<std::size_t>(pred, "candidate_count", 4000);

    config.seed = get_or<std::uint64_t>(j, "seed", 1);
  } catch (const json::exception& e) {
    throw ValidationError(std::string("bad config: ") + e.what());
  }
  return config;
}

ExperimentConfig load_experiment_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config " + path.string());
  std::stringstream buffer;
  buffer << in.rdbuf();
  return parse_experiment_config(buffer.str());
}

TextAttributedGraph load_config_dataset(const ExperimentConfig& config) {
  if (config.dataset_path) return load_graph(*config.dataset_path);
  return synth_sbm_graph(*config.synth);
}

std::unique_ptr<ScorerBackend> make_scorer_backend(const ScorerSpec& spec,
                                                   const EmbeddingMatrix& emb) {
  if (spec.backend == "heuristic") return std::make_unique<HeuristicScorer>(emb);
  if (spec.backend == "replay") return nullptr;
  RemoteScorerConfig remote;
  remote.base_url = spec.base_url;
  remote.model = spec.model;
  remote.timeout_s = spec.timeout_s;
  remote.retry = spec.retry;
  if (const char* key = std::getenv("GS_API_KEY")) remote.api_key = key;
  return std::make_unique<RemoteScorer>(std::move(remote));
}

AttackResult run_attack(const AttackSpec& spec, const TextAttributedGraph& graph,
                        const EmbeddingMatrix& emb, const SplitMask& split,
                        ScorerBackend* scorer, std::uint64_t derived_seed) {
  const std::uint64_t seed = spec.seed.value_or(derived_seed);
  if (spec.name == "dice") {
    return dice_attack(graph, spec.ptb_rate, seed);
  }
  if (spec.name == "random_flip") {
    return random_flip_attack(graph, spec.ptb_rate, seed);
  }
  if (spec.name == "pgd" || spec.name == "minmax" || spec.name == "mettack") {
    if (spec.name != "pgd") {
      log_info("attack \"" + spec.name + "\" is served by the first-order pgd substitute");
    }
    return pgd_structure_attack(graph, emb.values, split, spec.ptb_rate, spec.steps, seed);
  }
  if (spec.name == "targeted") {
    if (!spec.target) throw ValidationError("targeted attack requires a target node");
    return targeted_surrogate_attack(graph, emb.values, split, *spec.target, spec.n_perturb,
                                     seed);
  }
  if (spec.name == "adaptive") {
    if (scorer == nullptr) {
      throw ValidationError("adaptive attack requires a live scorer backend (not replay)");
    }
    return adaptive_attack(graph, *scorer, spec.ptb_rate, seed);
  }
  throw ValidationError("unknown attack \"" + spec.name + "\"");
}

namespace {

SeedResult run_one_seed(const ExperimentConfig& config, const TextAttributedGraph& graph,
                        const EmbeddingMatrix& emb, const SimilarityIndex* index,
                        ScorerBackend* backend, ScoreCache& cache, std::uint64_t run_seed) {
  const auto t0 = std::chrono::steady_clock::now();
  SeedResult result;
  result.seed = run_seed;

  const SplitMask split = random_split(graph, mix_seed(run_seed, stage_seed::kSplit));
  GcnConfig gcn_config = config.gnn;
  gcn_config.seed = mix_seed(run_seed, stage_seed::kGcn);

  const GcnModel clean_model =
      train_gcn(graph.edges(), emb.values, graph.labels(), split, gcn_config);
  result.clean_test_accuracy =
      evaluate_gcn(clean_model, graph.edges(), emb.values, graph.labels(), split.test);

  const AttackResult attack = run_attack(config.attack, graph, emb, split, backend,
                                         mix_seed(run_seed, stage_seed::kAttack));
  const EdgeSet& perturbed = attack.perturbed_edges;

  const GcnModel attacked_model =
      train_gcn(perturbed, emb.values, graph.labels(), split, gcn_config);
  result.attacked_test_accuracy =
      evaluate_gcn(attacked_model, perturbed, emb.values, graph.labels(), split.test);

  const std::vector<Edge> pairs(perturbed.begin(), perturbed.end());
  const std::vector<RelevanceJudgment> judgments = score_edges(graph, pairs, backend, cache);

  std::vector<RelevanceJudgment> scored;
  scored.reserve(judgments.size());
  for (const RelevanceJudgment& j : judgments) {
    if (j.scored()) scored.push_back(j);
  }
  result.unscored_preserved = judgments.size() - scored.size();

  EdgePredictorConfig predictor_config = config.predictor.config;
  predictor_config.seed = mix_seed(run_seed, stage_seed::kPredictor);
  const auto labeled = derive_edge_labels(scored);
  const TrainingSet training_set = build_training_set(
      labeled, emb, perturbed, config.predictor.candidate_count, predictor_config.seed);
  const EdgePredictorModel predictor = train_edge_predictor(training_set, predictor_config);

  std::vector<EdgeSet> additions;
  additions.reserve(config.gamma_grid.size() * config.k_grid.size());
  for (double gamma : config.gamma_grid) {
    for (std::int32_t k : config.k_grid) {
      additions.push_back(select_important_edges(predictor, emb, perturbed, gamma, k,
                                                 config.candidates.mode, index));
    }
  }

  bool have_best = false;
  GcnModel best_model;
  EdgeSet best_edges;
  for (std::int32_t beta : config.beta_grid) {
    std::size_t addition_idx = 0;
    for (double gamma : config.gamma_grid) {
      for (std::int32_t k : config.k_grid) {
        const EdgeSet& e_add = additions[addition_idx++];
        PurificationReport purified = purify_graph(perturbed, judgments, e_add, beta);
        GridCell cell;
        cell.beta = beta;
        cell.gamma = gamma;
        cell.k = k;
        cell.removed = purified.removed.size();
        cell.added = purified.added.size();
        if (!attack.delta.added.empty()) {
          cell.adv_edge = adv_edge_metric(purified, attack.delta);
        }
        GcnModel model =
            train_gcn(purified.purified_edges, emb.values, graph.labels(), split, gcn_config);
        cell.val_accuracy =
            evaluate_gcn(model, purified.purified_edges, emb.values, graph.labels(), split.val);
        result.grid.push_back(cell);
        if (!have_best || cell.val_accuracy > result.selected.val_accuracy) {
          have_best = true;
          result.selected = cell;
          best_model = std::move(model);
          best_edges = std::move(purified.purified_edges);
        }
      }
    }
  }
  result.purified_test_accuracy =
      evaluate_gcn(best_model, best_edges, emb.values, graph.labels(), split.test);
  result.wall_ms = std::chrono::duration<double, std::milli>(
                       std::chrono::steady_clock::now() - t0)
                       .count();
  return result;
}

}  // namespace

ExperimentReport run_pipeline(const ExperimentConfig& config, const PipelineOptions& options,
                              ScoreCache& cache) {
  if (options.n_seeds < 1) throw ValidationError("pipeline needs at least one seed");
  ExperimentConfig effective = config;
  if (options.backend_override) {
    effective.scorer.backend = *options.backend_override;
    if (effective.scorer.backend == "remote" &&
        (effective.scorer.base_url.empty() || effective.scorer.model.empty())) {
      throw ValidationError("remote scorer requires base_url and model in the config");
    }
  }

  const TextAttributedGraph graph = load_config_dataset(effective);
  const EmbeddingMatrix emb = embed_texts(graph, effective.embedding);
  std::unique_ptr<ScorerBackend> backend = make_scorer_backend(effective.scorer, emb);

  std::optional<SimilarityIndex> index;
  if (effective.candidates.mode == CandidateMode::kSimilarityRestricted) {
    index = build_similarity_index(emb, effective.candidates.k_sim);
  }

  ExperimentReport report;
  report.attack_name = effective.attack.name;
  report.ptb_rate = effective.attack.ptb_rate;
  report.scorer_backend = effective.scorer.backend;
  for (std::int32_t s = 0; s < options.n_seeds; ++s) {
    report.seeds.push_back(run_one_seed(effective, graph, emb,
                                        index ? &*index : nullptr, backend.get(), cache,
                                        effective.seed + static_cast<std::uint64_t>(s)));
  }
  return report;
}

namespace {

struct Summary {
  double mean = 0.0;
  std::optional<double> stddev;
};

Summary summarize(const std::vector<double>& values) {
  Summary s;
  for (double v : values) s.mean += v;
  s.mean /= static_cast<double>(values.size());
  if (values.size() >= 2) {
    double acc = 0.0;
    for (double v : values) acc += (v - s.mean) * (v - s.mean);
    s.stddev = std::sqrt(acc / static_cast<double>(values.size() - 1));
  }
  return s;
}

json summary_json(const std::vector<double>& values) {
  const Summary s = summarize(values);
  json j{{"mean", s.mean}, {"std", nullptr}};
  if (s.stddev) j["std"] = *s.stddev;
  return j;
}

std::vector<double> collect(const ExperimentReport& report, double (*get)(const SeedResult&)) {
  std::vector<double> out;
  out.reserve(report.seeds.size());
  for (const SeedResult& s : report.seeds) out.push_back(get(s));
  return out;
}

json cell_json(const GridCell& cell) {
  json j{{"beta", cell.beta},       {"gamma", cell.gamma},   {"k", cell.k},
         {"val_accuracy", cell.val_accuracy}, {"removed", cell.removed}, {"added", cell.added},
         {"adv_edge_count", nullptr}, {"adv_edge_fraction", nullptr}};
  if (cell.adv_edge) {
    j["adv_edge_count"] = cell.adv_edge->first;
    j["adv_edge_fraction"] = cell.adv_edge->second;
  }
  return j;
}

}  // namespace

std::string utc_timestamp() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

void write_report_json(const ExperimentReport& report, const std::filesystem::path& path,
                       const std::string& generated_at) {
  json seeds = json::array();
  for (const SeedResult& s : report.seeds) {
    json grid = json::array();
    for (const GridCell& cell : s.grid) grid.push_back(cell_json(cell));
    json selected = cell_json(s.selected);
    selected["purified_test_accuracy"] = s.purified_test_accuracy;
    seeds.push_back(json{{"seed", s.seed},
                         {"clean_test_accuracy", s.clean_test_accuracy},
                         {"attacked_test_accuracy", s.attacked_test_accuracy},
                         {"grid", std::move(grid)},
                         {"selected", std::move(selected)},
                         {"unscored_preserved", s.unscored_preserved},
                         {"wall_ms", s.wall_ms}});
  }
  json summary{
      {"clean_test_accuracy",
       summary_json(collect(report, [](const SeedResult& s) { return s.clean_test_accuracy; }))},
      {"attacked_test_accuracy",
       summary_json(
           collect(report, [](const SeedResult& s) { return s.attacked_test_accuracy; }))},
      {"purified_test_accuracy",
       summary_json(
           collect(report, [](const SeedResult& s) { return s.purified_test_accuracy; }))},
      {"removed", summary_json(collect(report, [](const SeedResult& s) {
                    return static_cast<double>(s.selected.removed);
                  }))},
      {"added", summary_json(collect(report, [](const SeedResult& s) {
                  return static_cast<double>(s.selected.added);
                }))}};
  {
    std::vector<double> counts, fractions;
    for (const SeedResult& s : report.seeds) {
      if (s.selected.adv_edge) {
        counts.push_back(s.selected.adv_edge->first);
        fractions.push_back(s.selected.adv_edge->second);
      }
    }
    summary["adv_edge_count"] = counts.empty() ? json(nullptr) : summary_json(counts);
    summary["adv_edge_fraction"] = fractions.empty() ? json(nullptr) : summary_json(fractions);
  }

  json j{{"attack", report.attack_name},
         {"ptb_rate", report.ptb_rate},
         {"scorer_backend", report.scorer_backend},
         {"generated_at", generated_at},
         {"seeds", std::move(seeds)},
         {"summary", std::move(summary)}};
  std::ofstream out(path);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << j.dump(2) << '\n';
  if (!out) throw IoError("failed writing " + path.string());
}

namespace {

std::string csv_number(double v) {
  std::ostringstream os;
  os.precision(10);
  os << v;
  return os.str();
}

}  // namespace

void write_report_csv(const ExperimentReport& report, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << "attack,ptb_rate,seed,beta,gamma,K,clean_accuracy,attacked_accuracy,purified_accuracy,"
         "adv_edge_count,adv_edge_fraction,removed,added,wall_ms\n";
  for (const SeedResult& s : report.seeds) {
    out << report.attack_name << ',' << csv_number(report.ptb_rate) << ',' << s.seed << ','
        << s.selected.beta << ',' << csv_number(s.selected.gamma) << ',' << s.selected.k << ','
        << csv_number(s.clean_test_accuracy) << ',' << csv_number(s.attacked_test_accuracy)
        << ',' << csv_number(s.purified_test_accuracy) << ',';
    if (s.selected.adv_edge) {
      out << s.selected.adv_edge->first << ',' << csv_number(s.selected.adv_edge->second);
    } else {
      out << ',';
    }
    out << ',' << s.selected.removed << ',' << s.selected.added << ','
        << csv_number(s.wall_ms) << '\n';
  }
  auto emit_summary = [&](const char* tag, bool with_std) {
    const Summary clean =
        summarize(collect(report, [](const SeedResult& s) { return s.clean_test_accuracy; }));
    const Summary attacked =
        summarize(collect(report, [](const SeedResult& s) { return s.attacked_test_accuracy; }));
    const Summary purified =
        summarize(collect(report, [](const SeedResult& s) { return s.purified_test_accuracy; }));
    auto field = [&](const Summary& s) {
      if (!with_std) return csv_number(s.mean);
      return s.stddev ? csv_number(*s.stddev) : std::string();
    };
    out << report.attack_name << ',' << csv_number(report.ptb_rate) << ',' << tag << ",,,,"
        << field(clean) << ',' << field(attacked) << ',' << field(purified) << ",,,,,\n";
  };
  emit_summary("mean", false);
  if (report.seeds.size() >= 2) emit_summary("std", true);
  if (!out) throw IoError("failed writing " + path.string());
}

void write_grid_csv(const ExperimentReport& report, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << "seed,beta,gamma,K,val_accuracy,adv_edge_count,adv_edge_fraction,removed,added\n";
  for (const SeedResult& s : report.seeds) {
    for (const GridCell& cell : s.grid) {
      out << s.seed << ',' << cell.beta << ',' << csv_number(cell.gamma) << ',' << cell.k << ','
          << csv_number(cell.val_accuracy) << ',';
      if (cell.adv_edge) {
        out << cell.adv_edge->first << ',' << csv_number(cell.adv_edge->second);
      } else {
        out << ',';
      }
      out << ',' << cell.removed << ',' << cell.added << '\n';
    }
  }
  if (!out) throw IoError("failed writing " + path.string());
}

}  // namespace gshield
