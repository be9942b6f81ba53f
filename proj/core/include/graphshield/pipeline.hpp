#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "graphshield/attack.hpp"
#include "graphshield/edge_predictor.hpp"
#include "graphshield/embedding.hpp"
#include "graphshield/gnn.hpp"
#include "graphshield/graph.hpp"
#include "graphshield/purify.hpp"
#include "graphshield/scorer.hpp"
#include "graphshield/synth.hpp"

namespace gshield {

struct AttackSpec {
  std::string name = "dice";  // dice | random_flip | pgd | minmax | mettack | targeted | adaptive
  double ptb_rate = 0.2;
  std::int32_t steps = 100;      // pgd
  std::int32_t n_perturb = 2;    // targeted
  std::optional<std::int32_t> target;
  std::optional<std::uint64_t> seed;  // fixed attack seed; derived per run seed when unset
};

struct ScorerSpec {
  std::string backend = "heuristic";  // heuristic | remote | replay
  std::string base_url;
  std::string model;
  std::filesystem::path cache_path;
  double timeout_s = 60.0;
  RetryPolicy retry;
};

struct CandidateSpec {
  CandidateMode mode = CandidateMode::kFull;
  std::int32_t k_sim = 0;  // restricted mode
};

struct PredictorSpec {
  EdgePredictorConfig config;
  std::size_t candidate_count = 4000;  // low-similarity negative pool size
};

struct ExperimentConfig {
  std::optional<std::filesystem::path> dataset_path;
  std::optional<SynthConfig> synth;
  EmbeddingProviderSpec embedding;
  AttackSpec attack;
  ScorerSpec scorer;
  std::vector<std::int32_t> beta_grid{2, 3, 4};
  std::vector<double> gamma_grid{0.91, 0.93, 0.95, 0.97, 0.99};
  std::vector<std::int32_t> k_grid{1, 3, 5, 7, 9};
  CandidateSpec candidates;
  GcnConfig gnn;
  PredictorSpec predictor;
  std::uint64_t seed = 1;
};

ExperimentConfig parse_experiment_config(const std::string& json_text);
ExperimentConfig load_experiment_config(const std::filesystem::path& path);

// The graph named by the config (file or built-in generator).
TextAttributedGraph load_config_dataset(const ExperimentConfig& config);

// Scorer backend per spec; replay mode returns nullptr (cache-only).
std::unique_ptr<ScorerBackend> make_scorer_backend(const ScorerSpec& spec,
                                                   const EmbeddingMatrix& emb);

// Attack dispatch by name. "mettack" and "minmax" map onto the first-order
// pgd attack; the substitution is reported via the returned attack_name.
AttackResult run_attack(const AttackSpec& spec, const TextAttributedGraph& graph,
                        const EmbeddingMatrix& emb, const SplitMask& split,
                        ScorerBackend* scorer, std::uint64_t derived_seed);

// Stage tags mixed into a run seed so pipeline stages draw independent
// streams; the stage subcommands use the same derivations, making a staged
// run reproduce the single-seed pipeline.
namespace stage_seed {
inline constexpr std::uint64_t kSplit = 1;
inline constexpr std::uint64_t kAttack = 2;
inline constexpr std::uint64_t kGcn = 3;
inline constexpr std::uint64_t kPredictor = 4;
inline constexpr std::uint64_t kBalance = 5;
}  // namespace stage_seed

struct GridCell {
  std::int32_t beta = 0;
  double gamma = 0.0;
  std::int32_t k = 0;
  double val_accuracy = 0.0;
  std::size_t removed = 0;
  std::size_t added = 0;
  std::optional<std::pair<std::int32_t, double>> adv_edge;
};

struct SeedResult {
  std::uint64_t seed = 0;
  double clean_test_accuracy = 0.0;
  double attacked_test_accuracy = 0.0;
  std::vector<GridCell> grid;  // validation accuracies only
  GridCell selected;           // best validation cell
  double purified_test_accuracy = 0.0;  // test accuracy of the selected cell
  std::size_t unscored_preserved = 0;
  double wall_ms = 0.0;
};

struct ExperimentReport {
  std::string attack_name;
  double ptb_rate = 0.0;
  std::string scorer_backend;
  std::vector<SeedResult> seeds;
};

struct PipelineOptions {
  std::int32_t n_seeds = 10;
  std::optional<std::string> backend_override;
};

ExperimentReport run_pipeline(const ExperimentConfig& config, const PipelineOptions& options,
                              ScoreCache& cache);

// report.json carries everything; report.csv mirrors the selected rows plus
// mean/std aggregates; grid.csv lists every validation cell.
void write_report_json(const ExperimentReport& report, const std::filesystem::path& path,
                       const std::string& generated_at);
void write_report_csv(const ExperimentReport& report, const std::filesystem::path& path);
void write_grid_csv(const ExperimentReport& report, const std::filesystem::path& path);

// Current UTC time, ISO-8601. Reports treat this as the only impure field.
std::string utc_timestamp();

}  // namespace gshield
