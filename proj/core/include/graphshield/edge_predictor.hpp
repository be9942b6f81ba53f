#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include <Eigen/Dense>

#include "graphshield/embedding.hpp"
#include "graphshield/graph.hpp"
#include "graphshield/scorer.hpp"

namespace gshield {

// y = 1 iff the relevance score exceeds 4. Unscored judgments are invalid
// here; drop fail-open entries before labeling.
std::vector<std::pair<Edge, std::int32_t>> derive_edge_labels(
    const std::vector<RelevanceJudgment>& judgments);

struct TrainingPair {
  Edge pair;
  std::int32_t label = 0;
};

// Balanced pair set with features materialized in both orientations:
// rows 2k and 2k+1 hold h_u||h_v and h_v||h_u for pairs[k].
struct TrainingSet {
  std::vector<TrainingPair> pairs;
  Eigen::MatrixXd features;  // 2*pairs.size() x 2*dim
  Eigen::VectorXd labels;    // 2*pairs.size()
};

// Scored label-0 pairs top up from the low-cosine candidate set (sampled,
// seeded) until they match the positives; surplus negatives are subsampled
// instead. candidate_count bounds the candidate set size.
TrainingSet build_training_set(const std::vector<std::pair<Edge, std::int32_t>>& labeled,
                               const EmbeddingMatrix& emb, const EdgeSet& exclude_edges,
                               std::size_t candidate_count, std::uint64_t seed);

struct EdgePredictorConfig {
  std::int32_t hidden = 256;
  std::int32_t epochs = 200;
  std::int32_t batch = 512;
  double lr = 1e-3;
  std::uint64_t seed = 0;
};

// One-hidden-layer MLP over concatenated node embeddings with a sigmoid
// head. Output layer starts at zero, so the initial loss is exactly ln 2.
struct EdgePredictorModel {
  Eigen::MatrixXd w1;  // 2*dim x hidden
  Eigen::VectorXd b1;  // hidden
  Eigen::VectorXd w2;  // hidden
  double b2 = 0.0;
  EdgePredictorConfig config;
  std::vector<double> loss_history;  // full-set loss: initial, then per epoch

  std::int32_t input_dim() const { return static_cast<std::int32_t>(w1.rows()); }
};

struct PredictorGradients {
  Eigen::MatrixXd w1;
  Eigen::VectorXd b1;
  Eigen::VectorXd w2;
  double b2 = 0.0;
};

// Mean binary cross-entropy of the model on (x, y); gradients optional.
double predictor_loss_and_gradients(const EdgePredictorModel& model, const Eigen::MatrixXd& x,
                                    const Eigen::VectorXd& y, PredictorGradients* grads);

EdgePredictorModel train_edge_predictor(const TrainingSet& data,
                                        const EdgePredictorConfig& config);

// Probability that the pair should be connected, averaged over both feature
// orientations; exactly symmetric in the pair by construction.
double predict_edge(const EdgePredictorModel& model, const EmbeddingMatrix& emb, Edge pair);
Eigen::VectorXd predict_edges_batch(const EdgePredictorModel& model, const EmbeddingMatrix& emb,
                                    const std::vector<Edge>& pairs);

enum class CandidateMode { kFull, kSimilarityRestricted };

// Per node, scans candidate non-neighbors (every other node, or the
// similarity index's list in restricted mode), keeps probabilities strictly
// above gamma and takes the top max_per_node (ties to the lower index);
// the union over nodes is returned as canonical pairs.
EdgeSet select_important_edges(const EdgePredictorModel& model, const EmbeddingMatrix& emb,
                               const EdgeSet& perturbed_edges, double gamma,
                               std::int32_t max_per_node, CandidateMode mode,
                               const SimilarityIndex* index = nullptr);

void save_edge_predictor(const EdgePredictorModel& model, const std::filesystem::path& path);
EdgePredictorModel load_edge_predictor(const std::filesystem::path& path);

}  // namespace gshield
