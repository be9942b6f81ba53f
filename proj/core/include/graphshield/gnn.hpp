#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include "graphshield/graph.hpp"

namespace gshield {

// D^{-1/2} (A + I) D^{-1/2} with D the degree matrix of A + I. Symmetric.
Eigen::SparseMatrix<double> normalize_adjacency(const EdgeSet& edges, std::int32_t node_count);

// Same normalization over a continuous symmetric adjacency with zero
// diagonal (the relaxed structure used by gradient-based attacks).
Eigen::MatrixXd normalize_adjacency_dense(const Eigen::MatrixXd& adj);

struct GcnConfig {
  std::int32_t hidden = 16;
  double lr = 0.01;
  double weight_decay = 5e-4;
  std::int32_t epochs = 200;
  std::uint64_t seed = 0;
};

// Two-layer GCN: logits = A_hat * relu(A_hat X W1) W2. No dropout, so a
// fixed seed reproduces training bit-for-bit.
struct GcnModel {
  Eigen::MatrixXd w1;  // d x hidden
  Eigen::MatrixXd w2;  // hidden x classes
  GcnConfig config;
  double best_val_accuracy = 0.0;
  std::int32_t best_epoch = -1;
  std::vector<double> loss_history;  // pre-update loss per epoch
};

struct GcnGradients {
  Eigen::MatrixXd w1;
  Eigen::MatrixXd w2;
};

// Cross-entropy over `train` plus 0.5*weight_decay*(|W1|^2+|W2|^2).
// `ax` is A_hat * X precomputed by the caller. Gradients optional.
double gcn_loss_and_gradients(const Eigen::SparseMatrix<double>& adj_norm,
                              const Eigen::MatrixXd& ax, std::span<const std::int32_t> labels,
                              std::span<const std::int32_t> train, const Eigen::MatrixXd& w1,
                              const Eigen::MatrixXd& w2, double weight_decay,
                              GcnGradients* grads);

// Full-batch Adam on the loss above; keeps the parameters of the epoch with
// the best validation accuracy.
GcnModel train_gcn(const EdgeSet& edges, const Eigen::MatrixXd& features,
                   std::span<const std::int32_t> labels, const SplitMask& split,
                   const GcnConfig& config);

Eigen::MatrixXd gcn_logits(const GcnModel& model, const EdgeSet& edges,
                           const Eigen::MatrixXd& features);

// Row-wise argmax; ties resolve to the lowest class index.
std::vector<std::int32_t> predict_classes(const Eigen::MatrixXd& logits);

double evaluate_gcn(const GcnModel& model, const EdgeSet& edges, const Eigen::MatrixXd& features,
                    std::span<const std::int32_t> labels, std::span<const std::int32_t> mask);

void save_gcn(const GcnModel& model, const std::filesystem::path& path);
GcnModel load_gcn(const std::filesystem::path& path);

// Linearized two-layer propagation A_hat^2 X W, used to guide attacks.
struct SurrogateModel {
  Eigen::MatrixXd w;  // d x classes
};

struct SurrogateConfig {
  double lr = 0.01;
  double weight_decay = 5e-4;
  std::int32_t epochs = 200;
};

// Convex in W; fit from zero init by full-batch Adam, so the result is
// deterministic without a seed.
SurrogateModel surrogate_fit(const EdgeSet& edges, std::int32_t node_count,
                             const Eigen::MatrixXd& features, std::span<const std::int32_t> labels,
                             std::span<const std::int32_t> train, const SurrogateConfig& config = {});

Eigen::MatrixXd surrogate_logits(const SurrogateModel& model, const EdgeSet& edges,
                                 std::int32_t node_count, const Eigen::MatrixXd& features);

// Training cross-entropy of the surrogate on a relaxed adjacency.
double surrogate_loss_dense(const SurrogateModel& model, const Eigen::MatrixXd& adj,
                            const Eigen::MatrixXd& features, std::span<const std::int32_t> labels,
                            std::span<const std::int32_t> train);

// d(loss)/d(pair variable) for every unordered pair, returned as a
// symmetric matrix with zero diagonal. A pair variable moves A_ij and A_ji
// together, matching a symmetric structure flip.
Eigen::MatrixXd surrogate_adjacency_gradient(const SurrogateModel& model,
                                             const Eigen::MatrixXd& adj,
                                             const Eigen::MatrixXd& features,
                                             std::span<const std::int32_t> labels,
                                             std::span<const std::int32_t> train);

// logit[label] - max logit of any other class for one node.
double classification_margin(const Eigen::RowVectorXd& logits, std::int32_t label);

}  // namespace gshield
