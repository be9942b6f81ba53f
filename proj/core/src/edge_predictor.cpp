#include "graphshield/edge_predictor.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include <json.hpp>

#include "graphshield/optim.hpp"
#include "graphshield/rng.hpp"

namespace gshield {

namespace {
using nlohmann::json;
}

std::vector<std::pair<Edge, std::int32_t>> derive_edge_labels(
    const std::vector<RelevanceJudgment>& judgments) {
  std::vector<std::pair<Edge, std::int32_t>> out;
  out.reserve(judgments.size());
  for (const RelevanceJudgment& j : judgments) {
    if (!j.scored()) {
      throw ValidationError("cannot derive a label for unscored pair " + to_string(j.pair));
    }
    out.emplace_back(j.pair, *j.score > 4 ? 1 : 0);
  }
  return out;
}

TrainingSet build_training_set(const std::vector<std::pair<Edge, std::int32_t>>& labeled,
                               const EmbeddingMatrix& emb, const EdgeSet& exclude_edges,
                               std::size_t candidate_count, std::uint64_t seed) {
  std::vector<Edge> positives;
  std::vector<Edge> negatives;
  EdgeSet labeled_pairs;
  for (const auto& [pair, label] : labeled) {
    labeled_pairs.insert(pair);
    (label == 1 ? positives : negatives).push_back(pair);
  }
  if (positives.empty()) {
    throw ValidationError("predictor untrainable: no positive edge labels");
  }
  std::sort(positives.begin(), positives.end());
  std::sort(negatives.begin(), negatives.end());

  Rng rng(seed);
  if (negatives.size() < positives.size()) {
    EdgeSet exclude = exclude_edges;
    exclude.insert(labeled_pairs.begin(), labeled_pairs.end());
    const CandidatePairs candidates =
        low_similarity_candidates(emb, std::max<std::size_t>(candidate_count, 1), exclude, seed);
    const std::size_t shortfall = positives.size() - negatives.size();
    for (std::size_t idx :
         rng.sample_without_replacement(candidates.pairs.size(), shortfall)) {
      negatives.push_back(candidates.pairs[idx]);
    }
  } else if (negatives.size() > positives.size()) {
    std::vector<Edge> kept;
    kept.reserve(positives.size());
    for (std::size_t idx :
         rng.sample_without_replacement(negatives.size(), positives.size())) {
      kept.push_back(negatives[idx]);
    }
    std::sort(kept.begin(), kept.end());
    negatives = std::move(kept);
  }

  TrainingSet data;
  for (const Edge& e : positives) data.pairs.push_back({e, 1});
  for (const Edge& e : negatives) data.pairs.push_back({e, 0});
  const Eigen::Index dim = emb.values.cols();
  data.features.resize(2 * static_cast<Eigen::Index>(data.pairs.size()), 2 * dim);
  data.labels.resize(2 * static_cast<Eigen::Index>(data.pairs.size()));
  for (std::size_t k = 0; k < data.pairs.size(); ++k) {
    const Edge e = data.pairs[k].pair;
    const auto row = static_cast<Eigen::Index>(2 * k);
    data.features.row(row) << emb.values.row(e.u), emb.values.row(e.v);
    data.features.row(row + 1) << emb.values.row(e.v), emb.values.row(e.u);
    data.labels(row) = data.pairs[k].label;
    data.labels(row + 1) = data.pairs[k].label;
  }
  return data;
}

namespace {

// Stable binary cross-entropy from the pre-sigmoid value z:
// max(z,0) - z*y + log(1 + exp(-|z|)).
double bce_from_logit(double z, double y) {
  return std::max(z, 0.0) - z * y + std::log1p(std::exp(-std::abs(z)));
}

}  // namespace

double predictor_loss_and_gradients(const EdgePredictorModel& model, const Eigen::MatrixXd& x,
                                    const Eigen::VectorXd& y, PredictorGradients* grads) {
  const Eigen::Index rows = x.rows();
  const Eigen::MatrixXd z1 =
      (x * model.w1).rowwise() + model.b1.transpose();
  const Eigen::MatrixXd a1 = z1.cwiseMax(0.0);
  const Eigen::VectorXd z2 = (a1 * model.w2).array() + model.b2;

  double loss = 0.0;
  for (Eigen::Index i = 0; i < rows; ++i) loss += bce_from_logit(z2(i), y(i));
  loss /= static_cast<double>(rows);

  if (grads) {
    const Eigen::VectorXd p = (1.0 / (1.0 + (-z2.array()).exp())).matrix();
    const Eigen::VectorXd dz2 = (p - y) / static_cast<double>(rows);
    grads->w2 = a1.transpose() * dz2;
    grads->b2 = dz2.sum();
    Eigen::MatrixXd dz1 = dz2 * model.w2.transpose();
    dz1 = (z1.array() > 0.0).select(dz1, 0.0);
    grads->w1 = x.transpose() * dz1;
    grads->b1 = dz1.colwise().sum().transpose();
  }
  return loss;
}

EdgePredictorModel train_edge_predictor(const TrainingSet& data,
                                        const EdgePredictorConfig& config) {
  const Eigen::Index rows = data.features.rows();
  if (rows == 0) throw ValidationError("predictor untrainable: empty training set");
  const double label_sum = data.labels.sum();
  if (label_sum == 0.0 || label_sum == static_cast<double>(rows)) {
    throw ValidationError("predictor untrainable: a single class present");
  }

  Rng rng(config.seed);
  EdgePredictorModel model;
  model.config = config;
  const Eigen::Index in_dim = data.features.cols();
  const double limit = std::sqrt(6.0 / static_cast<double>(in_dim + config.hidden));
  model.w1.resize(in_dim, config.hidden);
  for (Eigen::Index i = 0; i < in_dim; ++i) {
    for (Eigen::Index j = 0; j < config.hidden; ++j) model.w1(i, j) = rng.uniform(-limit, limit);
  }
  model.b1 = Eigen::VectorXd::Zero(config.hidden);
  model.w2 = Eigen::VectorXd::Zero(config.hidden);  // initial loss is exactly ln 2
  model.b2 = 0.0;

  model.loss_history.push_back(
      predictor_loss_and_gradients(model, data.features, data.labels, nullptr));

  Adam<Eigen::MatrixXd> opt_w1(model.w1);
  Adam<Eigen::VectorXd> opt_b1(model.b1), opt_w2(model.w2);
  AdamScalar opt_b2;
  std::vector<std::size_t> order(static_cast<std::size_t>(rows));
  std::iota(order.begin(), order.end(), 0);
  PredictorGradients grads;
  for (std::int32_t epoch = 0; epoch < config.epochs; ++epoch) {
    rng.shuffle(order);
    for (std::size_t start = 0; start < order.size();
         start += static_cast<std::size_t>(config.batch)) {
      const std::size_t count =
          std::min<std::size_t>(config.batch, order.size() - start);
      Eigen::MatrixXd bx(static_cast<Eigen::Index>(count), data.features.cols());
      Eigen::VectorXd by(static_cast<Eigen::Index>(count));
      for (std::size_t r = 0; r < count; ++r) {
        bx.row(static_cast<Eigen::Index>(r)) =
            data.features.row(static_cast<Eigen::Index>(order[start + r]));
        by(static_cast<Eigen::Index>(r)) =
            data.labels(static_cast<Eigen::Index>(order[start + r]));
      }
      const double loss = predictor_loss_and_gradients(model, bx, by, &grads);
      if (!std::isfinite(loss)) {
        throw Error("edge predictor diverged at epoch " + std::to_string(epoch));
      }
      opt_w1.step(model.w1, grads.w1, config.lr);
      opt_b1.step(model.b1, grads.b1, config.lr);
      opt_w2.step(model.w2, grads.w2, config.lr);
      opt_b2.step(model.b2, grads.b2, config.lr);
    }
    model.loss_history.push_back(
        predictor_loss_and_gradients(model, data.features, data.labels, nullptr));
  }
  return model;
}

namespace {

Eigen::VectorXd forward_probabilities(const EdgePredictorModel& model, const Eigen::MatrixXd& x) {
  const Eigen::MatrixXd a1 = ((x * model.w1).rowwise() + model.b1.transpose()).cwiseMax(0.0);
  const Eigen::VectorXd z2 = (a1 * model.w2).array() + model.b2;
  return (1.0 / (1.0 + (-z2.array()).exp())).matrix();
}

}  // namespace

Eigen::VectorXd predict_edges_batch(const EdgePredictorModel& model, const EmbeddingMatrix& emb,
                                    const std::vector<Edge>& pairs) {
  const Eigen::Index dim = emb.values.cols();
  if (2 * dim != model.w1.rows()) {
    throw ValidationError("embedding dim " + std::to_string(dim) +
                          " does not match predictor input " + std::to_string(model.w1.rows()));
  }
  Eigen::MatrixXd x(2 * static_cast<Eigen::Index>(pairs.size()), 2 * dim);
  for (std::size_t k = 0; k < pairs.size(); ++k) {
    const Edge e = pairs[k];
    const auto row = static_cast<Eigen::Index>(2 * k);
    x.row(row) << emb.values.row(e.u), emb.values.row(e.v);
    x.row(row + 1) << emb.values.row(e.v), emb.values.row(e.u);
  }
  const Eigen::VectorXd p = forward_probabilities(model, x);
  Eigen::VectorXd out(static_cast<Eigen::Index>(pairs.size()));
  for (std::size_t k = 0; k < pairs.size(); ++k) {
    out(static_cast<Eigen::Index>(k)) =
        0.5 * (p(static_cast<Eigen::Index>(2 * k)) + p(static_cast<Eigen::Index>(2 * k + 1)));
  }
  return out;
}

double predict_edge(const EdgePredictorModel& model, const EmbeddingMatrix& emb, Edge pair) {
  return predict_edges_batch(model, emb, {pair})(0);
}

EdgeSet select_important_edges(const EdgePredictorModel& model, const EmbeddingMatrix& emb,
                               const EdgeSet& perturbed_edges, double gamma,
                               std::int32_t max_per_node, CandidateMode mode,
                               const SimilarityIndex* index) {
  if (!(gamma > 0.0 && gamma < 1.0)) throw ValidationError("gamma must lie in (0,1)");
  if (max_per_node < 1) throw ValidationError("per-node cap must be at least 1");
  if (mode == CandidateMode::kSimilarityRestricted && index == nullptr) {
    throw ValidationError("similarity-restricted selection requires an index");
  }
  const std::int32_t n = emb.node_count();
  validate_edges_in_range(perturbed_edges, n);

  EdgeSet selected;
  std::vector<Edge> candidates;
  std::vector<std::pair<double, std::int32_t>> ranked;
  for (std::int32_t i = 0; i < n; ++i) {
    candidates.clear();
    if (mode == CandidateMode::kFull) {
      for (std::int32_t j = 0; j < n; ++j) {
        if (j == i) continue;
        const Edge e = make_edge(i, j);
        if (perturbed_edges.count(e) == 0) candidates.push_back(e);
      }
    } else {
      for (const auto& [j, score] : index->neighbors[static_cast<std::size_t>(i)]) {
        const Edge e = make_edge(i, j);
        if (perturbed_edges.count(e) == 0) candidates.push_back(e);
      }
    }
    if (candidates.empty()) continue;
    const Eigen::VectorXd probs = predict_edges_batch(model, emb, candidates);
    ranked.clear();
    for (std::size_t k = 0; k < candidates.size(); ++k) {
      const double p = probs(static_cast<Eigen::Index>(k));
      if (p > gamma) {
        const Edge e = candidates[k];
        ranked.emplace_back(p, e.u == i ? e.v : e.u);
      }
    }
    const std::size_t keep = std::min<std::size_t>(ranked.size(), max_per_node);
    std::partial_sort(ranked.begin(), ranked.begin() + static_cast<std::ptrdiff_t>(keep),
                      ranked.end(), [](const auto& a, const auto& b) {
                        if (a.first != b.first) return a.first > b.first;
                        return a.second < b.second;
                      });
    for (std::size_t k = 0; k < keep; ++k) selected.insert(make_edge(i, ranked[k].second));
  }
  return selected;
}

void save_edge_predictor(const EdgePredictorModel& model, const std::filesystem::path& path) {
  json params = json::array();
  for (Eigen::Index j = 0; j < model.w1.cols(); ++j) {
    for (Eigen::Index i = 0; i < model.w1.rows(); ++i) params.push_back(model.w1(i, j));
  }
  for (Eigen::Index i = 0; i < model.b1.size(); ++i) params.push_back(model.b1(i));
  for (Eigen::Index i = 0; i < model.w2.size(); ++i) params.push_back(model.w2(i));
  params.push_back(model.b2);
  const json j{{"kind", "edge_predictor"},
               {"input_dim", model.w1.rows()},
               {"hidden", model.w1.cols()},
               {"config",
                {{"epochs", model.config.epochs},
                 {"batch", model.config.batch},
                 {"lr", model.config.lr},
                 {"seed", model.config.seed}}},
               {"final_loss", model.loss_history.empty() ? 0.0 : model.loss_history.back()},
               {"params", std::move(params)}};
  std::ofstream out(path);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << j.dump() << '\n';
  if (!out) throw IoError("failed writing " + path.string());
}

EdgePredictorModel load_edge_predictor(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
  try {
    if (j.at("kind").get<std::string>() != "edge_predictor") {
      throw ValidationError(path.string() + ": not an edge predictor checkpoint");
    }
    EdgePredictorModel model;
    const auto in_dim = j.at("input_dim").get<Eigen::Index>();
    const auto hidden = j.at("hidden").get<Eigen::Index>();
    model.config.hidden = static_cast<std::int32_t>(hidden);
    model.config.epochs = j.at("config").at("epochs").get<std::int32_t>();
    model.config.batch = j.at("config").at("batch").get<std::int32_t>();
    model.config.lr = j.at("config").at("lr").get<double>();
    model.config.seed = j.at("config").at("seed").get<std::uint64_t>();
    const json& params = j.at("params");
    if (static_cast<Eigen::Index>(params.size()) != in_dim * hidden + 2 * hidden + 1) {
      throw ValidationError(path.string() + ": checkpoint parameter count mismatch");
    }
    model.w1.resize(in_dim, hidden);
    model.b1.resize(hidden);
    model.w2.resize(hidden);
    std::size_t k = 0;
    for (Eigen::Index col = 0; col < hidden; ++col) {
      for (Eigen::Index row = 0; row < in_dim; ++row) model.w1(row, col) = params.at(k++);
    }
    for (Eigen::Index i = 0; i < hidden; ++i) model.b1(i) = params.at(k++);
    for (Eigen::Index i = 0; i < hidden; ++i) model.w2(i) = params.at(k++);
    model.b2 = params.at(k++);
    if (!model.w1.allFinite() || !model.b1.allFinite() || !model.w2.allFinite() ||
        !std::isfinite(model.b2)) {
      throw ValidationError(path.string() + ": non-finite parameters");
    }
    return model;
  } catch (const json::exception& e) {
    throw ValidationError(path.string() + ": bad edge predictor checkpoint: " + e.what());
  }
}

}  // namespace gshield
