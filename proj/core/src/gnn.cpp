#include "graphshield/gnn.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include <json.hpp>

#include "graphshield/optim.hpp"
#include "graphshield/rng.hpp"

namespace gshield {

namespace {

using nlohmann::json;

// Row-wise softmax, numerically stabilized.
Eigen::MatrixXd softmax_rows(const Eigen::MatrixXd& logits) {
  Eigen::MatrixXd p = logits;
  for (Eigen::Index i = 0; i < p.rows(); ++i) {
    p.row(i).array() -= p.row(i).maxCoeff();
    p.row(i) = p.row(i).array().exp();
    p.row(i) /= p.row(i).sum();
  }
  return p;
}

// Mean cross-entropy over `mask`, and optionally d(loss)/d(logits), which
// is (softmax - onehot)/|mask| on masked rows and zero elsewhere.
double masked_cross_entropy(const Eigen::MatrixXd& logits, std::span<const std::int32_t> labels,
                            std::span<const std::int32_t> mask, Eigen::MatrixXd* dlogits) {
  const Eigen::MatrixXd p = softmax_rows(logits);
  double loss = 0.0;
  if (dlogits) dlogits->setZero(logits.rows(), logits.cols());
  const double inv = 1.0 / static_cast<double>(mask.size());
  for (std::int32_t i : mask) {
    const auto y = labels[static_cast<std::size_t>(i)];
    loss -= std::log(std::max(p(i, y), 1e-300));
    if (dlogits) {
      dlogits->row(i) = p.row(i) * inv;
      (*dlogits)(i, y) -= inv;
    }
  }
  return loss * inv;
}

Eigen::MatrixXd glorot_uniform(Eigen::Index rows, Eigen::Index cols, Rng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(rows + cols));
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = rng.uniform(-limit, limit);
  }
  return m;
}

}  // namespace

Eigen::SparseMatrix<double> normalize_adjacency(const EdgeSet& edges, std::int32_t node_count) {
  validate_edges_in_range(edges, node_count);
  Eigen::VectorXd degree = Eigen::VectorXd::Ones(node_count);  // self-loops
  for (const Edge& e : edges) {
    degree(e.u) += 1.0;
    degree(e.v) += 1.0;
  }
  const Eigen::VectorXd inv_sqrt = degree.array().rsqrt();
  std::vector<Eigen::Triplet<double>> triplets;
  triplets.reserve(2 * edges.size() + static_cast<std::size_t>(node_count));
  for (std::int32_t i = 0; i < node_count; ++i) {
    triplets.emplace_back(i, i, inv_sqrt(i) * inv_sqrt(i));
  }
  for (const Edge& e : edges) {
    const double w = inv_sqrt(e.u) * inv_sqrt(e.v);
    triplets.emplace_back(e.u, e.v, w);
    triplets.emplace_back(e.v, e.u, w);
  }
  Eigen::SparseMatrix<double> adj(node_count, node_count);
  adj.setFromTriplets(triplets.begin(), triplets.end());
  return adj;
}

Eigen::MatrixXd normalize_adjacency_dense(const Eigen::MatrixXd& adj) {
  const Eigen::Index n = adj.rows();
  Eigen::MatrixXd m = adj + Eigen::MatrixXd::Identity(n, n);
  const Eigen::VectorXd inv_sqrt = m.rowwise().sum().array().rsqrt();
  return inv_sqrt.asDiagonal() * m * inv_sqrt.asDiagonal();
}

double gcn_loss_and_gradients(const Eigen::SparseMatrix<double>& adj_norm,
                              const Eigen::MatrixXd& ax, std::span<const std::int32_t> labels,
                              std::span<const std::int32_t> train, const Eigen::MatrixXd& w1,
                              const Eigen::MatrixXd& w2, double weight_decay,
                              GcnGradients* grads) {
  const Eigen::MatrixXd h1_pre = ax * w1;
  const Eigen::MatrixXd h1 = h1_pre.cwiseMax(0.0);
  const Eigen::MatrixXd logits = adj_norm * (h1 * w2);

  Eigen::MatrixXd dlogits;
  double loss = masked_cross_entropy(logits, labels, train, grads ? &dlogits : nullptr);
  loss += 0.5 * weight_decay * (w1.squaredNorm() + w2.squaredNorm());
  if (grads) {
    const Eigen::MatrixXd g1 = adj_norm * dlogits;
    grads->w2 = h1.transpose() * g1 + weight_decay * w2;
    Eigen::MatrixXd dh1 = g1 * w2.transpose();
    dh1 = (h1_pre.array() > 0.0).select(dh1, 0.0);
    grads->w1 = ax.transpose() * dh1 + weight_decay * w1;
  }
  return loss;
}

GcnModel train_gcn(const EdgeSet& edges, const Eigen::MatrixXd& features,
                   std::span<const std::int32_t> labels, const SplitMask& split,
                   const GcnConfig& config) {
  if (!features.allFinite()) throw ValidationError("gcn features contain non-finite values");
  const auto n = static_cast<std::int32_t>(features.rows());
  const auto d = features.cols();
  std::int32_t classes = 0;
  for (std::int32_t y : labels) classes = std::max(classes, y + 1);

  const Eigen::SparseMatrix<double> adj = normalize_adjacency(edges, n);
  const Eigen::MatrixXd ax = adj * features;

  Rng rng(config.seed);
  GcnModel model;
  model.config = config;
  model.w1 = glorot_uniform(d, config.hidden, rng);
  model.w2 = Eigen::MatrixXd::Zero(config.hidden, classes);  // epoch-0 loss = ln(classes)

  Adam<Eigen::MatrixXd> opt1(model.w1), opt2(model.w2);
  GcnGradients grads;
  Eigen::MatrixXd best_w1 = model.w1, best_w2 = model.w2;
  for (std::int32_t epoch = 0; epoch < config.epochs; ++epoch) {
    const double loss = gcn_loss_and_gradients(adj, ax, labels, split.train, model.w1, model.w2,
                                               config.weight_decay, &grads);
    if (!std::isfinite(loss)) throw Error("training diverged at epoch " + std::to_string(epoch));
    model.loss_history.push_back(loss);
    opt1.step(model.w1, grads.w1, config.lr);
    opt2.step(model.w2, grads.w2, config.lr);

    const Eigen::MatrixXd logits = adj * ((ax * model.w1).cwiseMax(0.0) * model.w2);
    const auto preds = predict_classes(logits);
    const double val_acc = accuracy(preds, labels, split.val);
    if (val_acc > model.best_val_accuracy || model.best_epoch < 0) {
      model.best_val_accuracy = val_acc;
      model.best_epoch = epoch;
      best_w1 = model.w1;
      best_w2 = model.w2;
    }
  }
  model.w1 = std::move(best_w1);
  model.w2 = std::move(best_w2);
  return model;
}

Eigen::MatrixXd gcn_logits(const GcnModel& model, const EdgeSet& edges,
                           const Eigen::MatrixXd& features) {
  const auto n = static_cast<std::int32_t>(features.rows());
  const Eigen::SparseMatrix<double> adj = normalize_adjacency(edges, n);
  return adj * (((adj * features) * model.w1).cwiseMax(0.0) * model.w2);
}

std::vector<std::int32_t> predict_classes(const Eigen::MatrixXd& logits) {
  std::vector<std::int32_t> preds(static_cast<std::size_t>(logits.rows()));
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    Eigen::Index best = 0;
    logits.row(i).maxCoeff(&best);
    preds[static_cast<std::size_t>(i)] = static_cast<std::int32_t>(best);
  }
  return preds;
}

double evaluate_gcn(const GcnModel& model, const EdgeSet& edges, const Eigen::MatrixXd& features,
                    std::span<const std::int32_t> labels, std::span<const std::int32_t> mask) {
  const auto preds = predict_classes(gcn_logits(model, edges, features));
  return accuracy(preds, labels, mask);
}

namespace {

json flatten_params(std::initializer_list<const Eigen::MatrixXd*> mats) {
  json arr = json::array();
  for (const auto* m : mats) {
    for (Eigen::Index j = 0; j < m->cols(); ++j) {
      for (Eigen::Index i = 0; i < m->rows(); ++i) arr.push_back((*m)(i, j));
    }
  }
  return arr;
}

void unflatten_params(const json& arr, std::initializer_list<Eigen::MatrixXd*> mats) {
  std::size_t k = 0;
  for (auto* m : mats) {
    for (Eigen::Index j = 0; j < m->cols(); ++j) {
      for (Eigen::Index i = 0; i < m->rows(); ++i) (*m)(i, j) = arr.at(k++).get<double>();
    }
  }
  if (k != arr.size()) throw ValidationError("checkpoint parameter count mismatch");
}

}  // namespace

void save_gcn(const GcnModel& model, const std::filesystem::path& path) {
  json j{{"kind", "gcn"},
         {"input_dim", model.w1.rows()},
         {"hidden", model.w1.cols()},
         {"classes", model.w2.cols()},
         {"config",
          {{"lr", model.config.lr},
           {"weight_decay", model.config.weight_decay},
           {"epochs", model.config.epochs},
           {"seed", model.config.seed}}},
         {"best_val_accuracy", model.best_val_accuracy},
         {"best_epoch", model.best_epoch},
         {"params", flatten_params({&model.w1, &model.w2})}};
  std::ofstream out(path);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << j.dump() << '\n';
  if (!out) throw IoError("failed writing " + path.string());
}

GcnModel load_gcn(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
  try {
    if (j.at("kind").get<std::string>() != "gcn") {
      throw ValidationError(path.string() + ": not a gcn checkpoint");
    }
    GcnModel model;
    const auto d = j.at("input_dim").get<Eigen::Index>();
    const auto h = j.at("hidden").get<Eigen::Index>();
    const auto c = j.at("classes").get<Eigen::Index>();
    model.w1.resize(d, h);
    model.w2.resize(h, c);
    model.config.hidden = static_cast<std::int32_t>(h);
    model.config.lr = j.at("config").at("lr").get<double>();
    model.config.weight_decay = j.at("config").at("weight_decay").get<double>();
    model.config.epochs = j.at("config").at("epochs").get<std::int32_t>();
    model.config.seed = j.at("config").at("seed").get<std::uint64_t>();
    model.best_val_accuracy = j.at("best_val_accuracy").get<double>();
    model.best_epoch = j.at("best_epoch").get<std::int32_t>();
    unflatten_params(j.at("params"), {&model.w1, &model.w2});
    if (!model.w1.allFinite() || !model.w2.allFinite()) {
      throw ValidationError(path.string() + ": non-finite parameters");
    }
    return model;
  } catch (const json::exception& e) {
    throw ValidationError(path.string() + ": bad gcn checkpoint: " + e.what());
  }
}

SurrogateModel surrogate_fit(const EdgeSet& edges, std::int32_t node_count,
                             const Eigen::MatrixXd& features, std::span<const std::int32_t> labels,
                             std::span<const std::int32_t> train,
                             const SurrogateConfig& config) {
  std::int32_t classes = 0;
  for (std::int32_t y : labels) classes = std::max(classes, y + 1);
  const Eigen::SparseMatrix<double> adj = normalize_adjacency(edges, node_count);
  const Eigen::MatrixXd a2x = adj * (adj * features);

  SurrogateModel model{Eigen::MatrixXd::Zero(features.cols(), classes)};
  Adam<Eigen::MatrixXd> opt(model.w);
  Eigen::MatrixXd dlogits;
  for (std::int32_t epoch = 0; epoch < config.epochs; ++epoch) {
    const Eigen::MatrixXd logits = a2x * model.w;
    double loss = masked_cross_entropy(logits, labels, train, &dlogits);
    loss += 0.5 * config.weight_decay * model.w.squaredNorm();
    if (!std::isfinite(loss)) throw Error("surrogate diverged at epoch " + std::to_string(epoch));
    const Eigen::MatrixXd grad = a2x.transpose() * dlogits + config.weight_decay * model.w;
    opt.step(model.w, grad, config.lr);
  }
  return model;
}

Eigen::MatrixXd surrogate_logits(const SurrogateModel& model, const EdgeSet& edges,
                                 std::int32_t node_count, const Eigen::MatrixXd& features) {
  const Eigen::SparseMatrix<double> adj = normalize_adjacency(edges, node_count);
  return adj * (adj * (features * model.w));
}

double surrogate_loss_dense(const SurrogateModel& model, const Eigen::MatrixXd& adj,
                            const Eigen::MatrixXd& features, std::span<const std::int32_t> labels,
                            std::span<const std::int32_t> train) {
  const Eigen::MatrixXd a_hat = normalize_adjacency_dense(adj);
  const Eigen::MatrixXd logits = a_hat * (a_hat * (features * model.w));
  return masked_cross_entropy(logits, labels, train, nullptr);
}

Eigen::MatrixXd surrogate_adjacency_gradient(const SurrogateModel& model,
                                             const Eigen::MatrixXd& adj,
                                             const Eigen::MatrixXd& features,
                                             std::span<const std::int32_t> labels,
                                             std::span<const std::int32_t> train) {
  const Eigen::Index n = adj.rows();
  const Eigen::MatrixXd m = adj + Eigen::MatrixXd::Identity(n, n);
  const Eigen::VectorXd degree = m.rowwise().sum();
  const Eigen::VectorXd inv_sqrt = degree.array().rsqrt();
  const Eigen::MatrixXd a_hat = inv_sqrt.asDiagonal() * m * inv_sqrt.asDiagonal();

  const Eigen::MatrixXd h = features * model.w;  // n x c
  const Eigen::MatrixXd b = a_hat * h;
  const Eigen::MatrixXd logits = a_hat * b;
  Eigen::MatrixXd dlogits;
  masked_cross_entropy(logits, labels, train, &dlogits);

  // Chain rule through A_hat = D^{-1/2} (A+I) D^{-1/2}: direct entry terms
  // plus the degree terms each entry feeds through its row sum.
  const Eigen::MatrixXd c = dlogits * b.transpose() + (a_hat * dlogits) * h.transpose();
  const Eigen::MatrixXd ca = c.cwiseProduct(a_hat);
  const Eigen::VectorXd row_sums = ca.rowwise().sum();
  const Eigen::VectorXd col_sums = ca.colwise().sum().transpose();
  const Eigen::VectorXd ddeg =
      (-(row_sums + col_sums).array() / (2.0 * degree.array())).matrix();

  Eigen::MatrixXd grad(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    grad(i, i) = 0.0;
    for (Eigen::Index j = i + 1; j < n; ++j) {
      const double g = (c(i, j) + c(j, i)) * inv_sqrt(i) * inv_sqrt(j) + ddeg(i) + ddeg(j);
      grad(i, j) = g;
      grad(j, i) = g;
    }
  }
  return grad;
}

double classification_margin(const Eigen::RowVectorXd& logits, std::int32_t label) {
  double best_other = -std::numeric_limits<double>::infinity();
  for (Eigen::Index c = 0; c < logits.size(); ++c) {
    if (c != label) best_other = std::max(best_other, logits(c));
  }
  return logits(label) - best_other;
}

}  // namespace gshield
