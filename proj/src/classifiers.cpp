/*
 * hetsched
 * Copyright (c) The hetsched Authors.
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include "hetsched/classifiers.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

#include "hetsched/error.hpp"

namespace hetsched::ml {

Dataset Dataset::subset(const std::vector<std::size_t>& rows) const {
  Dataset out;
  out.X.resize(static_cast<Eigen::Index>(rows.size()), X.cols());
  out.y.reserve(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    out.X.row(static_cast<Eigen::Index>(i)) = X.row(static_cast<Eigen::Index>(rows[i]));
    out.y.push_back(y[rows[i]]);
  }
  return out;
}

std::vector<std::string> label_set(const std::vector<std::string>& y) {
  std::vector<std::string> out = y;
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

namespace {

void check_shape(const Dataset& data) {
  if (static_cast<std::size_t>(data.X.rows()) != data.y.size()) {
    throw Error(Errc::kInvalidArgument, "dataset has mismatched rows and labels");
  }
}

Json matrix_to_json(const Eigen::MatrixXd& m) {
  Json rows = Json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    Json row = Json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    rows.push_back(row);
  }
  return rows;
}

Eigen::MatrixXd matrix_from_json(const Json& j, Eigen::Index cols_if_empty = 0) {
  Eigen::Index rows = static_cast<Eigen::Index>(j.size());
  Eigen::Index cols = rows > 0 ? static_cast<Eigen::Index>(j.at(0).size()) : cols_if_empty;
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = j.at(r).at(c).get<double>();
  }
  return m;
}

Json vector_to_json(const Eigen::VectorXd& v) {
  return Json(std::vector<double>(v.data(), v.data() + v.size()));
}

Eigen::VectorXd vector_from_json(const Json& j) {
  auto values = j.get<std::vector<double>>();
  return Eigen::Map<Eigen::VectorXd>(values.data(), static_cast<Eigen::Index>(values.size()));
}

// Majority label, ties to the lexicographically smallest.
std::string majority(const std::map<std::string, int>& counts) {
  std::string best;
  int best_count = -1;
  for (const auto& [label, count] : counts) {
    if (count > best_count) {
      best = label;
      best_count = count;
    }
  }
  return best;
}

}  // namespace

// ---- Standardizer ----

Standardizer Standardizer::fit(const Eigen::MatrixXd& X) {
  Standardizer s;
  const double n = static_cast<double>(std::max<Eigen::Index>(X.rows(), 1));
  s.mean = X.colwise().sum().transpose() / n;
  s.stddev.resize(X.cols());
  for (Eigen::Index c = 0; c < X.cols(); ++c) {
    double var = (X.col(c).array() - s.mean(c)).square().sum() / n;
    s.stddev(c) = std::max(std::sqrt(var), 1e-9);
  }
  return s;
}

Eigen::VectorXd Standardizer::apply(const Eigen::VectorXd& x) const {
  return (x - mean).cwiseQuotient(stddev);
}

Eigen::MatrixXd Standardizer::apply(const Eigen::MatrixXd& X) const {
  return (X.rowwise() - mean.transpose()).array().rowwise() / stddev.transpose().array();
}

Json Standardizer::to_json() const {
  Json out = Json::array();
  for (Eigen::Index i = 0; i < mean.size(); ++i) out.push_back({{"mean", mean(i)}, {"std", stddev(i)}});
  return out;
}

Standardizer Standardizer::from_json(const Json& j) {
  Standardizer s;
  s.mean.resize(static_cast<Eigen::Index>(j.size()));
  s.stddev.resize(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) {
    s.mean(static_cast<Eigen::Index>(i)) = j.at(i).at("mean").get<double>();
    s.stddev(static_cast<Eigen::Index>(i)) = j.at(i).at("std").get<double>();
  }
  return s;
}

// ---- kNN ----

KnnModel fit_knn(const Dataset& data, int k) {
  check_shape(data);
  if (data.size() == 0) throw Error(Errc::kEmptyDataset, "kNN needs at least one training row");
  if (k < 1) throw Error(Errc::kInvalidArgument, "k must be positive");
  return KnnModel{std::min<int>(k, static_cast<int>(data.size())), data.X, data.y};
}

std::string predict_knn(const KnnModel& model, const Eigen::VectorXd& x) {
  const auto n = static_cast<std::size_t>(model.X.rows());
  std::vector<std::pair<double, std::size_t>> dist(n);
  for (std::size_t i = 0; i < n; ++i) {
    dist[i] = {(model.X.row(static_cast<Eigen::Index>(i)).transpose() - x).squaredNorm(), i};
  }
  const auto k = std::min<std::size_t>(static_cast<std::size_t>(model.k), n);
  // (distance, row index) ordering breaks distance ties by lower row.
  std::partial_sort(dist.begin(), dist.begin() + static_cast<std::ptrdiff_t>(k), dist.end());
  std::map<std::string, int> votes;
  for (std::size_t i = 0; i < k; ++i) ++votes[model.y[dist[i].second]];
  return majority(votes);
}

// ---- CART ----

int TreeModel::depth() const {
  if (nodes.empty()) return 0;
  std::vector<std::pair<int, int>> stack{{0, 0}};
  int deepest = 0;
  while (!stack.empty()) {
    auto [idx, d] = stack.back();
    stack.pop_back();
    deepest = std::max(deepest, d);
    const TreeNode& node = nodes[static_cast<std::size_t>(idx)];
    if (!node.is_leaf()) {
      stack.emplace_back(node.left, d + 1);
      stack.emplace_back(node.right, d + 1);
    }
  }
  return deepest;
}

namespace {

// A split's purity score is sum_c(cL^2)/nL + sum_c(cR^2)/nR; maximizing it
// minimizes weighted Gini. Scores are compared exactly as fractions.
struct SplitScore {
  std::int64_t sum_sq_left = 0;
  std::int64_t n_left = 0;
  std::int64_t sum_sq_right = 0;
  std::int64_t n_right = 0;

  __int128 numerator() const {
    return static_cast<__int128>(sum_sq_left) * n_right +
           static_cast<__int128>(sum_sq_right) * n_left;
  }
  __int128 denominator() const { return static_cast<__int128>(n_left) * n_right; }

  bool better_than(const SplitScore& other) const {
    return numerator() * other.denominator() > other.numerator() * denominator();
  }
};

class TreeBuilder {
 public:
  TreeBuilder(const Dataset& data, int max_depth, int min_samples_split)
      : data_(data), max_depth_(max_depth), min_split_(min_samples_split) {
    labels_ = label_set(data.y);
    for (std::size_t i = 0; i < labels_.size(); ++i) label_index_[labels_[i]] = static_cast<int>(i);
    for (const auto& label : data.y) ys_.push_back(label_index_.at(label));
  }

  int build(std::vector<std::size_t> rows, int depth, std::vector<TreeNode>& nodes) {
    int index = static_cast<int>(nodes.size());
    nodes.emplace_back();

    std::map<std::string, int> counts;
    for (auto r : rows) ++counts[data_.y[r]];
    const std::string label = majority(counts);

    bool stop = counts.size() <= 1 || (max_depth_ != kUnlimitedDepth && depth >= max_depth_) ||
                static_cast<int>(rows.size()) < min_split_;
    std::optional<std::pair<int, double>> split;
    if (!stop) split = best_split(rows);
    if (!split) {
      nodes[static_cast<std::size_t>(index)].label = label;
      return index;
    }

    auto [feature, threshold] = *split;
    std::vector<std::size_t> left, right;
    for (auto r : rows) {
      (data_.X(static_cast<Eigen::Index>(r), feature) <= threshold ? left : right).push_back(r);
    }
    int l = build(std::move(left), depth + 1, nodes);
    int rgt = build(std::move(right), depth + 1, nodes);
    TreeNode& node = nodes[static_cast<std::size_t>(index)];
    node.feature = feature;
    node.threshold = threshold;
    node.left = l;
    node.right = rgt;
    node.label = label;
    return index;
  }

 private:
  std::optional<std::pair<int, double>> best_split(const std::vector<std::size_t>& rows) const {
    std::optional<std::pair<int, double>> best;
    SplitScore best_score;
    const auto n = static_cast<std::int64_t>(rows.size());
    const std::size_t num_labels = labels_.size();

    std::vector<std::int64_t> total(num_labels, 0);
    for (auto r : rows) ++total[static_cast<std::size_t>(ys_[r])];

    for (Eigen::Index f = 0; f < data_.X.cols(); ++f) {
      std::vector<std::size_t> order = rows;
      std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return data_.X(static_cast<Eigen::Index>(a), f) < data_.X(static_cast<Eigen::Index>(b), f);
      });
      std::vector<std::int64_t> left(num_labels, 0);
      for (std::int64_t i = 0; i + 1 < n; ++i) {
        ++left[static_cast<std::size_t>(ys_[order[static_cast<std::size_t>(i)]])];
        double lo = data_.X(static_cast<Eigen::Index>(order[static_cast<std::size_t>(i)]), f);
        double hi = data_.X(static_cast<Eigen::Index>(order[static_cast<std::size_t>(i + 1)]), f);
        if (!(lo < hi)) continue;
        double threshold = lo + (hi - lo) / 2.0;
        if (!(threshold < hi)) threshold = lo;

        SplitScore score;
        score.n_left = i + 1;
        score.n_right = n - i - 1;
        for (std::size_t c = 0; c < num_labels; ++c) {
          score.sum_sq_left += left[c] * left[c];
          std::int64_t rc = total[c] - left[c];
          score.sum_sq_right += rc * rc;
        }
        if (!best || score.better_than(best_score)) {
          best = std::make_pair(static_cast<int>(f), threshold);
          best_score = score;
        }
      }
    }
    return best;
  }

  const Dataset& data_;
  int max_depth_;
  int min_split_;
  std::vector<std::string> labels_;
  std::map<std::string, int> label_index_;
  std::vector<int> ys_;
};

}  // namespace

TreeModel fit_tree(const Dataset& data, int max_depth, int min_samples_split) {
  check_shape(data);
  if (data.size() == 0) throw Error(Errc::kEmptyDataset, "tree needs at least one training row");
  TreeModel model;
  model.max_depth = max_depth;
  std::vector<std::size_t> rows(data.size());
  std::iota(rows.begin(), rows.end(), 0);
  TreeBuilder(data, max_depth, min_samples_split).build(std::move(rows), 0, model.nodes);
  return model;
}

std::string predict_tree(const TreeModel& model, const Eigen::VectorXd& x) {
  std::size_t idx = 0;
  while (!model.nodes[idx].is_leaf()) {
    const TreeNode& node = model.nodes[idx];
    idx = static_cast<std::size_t>(x(node.feature) <= node.threshold ? node.left : node.right);
  }
  return model.nodes[idx].label;
}

// ---- logistic regression ----

double logreg_objective(const LogRegModel& model, const Dataset& data, LogRegModel* gradient) {
  const auto n = static_cast<Eigen::Index>(data.size());
  const auto num_classes = static_cast<Eigen::Index>(model.classes.size());
  std::map<std::string, Eigen::Index> class_index;
  for (Eigen::Index c = 0; c < num_classes; ++c) class_index[model.classes[static_cast<std::size_t>(c)]] = c;

  // scores: n x C
  Eigen::MatrixXd scores = (data.X * model.weights.transpose()).rowwise() + model.biases.transpose();
  Eigen::MatrixXd probs(n, num_classes);
  double loss = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    double max_score = scores.row(i).maxCoeff();
    Eigen::RowVectorXd e = (scores.row(i).array() - max_score).exp();
    double z = e.sum();
    probs.row(i) = e / z;
    Eigen::Index yi = class_index.at(data.y[static_cast<std::size_t>(i)]);
    loss -= scores(i, yi) - max_score - std::log(z);
  }
  loss = n > 0 ? loss / static_cast<double>(n) : 0.0;
  loss += 0.5 * model.l2_lambda * model.weights.squaredNorm();

  if (gradient != nullptr) {
    Eigen::MatrixXd residual = probs;
    for (Eigen::Index i = 0; i < n; ++i) {
      residual(i, class_index.at(data.y[static_cast<std::size_t>(i)])) -= 1.0;
    }
    double inv_n = n > 0 ? 1.0 / static_cast<double>(n) : 0.0;
    gradient->classes = model.classes;
    gradient->l2_lambda = model.l2_lambda;
    gradient->weights = inv_n * residual.transpose() * data.X + model.l2_lambda * model.weights;
    gradient->biases = inv_n * residual.colwise().sum().transpose();
  }
  return loss;
}

LogRegModel fit_logreg(const Dataset& data, double l2_lambda, int iterations, double learning_rate,
                       std::vector<double>* loss_history) {
  check_shape(data);
  LogRegModel model;
  model.l2_lambda = l2_lambda;
  model.classes = label_set(data.y);
  if (data.size() == 0 || data.size() < model.classes.size()) {
    throw Error(Errc::kInvalidArgument, "logistic regression needs at least one row per class");
  }
  const auto num_classes = static_cast<Eigen::Index>(model.classes.size());
  model.weights = Eigen::MatrixXd::Zero(num_classes, data.X.cols());
  model.biases = Eigen::VectorXd::Zero(num_classes);

  LogRegModel grad;
  for (int it = 0; it <= iterations; ++it) {
    double loss = logreg_objective(model, data, it < iterations ? &grad : nullptr);
    if (!std::isfinite(loss)) {
      throw Error(Errc::kNonFiniteLoss, "logistic regression loss became non-finite");
    }
    if (loss_history != nullptr) loss_history->push_back(loss);
    if (it == iterations) break;
    model.weights -= learning_rate * grad.weights;
    model.biases -= learning_rate * grad.biases;
  }
  return model;
}

std::string predict_logreg(const LogRegModel& model, const Eigen::VectorXd& x) {
  Eigen::VectorXd scores = model.weights * x + model.biases;
  Eigen::Index best = 0;
  for (Eigen::Index c = 1; c < scores.size(); ++c) {
    if (scores(c) > scores(best)) best = c;  // ties keep the earlier (sorted) class
  }
  return model.classes[static_cast<std::size_t>(best)];
}

// ---- families ----

std::string_view family_name(Family family) {
  switch (family) {
    case Family::kTree: return "tree";
    case Family::kLogistic: return "logistic";
    case Family::kKnn: return "knn";
    case Family::kConstant: return "constant";
  }
  return "?";
}

Json ModelConfig::hyperparams() const {
  switch (family) {
    case Family::kTree: return {{"max_depth", max_depth == kUnlimitedDepth ? Json() : Json(max_depth)}};
    case Family::kLogistic: return {{"l2_lambda", l2_lambda}};
    case Family::kKnn: return {{"k", k}};
    case Family::kConstant: return Json::object();
  }
  return Json::object();
}

std::vector<ModelConfig> default_grid() {
  std::vector<ModelConfig> grid;
  int i = 0;
  for (int depth : {2, 4, 8, kUnlimitedDepth}) {
    ModelConfig c;
    c.family = Family::kTree;
    c.index = i++;
    c.max_depth = depth;
    grid.push_back(c);
  }
  i = 0;
  for (double lambda : {0.0, 0.1, 1.0}) {
    ModelConfig c;
    c.family = Family::kLogistic;
    c.index = i++;
    c.l2_lambda = lambda;
    grid.push_back(c);
  }
  i = 0;
  for (int k : {1, 3, 5}) {
    ModelConfig c;
    c.family = Family::kKnn;
    c.index = i++;
    c.k = k;
    grid.push_back(c);
  }
  return grid;
}

ModelParams fit_model(const ModelConfig& config, const Dataset& data) {
  switch (config.family) {
    case Family::kTree: return fit_tree(data, config.max_depth);
    case Family::kLogistic: return fit_logreg(data, config.l2_lambda);
    case Family::kKnn: return fit_knn(data, config.k);
    case Family::kConstant: {
      if (data.size() == 0) throw Error(Errc::kEmptyDataset, "no rows");
      std::map<std::string, int> counts;
      for (const auto& l : data.y) ++counts[l];
      return ConstantModel{majority(counts)};
    }
  }
  throw Error(Errc::kInvalidArgument, "unknown family");
}

std::string predict(const ModelParams& model, const Eigen::VectorXd& x) {
  struct Visitor {
    const Eigen::VectorXd& x;
    std::string operator()(const TreeModel& m) const { return predict_tree(m, x); }
    std::string operator()(const LogRegModel& m) const { return predict_logreg(m, x); }
    std::string operator()(const KnnModel& m) const { return predict_knn(m, x); }
    std::string operator()(const ConstantModel& m) const { return m.label; }
  };
  return std::visit(Visitor{x}, model);
}

Family family_of(const ModelParams& model) {
  switch (model.index()) {
    case 0: return Family::kTree;
    case 1: return Family::kLogistic;
    case 2: return Family::kKnn;
    default: return Family::kConstant;
  }
}

std::size_t input_dimension(const ModelParams& model) {
  struct Visitor {
    std::size_t operator()(const TreeModel& m) const {
      int max_feature = -1;
      for (const auto& n : m.nodes) max_feature = std::max(max_feature, n.feature);
      return static_cast<std::size_t>(max_feature + 1);  // lower bound only
    }
    std::size_t operator()(const LogRegModel& m) const { return static_cast<std::size_t>(m.weights.cols()); }
    std::size_t operator()(const KnnModel& m) const { return static_cast<std::size_t>(m.X.cols()); }
    std::size_t operator()(const ConstantModel&) const { return 0; }
  };
  return std::visit(Visitor{}, model);
}

namespace {

Json tree_node_to_json(const TreeModel& m, int idx) {
  const TreeNode& n = m.nodes[static_cast<std::size_t>(idx)];
  if (n.is_leaf()) return {{"label", n.label}};
  return {{"feature", n.feature},
          {"threshold", n.threshold},
          {"label", n.label},
          {"left", tree_node_to_json(m, n.left)},
          {"right", tree_node_to_json(m, n.right)}};
}

int tree_node_from_json(const Json& j, std::vector<TreeNode>& nodes) {
  int idx = static_cast<int>(nodes.size());
  nodes.emplace_back();
  TreeNode node;
  node.label = j.at("label").get<std::string>();
  if (j.contains("feature")) {
    node.feature = j.at("feature").get<int>();
    node.threshold = j.at("threshold").get<double>();
    node.left = tree_node_from_json(j.at("left"), nodes);
    node.right = tree_node_from_json(j.at("right"), nodes);
  }
  nodes[static_cast<std::size_t>(idx)] = node;
  return idx;
}

}  // namespace

Json model_to_json(const ModelParams& model, const ModelConfig& config) {
  Json params;
  if (const auto* t = std::get_if<TreeModel>(&model)) {
    params = {{"root", tree_node_to_json(*t, 0)}};
  } else if (const auto* l = std::get_if<LogRegModel>(&model)) {
    params = {{"classes", l->classes},
              {"weights", matrix_to_json(l->weights)},
              {"biases", vector_to_json(l->biases)}};
  } else if (const auto* k = std::get_if<KnnModel>(&model)) {
    params = {{"k", k->k}, {"X", matrix_to_json(k->X)}, {"y", k->y}, {"dimension", k->X.cols()}};
  } else {
    params = {{"label", std::get<ConstantModel>(model).label}};
  }
  return {{"family", std::string(family_name(config.family))},
          {"index", config.index},
          {"hyperparams", config.hyperparams()},
          {"params", params}};
}

ModelConfig config_from_json(const Json& j) {
  ModelConfig c;
  std::string family = j.at("family").get<std::string>();
  c.index = j.value("index", 0);
  const Json& hp = j.value("hyperparams", Json::object());
  if (family == "tree") {
    c.family = Family::kTree;
    c.max_depth = hp.contains("max_depth") && !hp.at("max_depth").is_null()
                      ? hp.at("max_depth").get<int>()
                      : kUnlimitedDepth;
  } else if (family == "logistic") {
    c.family = Family::kLogistic;
    c.l2_lambda = hp.value("l2_lambda", 0.0);
  } else if (family == "knn") {
    c.family = Family::kKnn;
    c.k = hp.value("k", 1);
  } else if (family == "constant") {
    c.family = Family::kConstant;
  } else {
    throw Error(Errc::kParse, "unknown model family " + family);
  }
  return c;
}

ModelParams model_from_json(const Json& j) {
  try {
    ModelConfig c = config_from_json(j);
    const Json& p = j.at("params");
    switch (c.family) {
      case Family::kTree: {
        TreeModel t;
        t.max_depth = c.max_depth;
        tree_node_from_json(p.at("root"), t.nodes);
        return t;
      }
      case Family::kLogistic: {
        LogRegModel l;
        l.l2_lambda = c.l2_lambda;
        l.classes = p.at("classes").get<std::vector<std::string>>();
        l.weights = matrix_from_json(p.at("weights"));
        l.biases = vector_from_json(p.at("biases"));
        return l;
      }
      case Family::kKnn: {
        KnnModel k;
        k.k = p.at("k").get<int>();
        k.X = matrix_from_json(p.at("X"), p.value("dimension", Eigen::Index{0}));
        k.y = p.at("y").get<std::vector<std::string>>();
        return k;
      }
      case Family::kConstant: return ConstantModel{p.at("label").get<std::string>()};
    }
  } catch (const Json::exception& e) {
    throw Error(Errc::kParse, std::string("malformed model: ") + e.what());
  }
  throw Error(Errc::kParse, "malformed model");
}

// ---- cross-validation ----

std::vector<int> stratified_folds(const std::vector<std::string>& y, int folds, std::uint64_t seed,
                                  int* folds_used) {
  if (folds < 2) throw Error(Errc::kInvalidArgument, "cross-validation needs at least 2 folds");
  std::map<std::string, std::vector<std::size_t>> by_label;
  for (std::size_t i = 0; i < y.size(); ++i) by_label[y[i]].push_back(i);

  std::size_t smallest = y.size();
  for (const auto& [label, rows] : by_label) smallest = std::min(smallest, rows.size());

  std::vector<int> assignment(y.size(), 0);
  if (smallest < 2) {
    std::iota(assignment.begin(), assignment.end(), 0);
    if (folds_used != nullptr) *folds_used = static_cast<int>(y.size());
    return assignment;
  }
  const int k = static_cast<int>(std::min<std::size_t>(static_cast<std::size_t>(folds), smallest));

  SplitMix64 rng(seed);
  std::size_t offset = 0;
  for (auto& [label, rows] : by_label) {
    for (std::size_t i = rows.size() - 1; i > 0; --i) {
      std::size_t j = static_cast<std::size_t>(rng.next() % (i + 1));
      std::swap(rows[i], rows[j]);
    }
    for (std::size_t j = 0; j < rows.size(); ++j) {
      assignment[rows[j]] = static_cast<int>((offset + j) % static_cast<std::size_t>(k));
    }
    offset += rows.size();
  }
  if (folds_used != nullptr) *folds_used = k;
  return assignment;
}

double cross_validate(const ModelConfig& config, const Dataset& data, int folds, std::uint64_t seed) {
  check_shape(data);
  if (label_set(data.y).size() < 2) {
    throw Error(Errc::kDegenerateData, "cross-validation needs at least two classes");
  }
  int k = 0;
  std::vector<int> assignment = stratified_folds(data.y, folds, seed, &k);

  double accuracy_sum = 0.0;
  for (int fold = 0; fold < k; ++fold) {
    std::vector<std::size_t> train_rows, test_rows;
    for (std::size_t i = 0; i < assignment.size(); ++i) {
      (assignment[i] == fold ? test_rows : train_rows).push_back(i);
    }
    Dataset train = data.subset(train_rows);
    Dataset test = data.subset(test_rows);
    Standardizer scaler = Standardizer::fit(train.X);
    train.X = scaler.apply(train.X);
    test.X = scaler.apply(test.X);
    ModelParams model = fit_model(config, train);
    int correct = 0;
    for (std::size_t i = 0; i < test.size(); ++i) {
      if (predict(model, test.X.row(static_cast<Eigen::Index>(i)).transpose()) == test.y[i]) ++correct;
    }
    accuracy_sum += static_cast<double>(correct) / static_cast<double>(test.size());
  }
  return accuracy_sum / static_cast<double>(k);
}

GridResult grid_search(const Dataset& data, std::uint64_t seed, int folds) {
  GridResult result;
  bool first = true;
  for (const auto& config : default_grid()) {
    double acc = cross_validate(config, data, folds, seed);
    result.scores.push_back({config, acc});
    if (first || acc > result.best_accuracy) {
      result.best = config;
      result.best_accuracy = acc;
      first = false;
    }
  }
  return result;
}

}  // namespace hetsched::ml
