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

#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include <Eigen/Dense>

#include "hetsched/util.hpp"

namespace hetsched::ml {

struct Dataset {
  Eigen::MatrixXd X;  // n x d
  std::vector<std::string> y;

  std::size_t size() const { return y.size(); }
  Dataset subset(const std::vector<std::size_t>& rows) const;
};

// Sorted distinct labels.
std::vector<std::string> label_set(const std::vector<std::string>& y);

// Per-feature z-score with the standard deviation floored at 1e-9.
struct Standardizer {
  Eigen::VectorXd mean;
  Eigen::VectorXd stddev;

  static Standardizer fit(const Eigen::MatrixXd& X);
  Eigen::VectorXd apply(const Eigen::VectorXd& x) const;
  Eigen::MatrixXd apply(const Eigen::MatrixXd& X) const;

  Json to_json() const;
  static Standardizer from_json(const Json& j);
};

// ---- k nearest neighbours ----

struct KnnModel {
  int k = 1;
  Eigen::MatrixXd X;
  std::vector<std::string> y;
};

KnnModel fit_knn(const Dataset& data, int k);
std::string predict_knn(const KnnModel& model, const Eigen::VectorXd& x);

// ---- CART decision tree ----

struct TreeNode {
  int feature = -1;  // -1 marks a leaf
  double threshold = 0.0;  // x[feature] <= threshold goes left
  int left = -1;
  int right = -1;
  std::string label;

  bool is_leaf() const { return feature < 0; }
};

constexpr int kUnlimitedDepth = -1;

struct TreeModel {
  int max_depth = kUnlimitedDepth;
  std::vector<TreeNode> nodes;  // nodes[0] is the root

  int depth() const;
};

TreeModel fit_tree(const Dataset& data, int max_depth, int min_samples_split = 2);
std::string predict_tree(const TreeModel& model, const Eigen::VectorXd& x);

// ---- multinomial logistic regression ----

struct LogRegModel {
  double l2_lambda = 0.0;
  std::vector<std::string> classes;  // sorted
  Eigen::MatrixXd weights;           // C x d
  Eigen::VectorXd biases;            // C
};

// Mean cross-entropy plus (lambda / 2) * ||W||^2 (biases unregularized). When
// gradient is given it receives dLoss/dW and dLoss/db in model shape.
double logreg_objective(const LogRegModel& model, const Dataset& data,
                        LogRegModel* gradient = nullptr);

// Full-batch gradient descent from zero. loss_history, when given, receives
// the objective before the first step and after every step.
LogRegModel fit_logreg(const Dataset& data, double l2_lambda, int iterations = 500,
                       double learning_rate = 0.1, std::vector<double>* loss_history = nullptr);
std::string predict_logreg(const LogRegModel& model, const Eigen::VectorXd& x);

// ---- model families and grid search ----

struct ConstantModel {
  std::string label;
};

enum class Family { kTree, kLogistic, kKnn, kConstant };

std::string_view family_name(Family family);

struct ModelConfig {
  Family family = Family::kTree;
  int index = 0;  // position within the family's hyperparameter list
  int max_depth = kUnlimitedDepth;
  double l2_lambda = 0.0;
  int k = 1;

  Json hyperparams() const;
  bool operator==(const ModelConfig&) const = default;
};

// Tree{max_depth 2,4,8,unlimited}, then LogReg{lambda 0,0.1,1}, then KNN{k 1,3,5}.
// This order is also the tie-break order.
std::vector<ModelConfig> default_grid();

using ModelParams = std::variant<TreeModel, LogRegModel, KnnModel, ConstantModel>;

ModelParams fit_model(const ModelConfig& config, const Dataset& data);
std::string predict(const ModelParams& model, const Eigen::VectorXd& x);
Family family_of(const ModelParams& model);
std::size_t input_dimension(const ModelParams& model);

// {family, hyperparams, params}; trees as nested node objects, matrices row-major.
Json model_to_json(const ModelParams& model, const ModelConfig& config);
ModelParams model_from_json(const Json& j);
ModelConfig config_from_json(const Json& j);

// Fold index per sample. Labels are visited in sorted order; each label's
// rows are shuffled with SplitMix64(seed) (Fisher-Yates) and dealt
// round-robin. When the smallest class has fewer members than requested the
// fold count drops to that size (minimum 2); a singleton class forces
// leave-one-out. Returns the effective fold count through folds_used.
std::vector<int> stratified_folds(const std::vector<std::string>& y, int folds, std::uint64_t seed,
                                  int* folds_used = nullptr);

// Mean over folds of plain accuracy. Features are standardized per fold on
// the training part only.
double cross_validate(const ModelConfig& config, const Dataset& data, int folds, std::uint64_t seed);

struct GridScore {
  ModelConfig config;
  double mean_accuracy = 0.0;
};

struct GridResult {
  ModelConfig best;
  double best_accuracy = 0.0;
  std::vector<GridScore> scores;
};

// Highest mean accuracy wins; ties go to the earlier grid entry.
GridResult grid_search(const Dataset& data, std::uint64_t seed, int folds = 5);

}  // namespace hetsched::ml
