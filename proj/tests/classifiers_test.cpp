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

#include <algorithm>
#include <map>
#include <random>
#include <set>

#include "doctest.h"
#include "hetsched/classifiers.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace hetsched;
using namespace hetsched::ml;
using namespace hetsched::testing;

namespace {

Dataset separable(int per_class) {
  Dataset data;
  data.X.resize(2 * per_class, 2);
  for (int i = 0; i < per_class; ++i) {
    data.X.row(i) << 1.0 + 0.1 * i, 1.0;
    data.X.row(per_class + i) << 10.0 + 0.1 * i, 1.0;
  }
  data.y.assign(static_cast<std::size_t>(per_class), "regular");
  data.y.resize(2 * static_cast<std::size_t>(per_class), "large");
  return data;
}

}  // namespace

TEST_CASE("tree: XOR needs depth two") {
  Dataset xor_data;
  xor_data.X.resize(4, 2);
  xor_data.X << 0, 0, 0, 1, 1, 0, 1, 1;
  xor_data.y = {"a", "b", "b", "a"};
  TreeModel full = fit_tree(xor_data, kUnlimitedDepth);
  for (int i = 0; i < 4; ++i) CHECK(predict_tree(full, xor_data.X.row(i).transpose()) == xor_data.y[i]);
  CHECK(full.depth() == 2);

  TreeModel stump = fit_tree(xor_data, 1);
  int correct = 0;
  for (int i = 0; i < 4; ++i) correct += predict_tree(stump, xor_data.X.row(i).transpose()) == xor_data.y[i];
  CHECK(correct < 4);
  CHECK(stump.depth() <= 1);
}

TEST_CASE("tree agrees with an exhaustive reference implementation") {
  std::mt19937_64 rng(2024);
  for (int trial = 0; trial < 50; ++trial) {
    int n = 2 + static_cast<int>(rng() % 7);
    int d = 1 + static_cast<int>(rng() % 3);
    Dataset data = random_dataset(rng, n, d, 3, 4);
    int depth = static_cast<int>(rng() % 4) - 1;  // -1 is unlimited
    TreeModel model = fit_tree(data, depth);
    std::vector<std::size_t> all(static_cast<std::size_t>(n));
    std::iota(all.begin(), all.end(), 0);
    auto ref = RefTree::build(data, all, 0, depth);
    for (int a = 0; a < 4; ++a) {
      for (int b = 0; b < 4; ++b) {
        for (int c = 0; c < 4; ++c) {
          Eigen::VectorXd x(d);
          int coords[3] = {a, b, c};
          for (int j = 0; j < d; ++j) x(j) = coords[j] + 0.25 * ((a + b + c) % 3 - 1);
          REQUIRE(predict_tree(model, x) == RefTree::predict(ref.get(), x));
        }
      }
    }
    if (depth >= 0) CHECK(model.depth() <= depth);
  }
}

TEST_CASE("kNN agrees with a brute-force reference") {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int trial = 0; trial < 200; ++trial) {
    Dataset data = random_dataset(rng, 12, 2, 3, 3);
    int k = 1 + 2 * static_cast<int>(rng() % 3);
    KnnModel model = fit_knn(data, k);
    Eigen::VectorXd q(2);
    q << u(rng) * 2 + 1, u(rng) * 2 + 1;

    REQUIRE(predict_knn(model, q) == knn_reference(data, k, q));
  }
}

TEST_CASE("logistic regression gradient matches finite differences") {
  for (std::uint64_t seed : {11, 12, 13}) CHECK(logreg_gradient_error(seed) < 1e-4);
}

TEST_CASE("logistic regression: monotone loss, shrinkage, zero iterations") {
  Dataset data = separable(6);
  Standardizer s = Standardizer::fit(data.X);
  data.X = s.apply(data.X);
  double prev_norm = std::numeric_limits<double>::infinity();
  for (double lambda : {0.0, 0.1, 1.0}) {
    std::vector<double> history;
    LogRegModel m = fit_logreg(data, lambda, 200, 0.1, &history);
    REQUIRE(history.size() == 201);
    for (std::size_t i = 1; i < history.size(); ++i) CHECK(history[i] <= history[i - 1] + 1e-12);
    CHECK(m.weights.norm() < prev_norm);
    prev_norm = m.weights.norm();
  }
  LogRegModel zero = fit_logreg(data, 0.0, 0);
  CHECK(predict_logreg(zero, data.X.row(0).transpose()) == "large");
  CHECK(predict_logreg(zero, data.X.row(7).transpose()) == "large");
}

TEST_CASE("stratified folds keep class proportions and adapt the fold count") {
  std::vector<std::string> y;
  for (int i = 0; i < 20; ++i) y.push_back(i < 15 ? "a" : "b");
  int used = 0;
  std::vector<int> folds = stratified_folds(y, 5, 1, &used);
  CHECK(used == 5);
  for (int f = 0; f < 5; ++f) {
    int a = 0, b = 0;
    for (std::size_t i = 0; i < y.size(); ++i) {
      if (folds[i] == f) (y[i] == "a" ? a : b)++;
    }
    CHECK(a == 3);
    CHECK(b == 1);
  }
  CHECK(stratified_folds(y, 5, 1) == folds);

  std::vector<std::string> small{"a", "a", "b", "b"};
  stratified_folds(small, 5, 1, &used);
  CHECK(used == 2);
  std::vector<std::string> singleton{"a", "a", "a", "b"};
  stratified_folds(singleton, 5, 1, &used);
  CHECK(used == 4);
}

TEST_CASE("grid search finds a perfect model on separable data and is deterministic") {
  Dataset data = separable(10);
  GridResult r = grid_search(data, 7);
  CHECK(r.best_accuracy == 1.0);
  CHECK(r.scores.size() == 10);
  // Earliest perfect entry wins.
  CHECK(r.best == default_grid().front());
  GridResult again = grid_search(data, 7);
  CHECK(again.best == r.best);
  for (std::size_t i = 0; i < r.scores.size(); ++i) CHECK(again.scores[i].mean_accuracy == r.scores[i].mean_accuracy);

  Dataset one_class;
  one_class.X = Eigen::MatrixXd::Zero(3, 1);
  one_class.y = {"a", "a", "a"};
  CHECK_ERRC(grid_search(one_class, 1), Errc::kDegenerateData);
}

TEST_CASE("grid search works with two folds on four samples") {
  Dataset tiny;
  tiny.X.resize(4, 1);
  tiny.X << 1, 2, 10, 11;
  tiny.y = {"r", "r", "l", "l"};
  GridResult r = grid_search(tiny, 3);
  CHECK(r.best_accuracy == 1.0);
}

TEST_CASE("model JSON round-trips every family") {
  Dataset data = separable(5);
  for (const ModelConfig& config : default_grid()) {
    ModelParams m = fit_model(config, data);
    Json j = model_to_json(m, config);
    ModelParams back = model_from_json(j);
    CHECK(config_from_json(j) == config);
    CHECK(family_of(back) == config.family);
    CHECK(model_to_json(back, config).dump() == j.dump());
    for (int i = 0; i < data.X.rows(); ++i) {
      Eigen::VectorXd x = data.X.row(i).transpose();
      CHECK(predict(back, x) == predict(m, x));
    }
  }
  ModelConfig constant{Family::kConstant, 0, kUnlimitedDepth, 0.0, 1};
  ModelParams c = ConstantModel{"regular"};
  CHECK(predict(model_from_json(model_to_json(c, constant)), Eigen::VectorXd::Zero(3)) == "regular");
}
