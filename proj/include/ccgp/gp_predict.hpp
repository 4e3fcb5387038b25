/*
 * Copyright 2026 The ccgp Authors
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
#include <vector>

#include <Eigen/Dense>

#include "ccgp/gram.hpp"

namespace ccgp {

/// One-hot targets shifted by a constant: row i is onehot(label_i) - shift.
struct RegressionTargets {
  std::size_t n = 0;
  std::size_t k_classes = 0;
  Eigen::MatrixXd values;
};

/// Throws ParameterError for labels outside [0, k).
RegressionTargets encode_targets(const std::vector<int>& labels, std::size_t k, double shift = 0.1);

/// Posterior means k_cross (K + sigma^2 I)^-1 Y for every sigma^2 in the
/// grid, from a single eigendecomposition K = Q diag(lambda) Q^T. Eigenvalues
/// below -1e-8 trace/n are an error; smaller negatives are clamped to zero.
std::vector<Eigen::MatrixXd> posterior_means(const Eigen::MatrixXd& k_train, const Eigen::MatrixXd& k_cross,
                                             const RegressionTargets& targets, const std::vector<double>& sigma_grid);

/// Row-wise argmax, ties resolved to the lowest class index.
std::vector<int> argmax_rows(const Eigen::MatrixXd& means);

struct CVResult {
  std::vector<double> sigma_grid;
  /// fold_accuracy[s][f]: accuracy on fold f with noise sigma_grid[s].
  std::vector<std::vector<double>> fold_accuracy;
  std::vector<double> mean_accuracy;
  std::size_t best_index = 0;
  double best_sigma = 0.0;
  double best_accuracy = 0.0;

  std::size_t folds() const { return fold_accuracy.empty() ? 0 : fold_accuracy.front().size(); }
  /// Sample standard deviation of the fold accuracies over sqrt(folds).
  double standard_error(std::size_t sigma_index) const;
};

struct CVOptions {
  std::size_t folds = 4;
  std::size_t k_classes = 10;
  double shift = 0.1;
  std::uint64_t seed = 0;
};

/// Stratified fold of every index: indices of each class (ascending class
/// id) are shuffled with `seed`, concatenated, and dealt round-robin.
std::vector<std::size_t> assign_folds(const std::vector<int>& labels, std::size_t folds, std::uint64_t seed);

/// 21 log-uniform values in [1e-6, 1e2] * trace(K) / n.
std::vector<double> default_sigma_grid(const Eigen::MatrixXd& gram);

/// k-fold cross-validated accuracy of regression-as-classification on a
/// stored Gram matrix, for every noise value; reports the best.
CVResult cv_accuracy(const GramMatrix& gram, const std::vector<int>& labels, const std::vector<double>& sigma_grid,
                     const CVOptions& options = {});

/// Out-of-fold predicted class of every input at one noise value.
std::vector<int> cv_predictions(const GramMatrix& gram, const std::vector<int>& labels, double sigma,
                                const CVOptions& options = {});

}  // namespace ccgp
