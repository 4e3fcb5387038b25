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

#include "ccgp/gp_predict.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <random>
#include <string>

#include "ccgp/errors.hpp"

namespace ccgp {

RegressionTargets encode_targets(const std::vector<int>& labels, std::size_t k, double shift) {
  if (k == 0) throw ParameterError("encode_targets: need at least one class");
  RegressionTargets t;
  t.n = labels.size();
  t.k_classes = k;
  t.values = Eigen::MatrixXd::Constant(static_cast<Eigen::Index>(t.n), static_cast<Eigen::Index>(k), -shift);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= k)
      throw ParameterError("encode_targets: label " + std::to_string(labels[i]) + " out of range");
    t.values(static_cast<Eigen::Index>(i), labels[i]) = 1.0 - shift;
  }
  return t;
}

std::vector<Eigen::MatrixXd> posterior_means(const Eigen::MatrixXd& k_train, const Eigen::MatrixXd& k_cross,
                                             const RegressionTargets& targets, const std::vector<double>& sigma_grid) {
  const Eigen::Index n = k_train.rows();
  if (k_train.cols() != n || k_cross.cols() != n || targets.values.rows() != n)
    throw ContractError("posterior_means: inconsistent matrix shapes");
  const double scale = std::max(1.0, k_train.cwiseAbs().maxCoeff());
  if ((k_train - k_train.transpose()).cwiseAbs().maxCoeff() > 1e-12 * scale)
    throw ContractError("posterior_means: training kernel is not symmetric");

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(k_train);
  if (eig.info() != Eigen::Success) throw NotPsdError("posterior_means: eigendecomposition failed");
  Eigen::VectorXd lambda = eig.eigenvalues();
  const double slack = kGramPsdTolerance * std::abs(k_train.trace()) / static_cast<double>(std::max<Eigen::Index>(n, 1));
  if (n > 0 && lambda.minCoeff() < -slack) throw NotPsdError("posterior_means: training kernel is not PSD");
  lambda = lambda.cwiseMax(0.0);

  const Eigen::MatrixXd& q = eig.eigenvectors();
  const Eigen::MatrixXd cross_q = k_cross * q;
  const Eigen::MatrixXd qt_y = q.transpose() * targets.values;

  std::vector<Eigen::MatrixXd> means;
  means.reserve(sigma_grid.size());
  for (double s2 : sigma_grid) {
    if (!(s2 >= 0.0)) throw ParameterError("posterior_means: noise variance must be non-negative");
    const Eigen::ArrayXd denom = lambda.array() + s2;
    if ((denom <= 0.0).any())
      throw NotPsdError("posterior_means: singular system at noise variance " + std::to_string(s2));
    means.push_back(cross_q * (denom.inverse().matrix().asDiagonal() * qt_y));
  }
  return means;
}

std::vector<int> argmax_rows(const Eigen::MatrixXd& means) {
  std::vector<int> out(static_cast<std::size_t>(means.rows()));
  for (Eigen::Index i = 0; i < means.rows(); ++i) {
    Eigen::Index best = 0;
    means.row(i).maxCoeff(&best);
    out[static_cast<std::size_t>(i)] = static_cast<int>(best);
  }
  return out;
}

double CVResult::standard_error(std::size_t sigma_index) const {
  const std::vector<double>& acc = fold_accuracy.at(sigma_index);
  const double f = static_cast<double>(acc.size());
  if (acc.size() < 2) return 0.0;
  const double mean = mean_accuracy.at(sigma_index);
  double ss = 0.0;
  for (double a : acc) ss += (a - mean) * (a - mean);
  return std::sqrt(ss / (f - 1.0)) / std::sqrt(f);
}

std::vector<std::size_t> assign_folds(const std::vector<int>& labels, std::size_t folds, std::uint64_t seed) {
  if (folds == 0 || labels.size() % folds != 0)
    throw ContractError("cv: fold count " + std::to_string(folds) + " does not divide " +
                        std::to_string(labels.size()) + " points");
  std::map<int, std::vector<std::size_t>> by_class;
  for (std::size_t i = 0; i < labels.size(); ++i) by_class[labels[i]].push_back(i);
  std::mt19937_64 rng(seed);
  std::vector<std::size_t> order;
  order.reserve(labels.size());
  for (auto& [label, idx] : by_class) {
    std::shuffle(idx.begin(), idx.end(), rng);
    order.insert(order.end(), idx.begin(), idx.end());
  }
  std::vector<std::size_t> fold(labels.size());
  for (std::size_t r = 0; r < order.size(); ++r) fold[order[r]] = r % folds;
  return fold;
}

std::vector<double> default_sigma_grid(const Eigen::MatrixXd& gram) {
  const double scale = std::abs(gram.trace()) / static_cast<double>(std::max<Eigen::Index>(gram.rows(), 1));
  std::vector<double> grid(21);
  for (std::size_t i = 0; i < grid.size(); ++i) grid[i] = scale * std::pow(10.0, -6.0 + 8.0 * i / 20.0);
  return grid;
}

namespace {

struct FoldSplit {
  std::vector<std::size_t> train, test;
};

std::vector<FoldSplit> split_folds(const std::vector<int>& labels, const CVOptions& options) {
  const std::vector<std::size_t> fold = assign_folds(labels, options.folds, options.seed);
  std::vector<FoldSplit> splits(options.folds);
  for (std::size_t i = 0; i < labels.size(); ++i)
    for (std::size_t f = 0; f < options.folds; ++f) (fold[i] == f ? splits[f].test : splits[f].train).push_back(i);
  return splits;
}

Eigen::MatrixXd submatrix(const Eigen::MatrixXd& m, const std::vector<std::size_t>& rows,
                          const std::vector<std::size_t>& cols) {
  Eigen::MatrixXd s(rows.size(), cols.size());
  for (std::size_t r = 0; r < rows.size(); ++r)
    for (std::size_t c = 0; c < cols.size(); ++c) s(r, c) = m(rows[r], cols[c]);
  return s;
}

std::vector<int> pick(const std::vector<int>& v, const std::vector<std::size_t>& idx) {
  std::vector<int> out;
  out.reserve(idx.size());
  for (std::size_t i : idx) out.push_back(v[i]);
  return out;
}

}  // namespace

CVResult cv_accuracy(const GramMatrix& gram, const std::vector<int>& labels, const std::vector<double>& sigma_grid,
                     const CVOptions& options) {
  if (labels.size() != gram.n()) throw ContractError("cv: label count does not match the Gram matrix");
  if (sigma_grid.empty()) throw ParameterError("cv: empty noise grid");
  const std::vector<FoldSplit> splits = split_folds(labels, options);

  CVResult result;
  result.sigma_grid = sigma_grid;
  result.fold_accuracy.assign(sigma_grid.size(), std::vector<double>(options.folds, 0.0));
  for (std::size_t f = 0; f < splits.size(); ++f) {
    const FoldSplit& s = splits[f];
    const RegressionTargets y = encode_targets(pick(labels, s.train), options.k_classes, options.shift);
    const std::vector<Eigen::MatrixXd> means = posterior_means(
        submatrix(gram.entries, s.train, s.train), submatrix(gram.entries, s.test, s.train), y, sigma_grid);
    const std::vector<int> truth = pick(labels, s.test);
    for (std::size_t g = 0; g < sigma_grid.size(); ++g) {
      const std::vector<int> pred = argmax_rows(means[g]);
      std::size_t correct = 0;
      for (std::size_t i = 0; i < pred.size(); ++i) correct += pred[i] == truth[i];
      result.fold_accuracy[g][f] = s.test.empty() ? 0.0 : static_cast<double>(correct) / s.test.size();
    }
  }
  result.mean_accuracy.resize(sigma_grid.size());
  for (std::size_t g = 0; g < sigma_grid.size(); ++g) {
    double sum = 0.0;
    for (double a : result.fold_accuracy[g]) sum += a;
    result.mean_accuracy[g] = sum / static_cast<double>(options.folds);
    if (result.mean_accuracy[g] > result.mean_accuracy[result.best_index]) result.best_index = g;
  }
  result.best_sigma = sigma_grid[result.best_index];
  result.best_accuracy = result.mean_accuracy[result.best_index];
  return result;
}

std::vector<int> cv_predictions(const GramMatrix& gram, const std::vector<int>& labels, double sigma,
                                const CVOptions& options) {
  if (labels.size() != gram.n()) throw ContractError("cv: label count does not match the Gram matrix");
  std::vector<int> predicted(labels.size(), -1);
  for (const FoldSplit& s : split_folds(labels, options)) {
    const RegressionTargets y = encode_targets(pick(labels, s.train), options.k_classes, options.shift);
    const auto means = posterior_means(submatrix(gram.entries, s.train, s.train),
                                       submatrix(gram.entries, s.test, s.train), y, {sigma});
    const std::vector<int> pred = argmax_rows(means.front());
    for (std::size_t i = 0; i < s.test.size(); ++i) predicted[s.test[i]] = pred[i];
  }
  return predicted;
}

}  // namespace ccgp
