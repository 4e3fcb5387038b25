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

#include <variant>
#include <vector>

#include <Eigen/Dense>

#include "ccgp/conv_geometry.hpp"

namespace ccgp {

// Spatial covariance families for convolutional filter weights.
struct Independent {
  double variance = 1.0;
};
struct MeanPool {};
struct Rank1 {
  std::vector<double> alpha;
};
struct Exponential {
  double lengthscale = 1.0;
};
struct Matern32 {
  double lengthscale = 1.0;
};
/// Caller-supplied covariance matrix over flattened patch positions.
struct Explicit {
  Eigen::MatrixXd matrix;
};

using CovarianceKind = std::variant<Independent, MeanPool, Rank1, Exponential, Matern32, Explicit>;

/// (1 + sqrt(3) d / l) exp(-sqrt(3) d / l).
double matern32(double distance, double lengthscale);

/// Covariance of filter weights over pairs of patch positions (p, p'),
/// stored as a |P| x |P| matrix over row-major flattened patch indices.
/// Immutable once built.
class WeightCovariance {
 public:
  WeightCovariance() = default;

  const Dims& patch_size() const { return patch_size_; }
  std::size_t size() const { return static_cast<std::size_t>(matrix_.rows()); }
  const Eigen::MatrixXd& matrix() const { return matrix_; }
  double operator()(std::size_t p, std::size_t pp) const { return matrix_(p, pp); }
  const CovarianceKind& kind() const { return kind_; }

  /// True when every off-diagonal entry is exactly zero.
  bool is_diagonal() const { return diagonal_; }

  /// Copy with every entry multiplied by `factor` (e.g. mean_pool_normalizer).
  WeightCovariance scaled(double factor) const;

  double min_eigenvalue() const;

  friend WeightCovariance build_cov(const CovarianceKind& kind, const Dims& patch_size);

 private:
  Dims patch_size_;
  Eigen::MatrixXd matrix_;
  CovarianceKind kind_;
  bool diagonal_ = false;
};

/// Builds a covariance over patch positions treated as integer coordinate
/// vectors (Euclidean distances for Exponential and Matern32). MeanPool stores
/// all ones (sum-pool convention). Throws ParameterError for non-positive
/// lengthscales or mis-sized parameters and NotPsdError for an Explicit
/// matrix that is not symmetric PSD.
WeightCovariance build_cov(const CovarianceKind& kind, const Dims& patch_size);

/// 1 / |P|^2: turns the stored all-ones MeanPool covariance into a true mean.
double mean_pool_normalizer(const Dims& patch_size);

/// R with R R^T equal to the covariance.
struct CovSqrtFactor {
  Dims patch_size;
  Eigen::MatrixXd entries;
};

/// Symmetric eigendecomposition square root with negative eigenvalues clamped
/// to zero. Throws NotPsdError when the smallest eigenvalue is below
/// -1e-10 * trace / |P|.
CovSqrtFactor sqrt_factor(const WeightCovariance& cov);

/// Relative PSD slack shared by weight covariances.
inline constexpr double kCovPsdTolerance = 1e-10;

}  // namespace ccgp
