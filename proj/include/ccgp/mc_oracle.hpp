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
#include <span>
#include <vector>

#include <Eigen/Dense>
#include <boost/random/mersenne_twister.hpp>

#include "ccgp/architecture.hpp"
#include "ccgp/image.hpp"
#include "ccgp/weight_cov.hpp"

namespace ccgp {

/// Deterministic random stream keyed by (seed, stream, substream), so that
/// draws for one sample and layer do not depend on evaluation order.
class RandomStream {
 public:
  RandomStream(std::uint64_t seed, std::uint64_t stream, std::uint64_t substream = 0);

  double normal();
  /// Fills `out` with independent N(0, stddev^2) draws.
  void fill_normal(std::span<double> out, double stddev = 1.0);

 private:
  boost::random::mt19937_64 engine_;
};

/// Filter weights of one layer: row i, column c * |P| + p holds W[i, c, p].
struct LayerWeights {
  int c_out = 0;
  int c_in = 0;
  std::size_t patch_volume = 0;
  Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> w;

  double operator()(int i, int c, std::size_t p) const { return w(i, c * static_cast<Eigen::Index>(patch_volume) + p); }
};

/// W[:, :, p] = sum_s R[p, s] U[:, :, s] with U iid N(0, 1/c_in), so every
/// (i, c) filter has spatial covariance cov / c_in.
LayerWeights sample_weights(const WeightCovariance& cov, const CovSqrtFactor& factor, int c_out, int c_in,
                            RandomStream& rng);

/// One weight tensor per Conv and CollapseOutput layer, in layer order.
using NetworkWeights = std::vector<LayerWeights>;

struct FiniteNetConfig {
  ArchitectureSpec arch;
  int channels = 1;          // hidden channels, uniform across layers
  int output_channels = 0;   // channels of the CollapseOutput layer; 0 means `channels`
  std::size_t n_samples = 2;
  std::uint64_t seed = 0;
  unsigned threads = 1;

  int outputs() const { return output_channels > 0 ? output_channels : channels; }
};

/// Weights for sample `sample_index`, drawn from streams keyed by
/// (seed, sample_index, layer index).
NetworkWeights sample_network(const FiniteNetConfig& cfg, int input_channels, std::uint64_t sample_index);

/// Exact finite-width forward pass with zero padding and no biases.
/// Returns the output activations, channels x output extent.
Image finite_forward(const ArchitectureSpec& arch, const NetworkWeights& weights, const Image& x);
std::vector<Image> finite_forward(const ArchitectureSpec& arch, const NetworkWeights& weights,
                                  std::span<const Image> inputs);

/// Monte-Carlo moments of the scalar network outputs over weight draws.
/// Second moments are uncentred (the prior mean is zero); standard errors
/// come from the sample variance of the per-draw products.
struct EmpiricalMoment {
  std::size_t samples = 0;
  Eigen::VectorXd mean;             // per input, averaged over output channels
  Eigen::VectorXd mean_se;
  Eigen::MatrixXd covariance;       // E[f_i(X_a) f_i(X_b)], averaged over channels i
  Eigen::MatrixXd covariance_se;
  Eigen::MatrixXd cross_channel;    // E[f_0(X_a) f_1(X_b)]
  Eigen::MatrixXd cross_channel_se;
};

EmpiricalMoment empirical_kernel(const FiniteNetConfig& cfg, std::span<const Image> inputs);

struct McEstimate {
  double estimate = 0.0;
  double standard_error = 0.0;
};

/// Monte-Carlo E[phi(u) phi(v)], (u, v) ~ N(0, [[a, c], [c, b]]), balanced
/// ReLU. Throws ParameterError when the 2 x 2 covariance is not PSD.
McEstimate mc_relu_expectation(double a, double b, double c, std::size_t n_samples, RandomStream& rng);

}  // namespace ccgp
