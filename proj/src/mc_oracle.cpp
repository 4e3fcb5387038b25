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

#include "ccgp/mc_oracle.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <thread>

#include <boost/random/normal_distribution.hpp>

#include "ccgp/errors.hpp"

namespace ccgp {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

using ActivationMatrix = Eigen::MatrixXd;  // channels x (inputs * positions)

struct WeightedLayer {
  const WeightCovariance* cov = nullptr;
  CovSqrtFactor factor;
};

std::vector<WeightedLayer> weighted_layers(const ArchitectureSpec& arch) {
  std::vector<WeightedLayer> out;
  for (const Layer& l : arch.layers) {
    if (const auto* c = std::get_if<ConvLayer>(&l)) out.push_back({&c->cov, sqrt_factor(c->cov)});
    if (const auto* c = std::get_if<CollapseOutputLayer>(&l)) out.push_back({&c->cov, sqrt_factor(c->cov)});
  }
  return out;
}

NetworkWeights sample_with(const FiniteNetConfig& cfg, const std::vector<WeightedLayer>& layers, int input_channels,
                           std::uint64_t sample_index) {
  NetworkWeights weights;
  weights.reserve(layers.size());
  int c_in = input_channels;
  for (std::size_t k = 0; k < layers.size(); ++k) {
    const int c_out = k + 1 == layers.size() ? cfg.outputs() : cfg.channels;
    RandomStream rng(cfg.seed, sample_index, k);
    weights.push_back(sample_weights(*layers[k].cov, layers[k].factor, c_out, c_in, rng));
    c_in = c_out;
  }
  return weights;
}

ActivationMatrix convolve(const ActivationMatrix& h, std::size_t batch, const ConvGeometry& geom,
                          const LayerWeights& w) {
  const PatchTable tab(geom);
  const std::size_t nq = tab.outputs();
  const std::size_t np = tab.patch_volume();
  const std::size_t n_in = volume(geom.input_extent);
  const auto c_in = static_cast<std::size_t>(h.rows());
  if (static_cast<std::size_t>(w.c_in) != c_in || w.patch_volume != np)
    throw ContractError("finite_forward: weight shape does not match the layer input");

  Eigen::MatrixXd cols = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(c_in * np),
                                               static_cast<Eigen::Index>(batch * nq));
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t q = 0; q < nq; ++q) {
      const auto col = static_cast<Eigen::Index>(b * nq + q);
      for (std::size_t p = 0; p < np; ++p) {
        const long i = tab(q, p);
        if (i < 0) continue;
        const auto src = static_cast<Eigen::Index>(b * n_in + static_cast<std::size_t>(i));
        for (std::size_t c = 0; c < c_in; ++c) cols(static_cast<Eigen::Index>(c * np + p), col) = h(c, src);
      }
    }
  }
  return w.w * cols;
}

ActivationMatrix mean_pool(const ActivationMatrix& h, std::size_t batch, const Dims& extent, const Dims& window) {
  Dims out_extent(extent.size());
  for (std::size_t d = 0; d < extent.size(); ++d) out_extent[d] = extent[d] / window[d];
  const std::size_t n_in = volume(extent);
  const std::size_t n_out = volume(out_extent);
  ActivationMatrix out = ActivationMatrix::Zero(h.rows(), static_cast<Eigen::Index>(batch * n_out));
  for (std::size_t q = 0; q < n_in; ++q) {
    Dims c = unflatten(q, extent);
    for (std::size_t d = 0; d < c.size(); ++d) c[d] /= window[d];
    const std::size_t t = flatten(c, out_extent);
    for (std::size_t b = 0; b < batch; ++b)
      out.col(static_cast<Eigen::Index>(b * n_out + t)) += h.col(static_cast<Eigen::Index>(b * n_in + q));
  }
  return out / static_cast<double>(volume(window));
}

}  // namespace

RandomStream::RandomStream(std::uint64_t seed, std::uint64_t stream, std::uint64_t substream)
    : engine_(splitmix64(seed ^ splitmix64(stream ^ splitmix64(substream + 0x5851f42d4c957f2dULL)))) {}

double RandomStream::normal() {
  boost::random::normal_distribution<double> dist;
  return dist(engine_);
}

void RandomStream::fill_normal(std::span<double> out, double stddev) {
  boost::random::normal_distribution<double> dist(0.0, stddev);
  for (double& v : out) v = dist(engine_);
}

LayerWeights sample_weights(const WeightCovariance& cov, const CovSqrtFactor& factor, int c_out, int c_in,
                            RandomStream& rng) {
  if (c_out < 1 || c_in < 1) throw ParameterError("sample_weights: channel counts must be positive");
  const auto np = static_cast<Eigen::Index>(cov.size());
  if (factor.entries.rows() != np || factor.entries.cols() != np)
    throw ContractError("sample_weights: square-root factor does not match the covariance");
  LayerWeights w;
  w.c_out = c_out;
  w.c_in = c_in;
  w.patch_volume = static_cast<std::size_t>(np);
  w.w.resize(c_out, static_cast<Eigen::Index>(c_in) * np);
  rng.fill_normal(std::span<double>(w.w.data(), static_cast<std::size_t>(w.w.size())), 1.0 / std::sqrt(double(c_in)));

  // Mix every filter's iid draws in place: w_filter <- R u_filter.
  const Eigen::MatrixXd& r = factor.entries;
  const Eigen::Index filters = static_cast<Eigen::Index>(c_out) * c_in;
  double* data = w.w.data();
  if (r.isDiagonal(0.0)) {
    for (Eigen::Index f = 0; f < filters; ++f)
      for (Eigen::Index p = 0; p < np; ++p) data[f * np + p] *= r(p, p);
  } else {
    const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> rr = r;
    std::vector<double> u(static_cast<std::size_t>(np));
    for (Eigen::Index f = 0; f < filters; ++f) {
      double* filter = data + f * np;
      std::copy(filter, filter + np, u.begin());
      for (Eigen::Index p = 0; p < np; ++p) {
        const double* row = rr.data() + p * np;
        double acc = 0.0;
        for (Eigen::Index s = 0; s < np; ++s) acc += row[s] * u[static_cast<std::size_t>(s)];
        filter[p] = acc;
      }
    }
  }
  return w;
}

NetworkWeights sample_network(const FiniteNetConfig& cfg, int input_channels, std::uint64_t sample_index) {
  cfg.arch.validate();
  return sample_with(cfg, weighted_layers(cfg.arch), input_channels, sample_index);
}

std::vector<Image> finite_forward(const ArchitectureSpec& arch, const NetworkWeights& weights,
                                  std::span<const Image> inputs) {
  arch.validate();
  if (inputs.empty()) return {};
  const std::size_t batch = inputs.size();
  const int c0 = inputs.front().channels;
  Dims extent = arch.input_extent;
  std::size_t n = volume(extent);

  ActivationMatrix h(c0, static_cast<Eigen::Index>(batch * n));
  for (std::size_t b = 0; b < batch; ++b) {
    if (inputs[b].extent != extent || inputs[b].channels != c0)
      throw ContractError("finite_forward: input shape does not match the architecture");
    for (int c = 0; c < c0; ++c)
      for (std::size_t q = 0; q < n; ++q) h(c, static_cast<Eigen::Index>(b * n + q)) = inputs[b](c, q);
  }

  std::size_t wi = 0;
  for (const Layer& layer : arch.layers) {
    if (const auto* conv = std::get_if<ConvLayer>(&layer)) {
      if (wi >= weights.size()) throw ContractError("finite_forward: too few weight tensors");
      h = convolve(h, batch, conv->geom, weights[wi++]);
      extent = output_extent(conv->geom);
    } else if (std::holds_alternative<ReluLayer>(layer)) {
      h = std::numbers::sqrt2 * h.cwiseMax(0.0);
    } else if (const auto* pool = std::get_if<MeanPoolLayer>(&layer)) {
      h = mean_pool(h, batch, extent, pool->window);
      for (std::size_t d = 0; d < extent.size(); ++d) extent[d] /= pool->window[d];
    } else {
      if (wi >= weights.size()) throw ContractError("finite_forward: too few weight tensors");
      const ConvGeometry geom = collapse_geometry(extent);
      h = convolve(h, batch, geom, weights[wi++]);
      extent = Dims(extent.size(), 1);
    }
    n = volume(extent);
  }

  std::vector<Image> out;
  out.reserve(batch);
  for (std::size_t b = 0; b < batch; ++b) {
    Image img(static_cast<int>(h.rows()), extent);
    for (Eigen::Index c = 0; c < h.rows(); ++c)
      for (std::size_t q = 0; q < n; ++q) img(static_cast<int>(c), q) = h(c, static_cast<Eigen::Index>(b * n + q));
    out.push_back(std::move(img));
  }
  return out;
}

Image finite_forward(const ArchitectureSpec& arch, const NetworkWeights& weights, const Image& x) {
  return std::move(finite_forward(arch, weights, std::span<const Image>(&x, 1)).front());
}

EmpiricalMoment empirical_kernel(const FiniteNetConfig& cfg, std::span<const Image> inputs) {
  cfg.arch.validate();
  if (cfg.channels < 1 || cfg.outputs() < 1) throw ParameterError("empirical_kernel: channel counts must be positive");
  if (cfg.n_samples < 2) throw ParameterError("empirical_kernel: need at least two samples");
  if (inputs.empty()) throw ParameterError("empirical_kernel: no inputs");

  const std::vector<WeightedLayer> layers = weighted_layers(cfg.arch);
  const std::size_t n = inputs.size();
  const std::size_t M = cfg.n_samples;
  const std::size_t slots = n + 2 * n * n;
  const int c0 = inputs.front().channels;
  std::vector<double> per_sample(M * slots, 0.0);

  auto draw = [&](std::size_t m) {
    const NetworkWeights w = sample_with(cfg, layers, c0, m);
    const std::vector<Image> out = finite_forward(cfg.arch, w, inputs);
    double* s = per_sample.data() + m * slots;
    const int C = out.front().channels;
    for (std::size_t a = 0; a < n; ++a) {
      double mean = 0.0;
      for (int i = 0; i < C; ++i) mean += out[a](i, 0);
      s[a] = mean / C;
      for (std::size_t b = 0; b < n; ++b) {
        double prod = 0.0;
        for (int i = 0; i < C; ++i) prod += out[a](i, 0) * out[b](i, 0);
        s[n + a * n + b] = prod / C;
        s[n + n * n + a * n + b] = C >= 2 ? out[a](0, 0) * out[b](1, 0) : 0.0;
      }
    }
  };

  const unsigned threads = std::max(1u, std::min<unsigned>(cfg.threads, static_cast<unsigned>(M)));
  if (threads == 1) {
    for (std::size_t m = 0; m < M; ++m) draw(m);
  } else {
    std::vector<std::jthread> pool;
    for (unsigned t = 0; t < threads; ++t)
      pool.emplace_back([&, t] {
        for (std::size_t m = t; m < M; m += threads) draw(m);
      });
  }

  // Fixed-order reduction: identical results for any thread count.
  std::vector<double> mean(slots, 0.0), var(slots, 0.0);
  for (std::size_t m = 0; m < M; ++m)
    for (std::size_t k = 0; k < slots; ++k) mean[k] += per_sample[m * slots + k];
  for (double& v : mean) v /= static_cast<double>(M);
  for (std::size_t m = 0; m < M; ++m)
    for (std::size_t k = 0; k < slots; ++k) {
      const double d = per_sample[m * slots + k] - mean[k];
      var[k] += d * d;
    }
  auto se = [&](std::size_t k) { return std::sqrt(var[k] / static_cast<double>(M - 1) / static_cast<double>(M)); };

  EmpiricalMoment r;
  r.samples = M;
  const auto N = static_cast<Eigen::Index>(n);
  r.mean.resize(N);
  r.mean_se.resize(N);
  r.covariance.resize(N, N);
  r.covariance_se.resize(N, N);
  r.cross_channel.resize(N, N);
  r.cross_channel_se.resize(N, N);
  for (std::size_t a = 0; a < n; ++a) {
    r.mean(a) = mean[a];
    r.mean_se(a) = se(a);
    for (std::size_t b = 0; b < n; ++b) {
      r.covariance(a, b) = mean[n + a * n + b];
      r.covariance_se(a, b) = se(n + a * n + b);
      r.cross_channel(a, b) = mean[n + n * n + a * n + b];
      r.cross_channel_se(a, b) = se(n + n * n + a * n + b);
    }
  }
  return r;
}

McEstimate mc_relu_expectation(double a, double b, double c, std::size_t n_samples, RandomStream& rng) {
  if (!(a >= 0.0) || !(b >= 0.0) || c * c > a * b * (1.0 + 1e-12))
    throw ParameterError("mc_relu_expectation: covariance is not positive semi-definite");
  if (n_samples < 2) throw ParameterError("mc_relu_expectation: need at least two samples");
  const double sa = std::sqrt(a);
  const double mix = a > 0.0 ? c / sa : 0.0;
  const double rest = std::sqrt(std::max(a > 0.0 ? b - c * c / a : b, 0.0));
  double sum = 0.0, sum_sq = 0.0;
  for (std::size_t k = 0; k < n_samples; ++k) {
    const double z1 = rng.normal();
    const double z2 = rng.normal();
    const double u = sa * z1;
    const double v = mix * z1 + rest * z2;
    const double prod = 2.0 * std::max(u, 0.0) * std::max(v, 0.0);
    sum += prod;
    sum_sq += prod * prod;
  }
  const double nn = static_cast<double>(n_samples);
  const double mean = sum / nn;
  const double var = std::max(sum_sq / nn - mean * mean, 0.0) * nn / (nn - 1.0);
  return McEstimate{mean, std::sqrt(var / nn)};
}

}  // namespace ccgp
