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

#include <doctest.h>

#include <cmath>
#include <cstring>
#include <numbers>

#include "ccgp/errors.hpp"
#include "ccgp/gram.hpp"
#include "ccgp/kernel_engine.hpp"
#include "ccgp/mc_oracle.hpp"
#include "support.hpp"

using namespace ccgp;

namespace {

ConvGeometry geom(const Dims& extent, const Dims& patch, int stride = 1) {
  ConvGeometry g;
  g.input_extent = extent;
  g.patch_size = patch;
  g.stride = stride;
  return g;
}

// F=6, two Matern(2) conv + ReLU layers, Matern(2) CollapseOutput.
ArchitectureSpec toy_arch() {
  ArchitectureSpec a;
  a.id = "toy";
  a.input_extent = {6};
  for (int k = 0; k < 2; ++k) {
    a.layers.emplace_back(ConvLayer{geom({6}, {3}), build_cov(Matern32{2.0}, {3})});
    a.layers.emplace_back(ReluLayer{});
  }
  a.layers.emplace_back(CollapseOutputLayer{build_cov(Matern32{2.0}, {6})});
  return a;
}

// Single conv (F, P) followed by an independent CollapseOutput, optional ReLU.
ArchitectureSpec one_conv(int f, int p, bool relu) {
  ArchitectureSpec a;
  a.id = "one-conv";
  a.input_extent = {f};
  a.layers.emplace_back(ConvLayer{geom({f}, {p}), build_cov(Independent{1.0}, {p})});
  if (relu) a.layers.emplace_back(ReluLayer{});
  a.layers.emplace_back(CollapseOutputLayer{build_cov(Independent{1.0}, {f})});
  return a;
}

LayerWeights weights(const std::vector<double>& w) {
  LayerWeights l;
  l.c_out = 1;
  l.c_in = 1;
  l.patch_volume = w.size();
  l.w.resize(1, long(w.size()));
  for (std::size_t i = 0; i < w.size(); ++i) l.w(0, long(i)) = w[i];
  return l;
}

Image signal(const std::vector<double>& v) {
  Image x(1, {int(v.size())});
  x.values = v;
  return x;
}

std::vector<Image> toy_inputs(std::uint64_t seed, std::size_t n) {
  test::Gen gen(seed);
  std::vector<Image> xs;
  for (std::size_t i = 0; i < n; ++i) xs.push_back(gen.image(1, {6}));
  return xs;
}

double max_rel_dev(const EmpiricalMoment& m, const Eigen::MatrixXd& k) {
  return ((m.covariance - k).cwiseAbs().array() / k.cwiseAbs().array()).maxCoeff();
}

}  // namespace

TEST_CASE("sampled filters follow the weight covariance") {
  SUBCASE("all-ones covariance makes every tap of a filter equal") {
    RandomStream rng(1, 0);
    const WeightCovariance cov = build_cov(MeanPool{}, {2, 2});
    const LayerWeights w = sample_weights(cov, sqrt_factor(cov), 3, 2, rng);
    for (int i = 0; i < 3; ++i)
      for (int c = 0; c < 2; ++c)
        for (std::size_t p = 1; p < 4; ++p) CHECK(w(i, c, p) == doctest::Approx(w(i, c, 0)).epsilon(1e-12));
  }
  auto moments = [](const WeightCovariance& cov, int c_in, std::size_t draws) {
    // Sample covariance of filter taps over draws * c_out * c_in filters,
    // with per-entry standard errors from the product variances.
    const CovSqrtFactor r = sqrt_factor(cov);
    const long np = long(cov.size());
    Eigen::MatrixXd sum = Eigen::MatrixXd::Zero(np, np), sum_sq = sum;
    std::size_t count = 0;
    for (std::size_t d = 0; d < draws; ++d) {
      RandomStream rng(7, d);
      const LayerWeights w = sample_weights(cov, r, 50, c_in, rng);
      for (int i = 0; i < w.c_out; ++i)
        for (int c = 0; c < c_in; ++c, ++count)
          for (long p = 0; p < np; ++p)
            for (long p2 = 0; p2 < np; ++p2) {
              const double v = w(i, c, std::size_t(p)) * w(i, c, std::size_t(p2));
              sum(p, p2) += v;
              sum_sq(p, p2) += v * v;
            }
    }
    const double n = double(count);
    const Eigen::MatrixXd mean = sum / n;
    const Eigen::MatrixXd se = ((sum_sq / n - mean.cwiseProduct(mean)) / (n - 1)).cwiseSqrt();
    return std::pair{mean, se};
  };
  SUBCASE("independent taps have variance 1/c_in and no correlation") {
    const auto [mean, se] = moments(build_cov(Independent{1.0}, {3}), 4, 500);
    for (long p = 0; p < 3; ++p)
      for (long p2 = 0; p2 < 3; ++p2) CHECK(std::abs(mean(p, p2) - (p == p2 ? 0.25 : 0.0)) <= 3.0 * se(p, p2));
  }
  SUBCASE("Matern taps reproduce cov / c_in") {
    const WeightCovariance cov = build_cov(Matern32{2.0}, {3});
    const auto [mean, se] = moments(cov, 4, 500);
    for (long p = 0; p < 3; ++p)
      for (long p2 = 0; p2 < 3; ++p2) CHECK(std::abs(mean(p, p2) - cov(std::size_t(p), std::size_t(p2)) / 4.0) <= 3.0 * se(p, p2));
  }
}

TEST_CASE("finite forward pass") {
  SUBCASE("all-zero weights give zero output") {
    const ArchitectureSpec a = toy_arch();
    FiniteNetConfig cfg{a, 4, 0, 2, 1, 1};
    NetworkWeights w = sample_network(cfg, 1, 0);
    for (LayerWeights& l : w) l.w.setZero();
    const Image out = finite_forward(a, w, toy_inputs(1, 1)[0]);
    for (double v : out.values) CHECK(v == 0.0);
  }
  SUBCASE("hand-computed 1D convolution") {
    // conv [1, 2, -3] on [1, -1, 2] with zero padding gives [1, -3, 7];
    // ReLU gives sqrt(2) [1, 0, 7]; the output filter [1, 10, 100] reads
    // position 3 with tap 1 and position 1 with tap 3.
    const ArchitectureSpec a = one_conv(3, 3, true);
    const Image out = finite_forward(a, {weights({1, 2, -3}), weights({1, 10, 100})}, signal({1, -1, 2}));
    REQUIRE(out.values.size() == 1);
    CHECK(out.values[0] == doctest::Approx(107.0 * std::numbers::sqrt2).epsilon(1e-15));

    const Image linear = finite_forward(one_conv(3, 3, false), {weights({1, 2, -3}), weights({1, 10, 100})},
                                        signal({1, -1, 2}));
    CHECK(linear.values[0] == doctest::Approx(7.0 - 30.0 + 100.0).epsilon(1e-15));
  }
  SUBCASE("extent 2 with a width-3 filter reads zero padding at both ends") {
    const ArchitectureSpec a = one_conv(2, 3, false);
    const Image x = signal({2.0, 5.0});
    // Each output sees both inputs plus one padded zero.
    CHECK(finite_forward(a, {weights({1, 1, 1}), weights({1, 0})}, x).values[0] == 7.0);
    CHECK(finite_forward(a, {weights({1, 1, 1}), weights({0, 1})}, x).values[0] == 7.0);
    // Tap 1 reads the right neighbour: position 2 sees padding, position 1 sees 5.
    CHECK(finite_forward(a, {weights({1, 0, 0}), weights({1, 0})}, x).values[0] == 0.0);
    CHECK(finite_forward(a, {weights({1, 0, 0}), weights({0, 1})}, x).values[0] == 5.0);
  }
  SUBCASE("batch and single-input passes agree") {
    const ArchitectureSpec a = toy_arch();
    FiniteNetConfig cfg{a, 5, 0, 2, 3, 1};
    const NetworkWeights w = sample_network(cfg, 1, 4);
    const std::vector<Image> xs = toy_inputs(2, 3);
    const std::vector<Image> batch = finite_forward(a, w, xs);
    // Same values up to the GEMM's blocking-dependent rounding.
    for (std::size_t i = 0; i < xs.size(); ++i) {
      const Image single = finite_forward(a, w, xs[i]);
      REQUIRE(single.values.size() == batch[i].values.size());
      for (std::size_t k = 0; k < single.values.size(); ++k)
        CHECK(batch[i].values[k] == doctest::Approx(single.values[k]).epsilon(1e-12));
    }
  }
  SUBCASE("shape mismatches are contract errors") {
    const ArchitectureSpec a = one_conv(3, 3, false);
    CHECK_THROWS_AS(finite_forward(a, {weights({1, 1}), weights({1, 1, 1})}, signal({1, 2, 3})), ContractError);
    CHECK_THROWS_AS(finite_forward(a, {weights({1, 1, 1})}, signal({1, 2, 3})), ContractError);
  }
}

TEST_CASE("bivariate ReLU expectation estimator") {
  RandomStream rng(3, 1);
  const McEstimate indep = mc_relu_expectation(1.0, 1.0, 0.0, 1000000, rng);
  CHECK(std::abs(indep.estimate - 1.0 / std::numbers::pi) <= 3.0 * indep.standard_error);
  for (double s : {0.5, 2.0}) {
    const McEstimate same = mc_relu_expectation(s, s, s, 1000000, rng);
    CHECK(std::abs(same.estimate - s) <= 3.0 * same.standard_error);
  }
  // Pins the golden value used by the closed-form tests.
  const McEstimate half = mc_relu_expectation(1.0, 1.0, 0.5, 1000000, rng);
  CHECK(std::abs(half.estimate - 0.6089977810442294) <= 4.0 * half.standard_error);
  CHECK(std::abs(half.estimate - relu_expectation(1.0, 1.0, 0.5)) <= 4.0 * half.standard_error);
  CHECK_THROWS_AS(mc_relu_expectation(1.0, 1.0, 1.5, 10, rng), ParameterError);
  CHECK_THROWS_AS(mc_relu_expectation(-1.0, 1.0, 0.0, 10, rng), ParameterError);
}

TEST_CASE("empirical kernel") {
  const ArchitectureSpec a = toy_arch();
  const std::vector<Image> xs = toy_inputs(5, 3);
  const Eigen::MatrixXd k = gram_matrix(xs, a).entries;

  SUBCASE("zero mean, uncorrelated channels, covariance near the analytic kernel") {
    FiniteNetConfig cfg{a, 64, 0, 4000, 11, 1};
    const EmpiricalMoment m = empirical_kernel(cfg, xs);
    CHECK(m.samples == 4000);
    for (long i = 0; i < 3; ++i) {
      CHECK(std::abs(m.mean(i)) <= 3.0 * m.mean_se(i));
      for (long j = 0; j < 3; ++j) {
        CHECK(std::abs(m.cross_channel(i, j)) <= 3.0 * m.cross_channel_se(i, j));
        CHECK(std::abs(m.covariance(i, j) - k(i, j)) <= std::max(3.0 * m.covariance_se(i, j), 0.02 * std::abs(k(i, j))));
      }
    }
  }
  SUBCASE("identical seeds are bitwise reproducible for any thread count") {
    FiniteNetConfig cfg{a, 8, 0, 300, 21, 1};
    const EmpiricalMoment m1 = empirical_kernel(cfg, xs);
    const EmpiricalMoment m2 = empirical_kernel(cfg, xs);
    cfg.threads = 3;
    const EmpiricalMoment m3 = empirical_kernel(cfg, xs);
    auto same = [](const Eigen::MatrixXd& x, const Eigen::MatrixXd& y) {
      return std::memcmp(x.data(), y.data(), sizeof(double) * std::size_t(x.size())) == 0;
    };
    CHECK(same(m1.covariance, m2.covariance));
    CHECK(same(m1.covariance, m3.covariance));
    CHECK(same(m1.covariance_se, m3.covariance_se));
    CHECK(same(m1.cross_channel, m3.cross_channel));
    cfg.seed = 22;
    CHECK_FALSE(same(m1.covariance, empirical_kernel(cfg, xs).covariance));
  }
  SUBCASE("deviation shrinks with the number of samples") {
    double previous = 0.0, previous_se = 0.0;
    for (std::size_t samples : {1000u, 10000u, 100000u}) {
      FiniteNetConfig cfg{a, 16, 2, samples, 31, 1};
      const EmpiricalMoment m = empirical_kernel(cfg, xs);
      const double dev = (m.covariance - k).cwiseAbs().maxCoeff();
      const double se = m.covariance_se.maxCoeff();
      if (samples > 1000) CHECK(dev <= previous + 2.0 * previous_se);
      previous = dev;
      previous_se = se;
    }
  }
  SUBCASE("finite-width bias shrinks with the width") {
    FiniteNetConfig narrow{a, 16, 0, 20000, 41, 1};
    FiniteNetConfig wide{a, 256, 0, 2000, 41, 1};
    const double d16 = max_rel_dev(empirical_kernel(narrow, xs), k);
    const double d256 = max_rel_dev(empirical_kernel(wide, xs), k);
    MESSAGE("relative deviation C=16: " << d16 << ", C=256: " << d256);
    CHECK(d256 < d16);
  }
  SUBCASE("invalid configurations") {
    FiniteNetConfig cfg{a, 0, 0, 10, 1, 1};
    CHECK_THROWS_AS(empirical_kernel(cfg, xs), ParameterError);
    cfg.channels = 4;
    cfg.n_samples = 1;
    CHECK_THROWS_AS(empirical_kernel(cfg, xs), ParameterError);
  }
}
