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

// Whole-network oracles built from the brute-force layer references.

#include <variant>

#include "ccgp/architecture.hpp"
#include "oracles.hpp"
#include "support.hpp"

namespace ccgp::test {

inline ConvGeometry same_geom(const Dims& extent, const Dims& patch, int stride = 1) {
  ConvGeometry g;
  g.input_extent = extent;
  g.patch_size = patch;
  g.stride = stride;
  return g;
}

// Random architecture of independent or correlated convs (+ ReLU), ending in
// a CollapseOutput whose covariance is independent or Matern.
inline ArchitectureSpec random_arch(Gen& gen, bool correlated_hidden, bool correlated_output) {
  ArchitectureSpec a;
  a.id = "random";
  const int rank = gen.integer(1, 2);
  a.input_extent = gen.dims(rank, 3, rank == 1 ? 9 : 6);
  Dims extent = a.input_extent;
  const int depth = gen.integer(1, 3);
  for (int k = 0; k < depth; ++k) {
    ConvGeometry g = same_geom(extent, gen.dims(rank, 1, 3), gen.integer(1, 2));
    const WeightCovariance cov = correlated_hidden && gen.coin()
                                     ? build_cov(Matern32{gen.uniform(0.5, 3.0)}, g.patch_size)
                                     : build_cov(Independent{gen.uniform(0.5, 2.0)}, g.patch_size);
    a.layers.emplace_back(ConvLayer{g, cov});
    a.layers.emplace_back(ReluLayer{});
    extent = output_extent(g);
  }
  a.layers.emplace_back(CollapseOutputLayer{correlated_output ? build_cov(Matern32{gen.uniform(0.5, 4.0)}, extent)
                                                              : build_cov(Independent{1.0}, extent)});
  return a;
}

// Pair-level reference: straight composition of brute-force oracles.
inline double reference_kernel(const ArchitectureSpec& a, const Image& x, const Image& x2) {
  Eigen::MatrixXd c = reference_input_moment(x, x2);
  Eigen::MatrixXd s1 = reference_input_moment(x, x);
  Eigen::MatrixXd s2 = reference_input_moment(x2, x2);
  for (const Layer& layer : a.layers) {
    if (const auto* conv = std::get_if<ConvLayer>(&layer)) {
      c = reference_conv(c, conv->cov, conv->geom);
      s1 = reference_conv(s1, conv->cov, conv->geom);
      s2 = reference_conv(s2, conv->cov, conv->geom);
    } else if (std::holds_alternative<ReluLayer>(layer)) {
      const Eigen::VectorXd d1 = s1.diagonal(), d2 = s2.diagonal();
      c = reference_relu(c, d1, d2);
      s1 = reference_relu(s1, d1, d1);
      s2 = reference_relu(s2, d2, d2);
    } else if (const auto* out = std::get_if<CollapseOutputLayer>(&layer)) {
      Dims extent = out->cov.patch_size();
      ConvGeometry g = same_geom(extent, extent);
      g.padding = Padding::Valid;
      return reference_conv(c, out->cov, g)(0, 0);
    }
  }
  return 0.0;
}

// Locally connected reference for all-independent architectures: only the
// diagonals Sigma_qq are ever propagated.
inline double lcn_kernel(const ArchitectureSpec& a, const Image& x, const Image& x2) {
  const std::size_t n0 = x.positions();
  Eigen::VectorXd c(n0), s1(n0), s2(n0);
  for (std::size_t q = 0; q < n0; ++q) {
    double u = 0, v = 0, w = 0;
    for (int ch = 0; ch < x.channels; ++ch) {
      u += x(ch, q) * x2(ch, q);
      v += x(ch, q) * x(ch, q);
      w += x2(ch, q) * x2(ch, q);
    }
    c(long(q)) = u / x.channels;
    s1(long(q)) = v / x.channels;
    s2(long(q)) = w / x.channels;
  }
  for (const Layer& layer : a.layers) {
    if (const auto* conv = std::get_if<ConvLayer>(&layer)) {
      const std::size_t nq = volume(reference_output_extent(conv->geom));
      Eigen::VectorXd nc = Eigen::VectorXd::Zero(long(nq)), n1 = nc, n2 = nc;
      for (std::size_t q = 0; q < nq; ++q)
        for (std::size_t p = 0; p < conv->cov.size(); ++p) {
          const long i = reference_tap(conv->geom, q, p);
          if (i < 0) continue;
          nc(long(q)) += conv->cov(p, p) * c(i);
          n1(long(q)) += conv->cov(p, p) * s1(i);
          n2(long(q)) += conv->cov(p, p) * s2(i);
        }
      c = nc;
      s1 = n1;
      s2 = n2;
    } else if (std::holds_alternative<ReluLayer>(layer)) {
      for (Eigen::Index q = 0; q < c.size(); ++q) {
        c(q) = reference_relu(s1(q), s2(q), c(q));
        s1(q) = reference_relu(s1(q), s1(q), s1(q));
        s2(q) = reference_relu(s2(q), s2(q), s2(q));
      }
    } else if (const auto* out = std::get_if<CollapseOutputLayer>(&layer)) {
      double k = 0.0;
      for (Eigen::Index q = 0; q < c.size(); ++q) k += out->cov(std::size_t(q), std::size_t(q)) * c(q);
      return k;
    }
  }
  return 0.0;
}

}  // namespace ccgp::test
