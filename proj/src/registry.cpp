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

#include "ccgp/registry.hpp"

#include <charconv>
#include <cmath>
#include <limits>

#include "ccgp/errors.hpp"

namespace ccgp {

namespace {

ConvLayer conv(const Dims& extent, const Dims& patch, int stride, WeightCovariance cov) {
  ConvGeometry g;
  g.patch_size = patch;
  g.stride = stride;
  g.input_extent = extent;
  g.padding = Padding::Same;
  return {g, std::move(cov)};
}

ConvLayer independent_conv(const Dims& extent, int filter) {
  const Dims patch(extent.size(), filter);
  return conv(extent, patch, 1, build_cov(Independent{1.0}, patch));
}

std::optional<int> cnngp_depth(const std::string& id) {
  const std::string prefix = "cnngp-";
  if (id.rfind(prefix, 0) != 0) return std::nullopt;
  int depth = 0;
  const char* first = id.data() + prefix.size();
  const char* last = id.data() + id.size();
  const auto [ptr, ec] = std::from_chars(first, last, depth);
  if (ec != std::errc() || ptr != last || first == last || depth < 1) return std::nullopt;
  return depth;
}

ArchitectureSpec cnngp(int depth, double lengthscale, int filter) {
  ArchitectureSpec a;
  a.id = "cnngp-" + std::to_string(depth);
  a.input_extent = {32, 32};
  for (int k = 0; k < depth; ++k) {
    a.layers.emplace_back(independent_conv(a.input_extent, filter));
    a.layers.emplace_back(ReluLayer{});
  }
  a.layers.emplace_back(CollapseOutputLayer{lengthscale_covariance(lengthscale, a.input_extent)});
  return a;
}

ArchitectureSpec myrtle(double lengthscale, int filter, bool correlated) {
  ArchitectureSpec a;
  a.id = correlated ? "myrtle-10-corr" : "myrtle-10";
  a.input_extent = {32, 32};
  Dims extent = a.input_extent;
  for (int block = 0; block < 3; ++block) {
    for (int k = 0; k < 2; ++k) {
      // Each internal (pool 2x2, conv) pair becomes one strided correlated conv.
      if (correlated && block > 0 && k == 0) {
        a.layers.emplace_back(conv(extent, {6, 6}, 2, lengthscale_covariance(lengthscale, {6, 6})));
        extent = {extent[0] / 2, extent[1] / 2};
      } else {
        a.layers.emplace_back(independent_conv(extent, filter));
      }
      a.layers.emplace_back(ReluLayer{});
    }
    if (!correlated || block == 2) {
      a.layers.emplace_back(MeanPoolLayer{{2, 2}});
      extent = {extent[0] / 2, extent[1] / 2};
    }
  }
  const double out = correlated ? std::numeric_limits<double>::infinity() : lengthscale;
  a.layers.emplace_back(CollapseOutputLayer{lengthscale_covariance(out, extent)});
  return a;
}

ArchitectureSpec toy_1d(double lengthscale) {
  ArchitectureSpec a;
  a.id = "toy-1d";
  a.input_extent = {6};
  for (int k = 0; k < 2; ++k) {
    a.layers.emplace_back(conv(a.input_extent, {3}, 1, build_cov(Matern32{2.0}, {3})));
    a.layers.emplace_back(ReluLayer{});
  }
  a.layers.emplace_back(CollapseOutputLayer{lengthscale_covariance(lengthscale, a.input_extent)});
  return a;
}

}  // namespace

WeightCovariance lengthscale_covariance(double lengthscale, const Dims& patch) {
  if (std::isnan(lengthscale) || lengthscale < 0.0)
    throw ParameterError("lengthscale must be non-negative, got " + std::to_string(lengthscale));
  if (lengthscale == 0.0) return build_cov(Independent{1.0}, patch);
  if (std::isinf(lengthscale)) return build_cov(MeanPool{}, patch);
  return build_cov(Matern32{lengthscale}, patch);
}

double default_lengthscale(const std::string& id) { return id == "toy-1d" ? 2.0 : std::numeric_limits<double>::infinity(); }

ArchitectureSpec make_architecture(const std::string& id, const RegistryOptions& options) {
  if (options.filter_size < 1) throw ParameterError("filter size must be positive");
  const double l = options.lengthscale.value_or(default_lengthscale(id));
  ArchitectureSpec a;
  if (const auto depth = cnngp_depth(id)) {
    a = cnngp(*depth, l, options.filter_size);
  } else if (id == "myrtle-10") {
    a = myrtle(l, options.filter_size, false);
  } else if (id == "myrtle-10-corr") {
    a = myrtle(l, options.filter_size, true);
  } else if (id == "toy-1d") {
    a = toy_1d(l);
  } else {
    throw ParameterError("unknown architecture '" + id + "'");
  }
  a.validate();
  return a;
}

std::vector<std::string> registered_architectures() { return {"cnngp-14", "myrtle-10", "myrtle-10-corr", "toy-1d"}; }

bool lengthscale_is_output_only(const std::string& id) { return id != "myrtle-10-corr"; }

void override_layer_covariance(ArchitectureSpec& arch, std::size_t layer_index, const WeightCovariance& cov) {
  if (layer_index >= arch.layers.size()) throw ContractError("layer index out of range");
  Layer& layer = arch.layers[layer_index];
  if (auto* c = std::get_if<ConvLayer>(&layer)) {
    if (cov.patch_size() != c->geom.patch_size) throw ContractError("override covariance does not match the filter");
    c->cov = cov;
  } else if (auto* o = std::get_if<CollapseOutputLayer>(&layer)) {
    if (cov.patch_size() != o->cov.patch_size()) throw ContractError("override covariance does not match the filter");
    o->cov = cov;
  } else {
    throw ContractError("layer " + std::to_string(layer_index) + " has no weights");
  }
  arch.validate();
}

}  // namespace ccgp
