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

#include <string>
#include <variant>
#include <vector>

#include "ccgp/conv_geometry.hpp"
#include "ccgp/weight_cov.hpp"

namespace ccgp {

/// Random convolution whose filter weights have spatial covariance `cov`.
struct ConvLayer {
  ConvGeometry geom;
  WeightCovariance cov;
};

/// Balanced ReLU, phi(x) = sqrt(2) max(0, x).
struct ReluLayer {};

/// Deterministic non-overlapping average pooling.
struct MeanPoolLayer {
  Dims window;
};

/// Final layer whose filter spans the whole incoming extent, producing a
/// spatially scalar output.
struct CollapseOutputLayer {
  WeightCovariance cov;
};

using Layer = std::variant<ConvLayer, ReluLayer, MeanPoolLayer, CollapseOutputLayer>;

struct ArchitectureSpec {
  std::string id;
  Dims input_extent;
  std::vector<Layer> layers;

  /// Spatial extent entering each layer, plus the output extent (size
  /// layers.size() + 1). Throws ContractError if the layers do not chain.
  std::vector<Dims> stage_extents() const;

  /// Extents chain, each conv geometry matches its input, and exactly one
  /// CollapseOutput appears as the last layer with a covariance spanning the
  /// full incoming extent.
  void validate() const;
};

}  // namespace ccgp
