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

#include <cstddef>
#include <vector>

#include "ccgp/conv_geometry.hpp"

namespace ccgp {

/// Multi-channel input tensor, channel-major: values[c * |extent| + q].
struct Image {
  int channels = 0;
  Dims extent;
  std::vector<double> values;

  Image() = default;
  Image(int c, Dims e) : channels(c), extent(std::move(e)), values(static_cast<std::size_t>(c) * volume(extent), 0.0) {}

  std::size_t positions() const { return volume(extent); }
  double& operator()(int c, std::size_t q) { return values[c * positions() + q]; }
  double operator()(int c, std::size_t q) const { return values[c * positions() + q]; }
};

}  // namespace ccgp
