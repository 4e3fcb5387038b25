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

#include "ccgp/conv_geometry.hpp"

#include <string>

#include "ccgp/errors.hpp"

namespace ccgp {

namespace {

int ceil_half(int p) { return (p + 1) / 2; }

int floor_div(int a, int b) {
  int q = a / b;
  if ((a % b != 0) && ((a < 0) != (b < 0))) --q;
  return q;
}

// 1-based patch function along one dimension, before any range check.
int patch_coordinate(const ConvGeometry& g, int d, int q, int p) {
  const int s = g.stride;
  const int h = g.dilation;
  const int P = g.patch_size[d];
  int f = s * q - h * (p - ceil_half(P));
  if (g.padding == Padding::Valid) f += 1 - s + h * (P - ceil_half(P));
  return f;
}

}  // namespace

std::size_t volume(const Dims& extent) {
  std::size_t v = 1;
  for (int e : extent) v *= static_cast<std::size_t>(e);
  return v;
}

std::size_t flatten(const Dims& coord, const Dims& extent) {
  std::size_t flat = 0;
  for (std::size_t d = 0; d < extent.size(); ++d) flat = flat * extent[d] + coord[d];
  return flat;
}

Dims unflatten(std::size_t flat, const Dims& extent) {
  Dims coord(extent.size());
  for (std::size_t d = extent.size(); d-- > 0;) {
    coord[d] = static_cast<int>(flat % extent[d]);
    flat /= extent[d];
  }
  return coord;
}

void ConvGeometry::validate() const {
  const int D = rank();
  if (D < 1) throw ContractError("convolution geometry needs at least one spatial dimension");
  if (static_cast<int>(patch_size.size()) != D)
    throw ContractError("patch size rank " + std::to_string(patch_size.size()) +
                        " does not match input rank " + std::to_string(D));
  if (stride < 1 || dilation < 1) throw ContractError("stride and dilation must be positive");
  for (int d = 0; d < D; ++d) {
    if (patch_size[d] < 1 || input_extent[d] < 1)
      throw ContractError("patch and input sizes must be positive");
    if (padding == Padding::Valid && patch_size[d] > input_extent[d])
      throw ContractError("Valid convolution patch exceeds the input extent");
  }
  (void)output_extent(*this);
}

ConvGeometry collapse_geometry(const Dims& extent) {
  return ConvGeometry{extent, 1, 1, extent, Padding::Valid};
}

Dims output_extent(const ConvGeometry& g) {
  Dims out(g.input_extent.size());
  for (std::size_t d = 0; d < out.size(); ++d) {
    const int F = g.input_extent[d];
    if (g.padding == Padding::Same) {
      out[d] = (F + g.stride - 1) / g.stride;
    } else {
      out[d] = floor_div(F - g.dilation * (g.patch_size[d] - 1) - 1, g.stride) + 1;
    }
    if (out[d] < 1) throw ContractError("convolution produces an empty output extent");
  }
  return out;
}

std::optional<Dims> patch_index(const ConvGeometry& g, const Dims& q, const Dims& p) {
  const int D = g.rank();
  if (static_cast<int>(q.size()) != D || static_cast<int>(p.size()) != D)
    throw ContractError("patch_index: coordinate rank mismatch");
  const Dims out = output_extent(g);
  Dims result(D);
  bool padded = false;
  for (int d = 0; d < D; ++d) {
    if (q[d] < 1 || q[d] > out[d]) throw ContractError("patch_index: output position out of range");
    if (p[d] < 1 || p[d] > g.patch_size[d]) throw ContractError("patch_index: patch index out of range");
    result[d] = patch_coordinate(g, d, q[d], p[d]);
    if (result[d] < 1 || result[d] > g.input_extent[d]) padded = true;
  }
  if (padded) {
    if (g.padding == Padding::Valid)
      throw ContractError("patch_index: Valid convolution reads outside its input");
    return std::nullopt;
  }
  return result;
}

PatchTable::PatchTable(const ConvGeometry& geom) {
  geom.validate();
  output_extent_ = ccgp::output_extent(geom);
  outputs_ = volume(output_extent_);
  patch_volume_ = volume(geom.patch_size);
  entries_.assign(outputs_ * patch_volume_, -1);

  const int D = geom.rank();
  Dims in_coord(D);
  for (std::size_t q = 0; q < outputs_; ++q) {
    const Dims qc = unflatten(q, output_extent_);
    for (std::size_t p = 0; p < patch_volume_; ++p) {
      const Dims pc = unflatten(p, geom.patch_size);
      bool inside = true;
      for (int d = 0; d < D && inside; ++d) {
        const int f = patch_coordinate(geom, d, qc[d] + 1, pc[d] + 1);
        if (f < 1 || f > geom.input_extent[d]) inside = false;
        in_coord[d] = f - 1;
      }
      if (inside) entries_[q * patch_volume_ + p] = static_cast<long>(flatten(in_coord, geom.input_extent));
    }
  }
}

}  // namespace ccgp
