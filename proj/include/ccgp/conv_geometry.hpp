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
#include <optional>
#include <vector>

namespace ccgp {

/// D-tuple of integers: spatial sizes, positions, or signed offsets.
using Dims = std::vector<int>;

/// Number of elements of a spatial size, the product of its entries.
std::size_t volume(const Dims& extent);

/// Row-major flat index of a 0-based coordinate.
std::size_t flatten(const Dims& coord, const Dims& extent);
/// Inverse of flatten().
Dims unflatten(std::size_t flat, const Dims& extent);

enum class Padding { Same, Valid };

/// Index arithmetic of one convolutional layer.
///
/// Positions and patch indices are 1-based in the public contract. Under
/// Same padding the patch function is
///
///   f_q(p)_d = s * q_d - h * (p_d - ceil(P_d / 2))
///
/// and lookups that leave [1, F_d] read zero padding. Under Valid padding the
/// same function is shifted by the constant 1 - s + h * (P_d - ceil(P_d / 2)),
/// so every in-range output reads only in-range inputs; differences of patch
/// functions are unchanged.
struct ConvGeometry {
  Dims patch_size;
  int stride = 1;
  int dilation = 1;
  Dims input_extent;
  Padding padding = Padding::Same;

  int rank() const { return static_cast<int>(input_extent.size()); }

  /// Throws ContractError if the geometry is malformed.
  void validate() const;
};

/// Geometry of an output layer whose filter spans the whole incoming extent.
ConvGeometry collapse_geometry(const Dims& extent);

/// Output spatial size. Same: ceil(F / s). Valid: floor((F - h(P-1) - 1) / s) + 1.
Dims output_extent(const ConvGeometry& geom);

/// 1-based input position read by output position `q` at patch index `p`;
/// std::nullopt marks a zero-padding read (Same only).
std::optional<Dims> patch_index(const ConvGeometry& geom, const Dims& q, const Dims& p);

/// Flattened lookup table of the patch function: entry [q * |P| + p] holds the
/// 0-based flat input index read by flat output q at flat patch index p, or -1
/// for padding.
class PatchTable {
 public:
  explicit PatchTable(const ConvGeometry& geom);

  std::size_t outputs() const { return outputs_; }
  std::size_t patch_volume() const { return patch_volume_; }
  const Dims& output_extent() const { return output_extent_; }

  const long* row(std::size_t q) const { return entries_.data() + q * patch_volume_; }
  long operator()(std::size_t q, std::size_t p) const { return entries_[q * patch_volume_ + p]; }

 private:
  Dims output_extent_;
  std::size_t outputs_ = 0;
  std::size_t patch_volume_ = 0;
  std::vector<long> entries_;
};

}  // namespace ccgp
