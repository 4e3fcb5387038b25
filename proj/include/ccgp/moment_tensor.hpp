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
#include <span>
#include <vector>

#include "ccgp/conv_geometry.hpp"

namespace ccgp {

enum class Representation { Full, Band };

/// Second moment of activations over pairs of spatial positions (q, q').
///
/// Full stores all |F|^2 entries, row-major in (q, q'). Band stores, for each
/// signed offset d in offsets(), the entries (q, q - d) for every q; slots
/// whose partner q - d lies outside the extent hold zero. Positions are
/// 0-based flat indices.
class MomentTensor {
 public:
  MomentTensor() = default;

  static MomentTensor full(Dims extent);
  static MomentTensor band(Dims extent, std::vector<Dims> offsets);

  Representation representation() const { return rep_; }
  bool is_full() const { return rep_ == Representation::Full; }
  const Dims& extent() const { return extent_; }
  std::size_t positions() const { return positions_; }
  const std::vector<Dims>& offsets() const { return offsets_; }
  std::size_t entries() const { return data_.size(); }

  std::span<double> data() { return data_; }
  std::span<const double> data() const { return data_; }

  /// Full: row q. Band: the slab of offset index `o`.
  double* row(std::size_t i) { return data_.data() + i * positions_; }
  const double* row(std::size_t i) const { return data_.data() + i * positions_; }

  double& at(std::size_t q, std::size_t q2) { return data_[q * positions_ + q2]; }
  double at(std::size_t q, std::size_t q2) const { return data_[q * positions_ + q2]; }

  /// Entry (q, q2) in either representation. Band throws ContractError when
  /// the offset q - q2 is not stored.
  double value(std::size_t q, std::size_t q2) const;

  std::optional<std::size_t> find_offset(const Dims& offset) const;

  /// Entries (q, q) for every q.
  std::vector<double> diagonal() const;

  /// Flat index of q - offset, or -1 when it leaves the extent.
  long partner(std::size_t q, const Dims& offset) const;

 private:
  Representation rep_ = Representation::Full;
  Dims extent_;
  std::size_t positions_ = 0;
  std::vector<Dims> offsets_;
  std::vector<double> data_;
};

/// Extracts the listed offsets of a Full tensor.
MomentTensor to_band(const MomentTensor& full, const std::vector<Dims>& offsets);

/// True when |offset_d| < extent_d in every dimension.
bool offset_representable(const Dims& offset, const Dims& extent);

/// Offset q - q2 of two flat positions.
Dims position_offset(std::size_t q, std::size_t q2, const Dims& extent);

}  // namespace ccgp
