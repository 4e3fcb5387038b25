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

#include "ccgp/moment_tensor.hpp"

#include <algorithm>
#include <cstdlib>

#include "ccgp/errors.hpp"

namespace ccgp {

MomentTensor MomentTensor::full(Dims extent) {
  MomentTensor t;
  t.rep_ = Representation::Full;
  t.positions_ = volume(extent);
  t.extent_ = std::move(extent);
  t.data_.assign(t.positions_ * t.positions_, 0.0);
  return t;
}

MomentTensor MomentTensor::band(Dims extent, std::vector<Dims> offsets) {
  for (const Dims& o : offsets)
    if (o.size() != extent.size()) throw ContractError("band offset rank does not match extent");
  std::sort(offsets.begin(), offsets.end());
  offsets.erase(std::unique(offsets.begin(), offsets.end()), offsets.end());
  MomentTensor t;
  t.rep_ = Representation::Band;
  t.positions_ = volume(extent);
  t.extent_ = std::move(extent);
  t.offsets_ = std::move(offsets);
  t.data_.assign(t.positions_ * t.offsets_.size(), 0.0);
  return t;
}

std::optional<std::size_t> MomentTensor::find_offset(const Dims& offset) const {
  auto it = std::lower_bound(offsets_.begin(), offsets_.end(), offset);
  if (it == offsets_.end() || *it != offset) return std::nullopt;
  return static_cast<std::size_t>(it - offsets_.begin());
}

long MomentTensor::partner(std::size_t q, const Dims& offset) const {
  const Dims c = unflatten(q, extent_);
  Dims p(c.size());
  for (std::size_t d = 0; d < c.size(); ++d) {
    p[d] = c[d] - offset[d];
    if (p[d] < 0 || p[d] >= extent_[d]) return -1;
  }
  return static_cast<long>(flatten(p, extent_));
}

double MomentTensor::value(std::size_t q, std::size_t q2) const {
  if (is_full()) return at(q, q2);
  const auto o = find_offset(position_offset(q, q2, extent_));
  if (!o) throw ContractError("band tensor does not store the requested offset");
  return row(*o)[q];
}

std::vector<double> MomentTensor::diagonal() const {
  std::vector<double> diag(positions_);
  if (is_full()) {
    for (std::size_t q = 0; q < positions_; ++q) diag[q] = at(q, q);
    return diag;
  }
  const auto o = find_offset(Dims(extent_.size(), 0));
  if (!o) throw ContractError("band tensor does not store the zero offset");
  std::copy_n(row(*o), positions_, diag.begin());
  return diag;
}

MomentTensor to_band(const MomentTensor& full, const std::vector<Dims>& offsets) {
  if (!full.is_full()) throw ContractError("to_band expects a Full tensor");
  MomentTensor out = MomentTensor::band(full.extent(), offsets);
  for (std::size_t o = 0; o < out.offsets().size(); ++o) {
    double* dst = out.row(o);
    for (std::size_t q = 0; q < out.positions(); ++q) {
      const long q2 = out.partner(q, out.offsets()[o]);
      if (q2 >= 0) dst[q] = full.at(q, static_cast<std::size_t>(q2));
    }
  }
  return out;
}

bool offset_representable(const Dims& offset, const Dims& extent) {
  for (std::size_t d = 0; d < extent.size(); ++d)
    if (std::abs(offset[d]) >= extent[d]) return false;
  return true;
}

Dims position_offset(std::size_t q, std::size_t q2, const Dims& extent) {
  const Dims a = unflatten(q, extent);
  const Dims b = unflatten(q2, extent);
  Dims o(a.size());
  for (std::size_t d = 0; d < a.size(); ++d) o[d] = a[d] - b[d];
  return o;
}

}  // namespace ccgp
