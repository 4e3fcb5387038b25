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

#include "ccgp/errors.hpp"
#include "ccgp/moment_tensor.hpp"
#include "support.hpp"

using namespace ccgp;

TEST_CASE("full tensor layout is row-major in (q, q')") {
  MomentTensor t = MomentTensor::full({2, 3});
  CHECK(t.positions() == 6);
  CHECK(t.entries() == 36);
  t.at(1, 4) = 2.5;
  CHECK(t.data()[1 * 6 + 4] == 2.5);
  CHECK(t.value(1, 4) == 2.5);
}

TEST_CASE("band tensor stores sorted unique offsets") {
  MomentTensor t = MomentTensor::band({5}, {{2}, {0}, {2}, {-1}});
  CHECK(t.offsets() == std::vector<Dims>{{-1}, {0}, {2}});
  CHECK(t.entries() == 15);
  CHECK(t.partner(0, {2}) == -1);
  CHECK(t.partner(3, {2}) == 1);
  CHECK(t.partner(4, {-1}) == -1);
  CHECK_THROWS_AS(t.value(0, 3), ContractError);
  CHECK_THROWS_AS(MomentTensor::band({5, 5}, {{1}}), ContractError);
}

TEST_CASE("to_band extracts exactly the requested offsets") {
  test::Gen gen(1);
  const Dims extent{3, 4};
  MomentTensor full = MomentTensor::full(extent);
  for (double& v : full.data()) v = gen.normal();
  const std::vector<Dims> offs{{0, 0}, {1, -1}, {-2, 3}};
  const MomentTensor band = to_band(full, offs);
  for (std::size_t q = 0; q < 12; ++q)
    for (std::size_t q2 = 0; q2 < 12; ++q2) {
      const Dims d = position_offset(q, q2, extent);
      if (band.find_offset(d)) CHECK(band.value(q, q2) == full.at(q, q2));
    }
  const std::vector<double> diag = band.diagonal();
  for (std::size_t q = 0; q < 12; ++q) CHECK(diag[q] == full.at(q, q));
  CHECK_THROWS_AS(to_band(band, offs), ContractError);
  CHECK_THROWS_AS(to_band(full, {{1, 1}}).diagonal(), ContractError);
}

TEST_CASE("offset helpers") {
  CHECK(offset_representable({2, -3}, {3, 4}));
  CHECK_FALSE(offset_representable({3, 0}, {3, 4}));
  CHECK(position_offset(flatten({2, 1}, {3, 4}), flatten({0, 3}, {3, 4}), {3, 4}) == Dims{2, -2});
}
