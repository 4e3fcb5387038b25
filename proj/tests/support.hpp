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

// Hand-rolled random generators shared by the property tests.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <random>
#include <string>
#include <vector>

#include "ccgp/architecture.hpp"
#include "ccgp/conv_geometry.hpp"
#include "ccgp/image.hpp"
#include "ccgp/weight_cov.hpp"

namespace ccgp::test {

class Gen {
 public:
  explicit Gen(std::uint64_t seed) : engine_(seed) {}

  int integer(int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(engine_); }
  double uniform(double lo = 0.0, double hi = 1.0) { return std::uniform_real_distribution<double>(lo, hi)(engine_); }
  double normal() { return std::normal_distribution<double>()(engine_); }
  bool coin() { return integer(0, 1) == 1; }
  std::mt19937_64& engine() { return engine_; }

  Dims dims(int rank, int lo, int hi) {
    Dims d(rank);
    for (int& v : d) v = integer(lo, hi);
    return d;
  }

  Image image(int channels, const Dims& extent) {
    Image x(channels, extent);
    for (double& v : x.values) v = normal();
    return x;
  }

  /// Same-padded geometry with a filter no larger than 3 per dimension.
  ConvGeometry geometry(int rank, int max_extent = 7, int max_stride = 2, int max_dilation = 1) {
    ConvGeometry g;
    g.input_extent = dims(rank, 2, max_extent);
    g.patch_size = dims(rank, 1, 3);
    g.stride = integer(1, max_stride);
    g.dilation = integer(1, max_dilation);
    g.padding = Padding::Same;
    return g;
  }

  /// Random symmetric PSD matrix G^T G.
  Eigen::MatrixXd psd(Eigen::Index n, Eigen::Index rank) {
    Eigen::MatrixXd g(rank, n);
    for (Eigen::Index i = 0; i < g.size(); ++i) g.data()[i] = normal();
    return g.transpose() * g;
  }

 private:
  std::mt19937_64 engine_;
};

/// Writes a CIFAR-10 style batch with `per_class` records of every class,
/// labels cycling 0..9, random pixel bytes.
inline void write_synthetic_cifar(const std::filesystem::path& path, std::size_t per_class, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> byte(0, 255);
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  for (std::size_t r = 0; r < 10 * per_class; ++r) {
    out.put(static_cast<char>(r % 10));
    for (int k = 0; k < 3 * 32 * 32; ++k) out.put(static_cast<char>(byte(rng)));
  }
}

/// Fresh scratch directory under the system temp path.
inline std::filesystem::path scratch_dir(const std::string& name) {
  const std::filesystem::path dir = std::filesystem::temp_directory_path() / ("ccgp-test-" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace ccgp::test
