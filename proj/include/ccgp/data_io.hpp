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

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "ccgp/errors.hpp"
#include "ccgp/gp_predict.hpp"
#include "ccgp/gram.hpp"
#include "ccgp/image.hpp"

namespace ccgp {

inline constexpr std::size_t kCifarClasses = 10;
inline constexpr std::size_t kCifarRecordBytes = 1 + 3 * 32 * 32;

/// Labelled images, pixels scaled to [0, 1], plus the provenance needed to
/// match persisted kernels against the subset they were computed on.
struct ImageDataset {
  std::vector<Image> images;
  std::vector<int> labels;
  std::vector<std::size_t> record_indices;  // positions in the concatenated source batches
  std::uint64_t seed = 0;
  std::uint64_t digest = 0;

  std::size_t n() const { return images.size(); }
};

/// 64-bit FNV-1a.
std::uint64_t fnv1a64(std::span<const std::uint8_t> bytes, std::uint64_t hash = 0xcbf29ce484222325ULL);

/// FNV-1a over the ordered record indices then the seed, each as 8
/// little-endian bytes.
std::uint64_t subset_digest(const std::vector<std::size_t>& record_indices, std::uint64_t seed);

/// Parses CIFAR-10 binary records (1 label byte, then 1024 R, 1024 G, 1024 B
/// bytes). `path` is a batch file or a directory holding data_batch_*.bin.
/// Throws IoError on unreadable or truncated input.
ImageDataset read_cifar10(const std::filesystem::path& path);

/// Seeded class-balanced subset of `size` records (size / 10 per class),
/// ordered by record index.
ImageDataset load_cifar10_subset(const std::filesystem::path& path, std::size_t size, std::uint64_t seed);

/// Class-balanced subset of an already parsed dataset.
ImageDataset balanced_subset(const ImageDataset& source, std::size_t size, std::uint64_t seed);

struct DatasetHalf {
  GramMatrix gram;
  std::vector<int> labels;
  std::vector<std::size_t> indices;  // rows of the parent Gram matrix
};

/// Splits a kernel dataset into two disjoint halves by principal submatrices:
/// within every class, the first half of its indices (ascending) goes to the
/// first half. Throws ContractError for odd n or an odd class count.
std::pair<DatasetHalf, DatasetHalf> halve_kernel_dataset(const GramMatrix& gram, const std::vector<int>& labels);

enum class KernelFileErrorKind { Io, MagicMismatch, VersionMismatch, DigestMismatch, Truncated };

class KernelFileError : public IoError {
 public:
  KernelFileError(KernelFileErrorKind kind, const std::string& what) : IoError(what), kind_(kind) {}
  KernelFileErrorKind kind() const { return kind_; }

 private:
  KernelFileErrorKind kind_;
};

inline constexpr std::uint32_t kKernelFileVersion = 1;

/// Writes "CKRN", u32 version, u32 n, u16 id length, id bytes, f64
/// lengthscale, u64 digest, then the upper triangle (with diagonal) row by
/// row as f64; everything little-endian.
void save_kernel(const GramMatrix& gram, const std::filesystem::path& path);

/// Reads a kernel file, optionally requiring a dataset digest.
GramMatrix load_kernel(const std::filesystem::path& path, std::optional<std::uint64_t> expected_digest = std::nullopt);

/// save_kernel then load_kernel.
GramMatrix kernel_store_roundtrip(const GramMatrix& gram, const std::filesystem::path& path);

/// One cross-validation sweep point.
struct SweepRecord {
  std::string arch_id;
  std::size_t n = 0;
  double lengthscale = 0.0;
  CVResult cv;
};

inline constexpr const char* kResultsHeader = "arch_id,n,lengthscale,sigma,fold,accuracy,mean_accuracy,stderr";

/// CSV with one row per (lengthscale, sigma, fold) and one "best" summary row
/// per lengthscale. Appends (without repeating the header) when asked.
void export_results(const std::vector<SweepRecord>& records, const std::filesystem::path& path, bool append = false);

}  // namespace ccgp
