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

#include "ccgp/data_io.hpp"

#include <algorithm>
#include <bit>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <iterator>
#include <map>
#include <random>

namespace ccgp {

namespace fs = std::filesystem;

namespace {

std::vector<std::uint8_t> read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void put_u16(std::vector<std::uint8_t>& out, std::uint16_t v) {
  for (int b = 0; b < 2; ++b) out.push_back(static_cast<std::uint8_t>(v >> (8 * b)));
}
void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int b = 0; b < 4; ++b) out.push_back(static_cast<std::uint8_t>(v >> (8 * b)));
}
void put_u64(std::vector<std::uint8_t>& out, std::uint64_t v) {
  for (int b = 0; b < 8; ++b) out.push_back(static_cast<std::uint8_t>(v >> (8 * b)));
}
void put_f64(std::vector<std::uint8_t>& out, double v) { put_u64(out, std::bit_cast<std::uint64_t>(v)); }

class Reader {
 public:
  explicit Reader(const std::vector<std::uint8_t>& bytes) : bytes_(bytes) {}

  std::uint64_t uint(int width) {
    need(width);
    std::uint64_t v = 0;
    for (int b = 0; b < width; ++b) v |= static_cast<std::uint64_t>(bytes_[pos_ + b]) << (8 * b);
    pos_ += width;
    return v;
  }
  double f64() { return std::bit_cast<double>(uint(8)); }
  std::string text(std::size_t len) {
    need(len);
    std::string s(reinterpret_cast<const char*>(bytes_.data() + pos_), len);
    pos_ += len;
    return s;
  }
  std::size_t remaining() const { return bytes_.size() - pos_; }

 private:
  void need(std::size_t n) const {
    if (pos_ + n > bytes_.size()) throw KernelFileError(KernelFileErrorKind::Truncated, "kernel file is truncated");
  }
  const std::vector<std::uint8_t>& bytes_;
  std::size_t pos_ = 0;
};

std::vector<fs::path> batch_files(const fs::path& path) {
  if (!fs::exists(path)) throw IoError("CIFAR-10 path does not exist: " + path.string());
  if (!fs::is_directory(path)) return {path};
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(path)) {
    const std::string name = entry.path().filename().string();
    if (name.rfind("data_batch_", 0) == 0 && entry.path().extension() == ".bin") files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  if (files.empty()) throw IoError("no data_batch_*.bin files in " + path.string());
  return files;
}

}  // namespace

std::uint64_t fnv1a64(std::span<const std::uint8_t> bytes, std::uint64_t hash) {
  for (std::uint8_t b : bytes) {
    hash ^= b;
    hash *= 0x100000001b3ULL;
  }
  return hash;
}

std::uint64_t subset_digest(const std::vector<std::size_t>& record_indices, std::uint64_t seed) {
  std::vector<std::uint8_t> bytes;
  bytes.reserve(8 * (record_indices.size() + 1));
  for (std::size_t i : record_indices) put_u64(bytes, i);
  put_u64(bytes, seed);
  return fnv1a64(bytes);
}

ImageDataset read_cifar10(const fs::path& path) {
  ImageDataset ds;
  for (const fs::path& file : batch_files(path)) {
    const std::vector<std::uint8_t> bytes = read_file(file);
    if (bytes.size() % kCifarRecordBytes != 0)
      throw IoError("truncated CIFAR-10 batch " + file.string() + " (" + std::to_string(bytes.size()) + " bytes)");
    for (std::size_t off = 0; off < bytes.size(); off += kCifarRecordBytes) {
      const int label = bytes[off];
      if (label >= static_cast<int>(kCifarClasses)) throw IoError("CIFAR-10 label out of range in " + file.string());
      Image img(3, {32, 32});
      for (std::size_t k = 0; k < 3 * 32 * 32; ++k) img.values[k] = bytes[off + 1 + k] / 255.0;
      ds.record_indices.push_back(ds.images.size());
      ds.images.push_back(std::move(img));
      ds.labels.push_back(label);
    }
  }
  ds.digest = subset_digest(ds.record_indices, ds.seed);
  return ds;
}

ImageDataset balanced_subset(const ImageDataset& source, std::size_t size, std::uint64_t seed) {
  if (size == 0 || size % kCifarClasses != 0)
    throw ParameterError("subset size must be a positive multiple of 10, got " + std::to_string(size));
  const std::size_t per_class = size / kCifarClasses;
  std::vector<std::vector<std::size_t>> by_class(kCifarClasses);
  for (std::size_t i = 0; i < source.n(); ++i) by_class.at(static_cast<std::size_t>(source.labels[i])).push_back(i);

  std::mt19937_64 rng(seed);
  std::vector<std::size_t> chosen;
  for (std::size_t c = 0; c < kCifarClasses; ++c) {
    auto& idx = by_class[c];
    if (idx.size() < per_class)
      throw ParameterError("class " + std::to_string(c) + " has only " + std::to_string(idx.size()) +
                           " records, need " + std::to_string(per_class));
    std::shuffle(idx.begin(), idx.end(), rng);
    chosen.insert(chosen.end(), idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(per_class));
  }
  std::sort(chosen.begin(), chosen.end());

  ImageDataset ds;
  ds.seed = seed;
  for (std::size_t i : chosen) {
    ds.images.push_back(source.images[i]);
    ds.labels.push_back(source.labels[i]);
    ds.record_indices.push_back(source.record_indices[i]);
  }
  ds.digest = subset_digest(ds.record_indices, seed);
  return ds;
}

ImageDataset load_cifar10_subset(const fs::path& path, std::size_t size, std::uint64_t seed) {
  return balanced_subset(read_cifar10(path), size, seed);
}

std::pair<DatasetHalf, DatasetHalf> halve_kernel_dataset(const GramMatrix& gram, const std::vector<int>& labels) {
  const std::size_t n = gram.n();
  if (labels.size() != n) throw ContractError("halve: label count does not match the Gram matrix");
  if (n % 2 != 0) throw ContractError("halve: odd number of points");
  std::map<int, std::vector<std::size_t>> by_class;
  for (std::size_t i = 0; i < n; ++i) by_class[labels[i]].push_back(i);

  std::vector<std::size_t> first, second;
  for (const auto& [label, idx] : by_class) {
    if (idx.size() % 2 != 0) throw ContractError("halve: class " + std::to_string(label) + " has an odd count");
    first.insert(first.end(), idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(idx.size() / 2));
    second.insert(second.end(), idx.begin() + static_cast<std::ptrdiff_t>(idx.size() / 2), idx.end());
  }
  std::sort(first.begin(), first.end());
  std::sort(second.begin(), second.end());

  auto make = [&](const std::vector<std::size_t>& idx) {
    DatasetHalf h;
    h.indices = idx;
    h.gram.arch_id = gram.arch_id;
    h.gram.lengthscale = gram.lengthscale;
    h.gram.digest = subset_digest(idx, gram.digest);
    h.gram.entries.resize(static_cast<Eigen::Index>(idx.size()), static_cast<Eigen::Index>(idx.size()));
    for (std::size_t r = 0; r < idx.size(); ++r) {
      h.labels.push_back(labels[idx[r]]);
      for (std::size_t c = 0; c < idx.size(); ++c) h.gram.entries(r, c) = gram.entries(idx[r], idx[c]);
    }
    return h;
  };
  return {make(first), make(second)};
}

void save_kernel(const GramMatrix& gram, const fs::path& path) {
  const std::size_t n = gram.n();
  if (gram.arch_id.size() > 0xffff) throw IoError("architecture id too long for a kernel file");
  std::vector<std::uint8_t> bytes{'C', 'K', 'R', 'N'};
  put_u32(bytes, kKernelFileVersion);
  put_u32(bytes, static_cast<std::uint32_t>(n));
  put_u16(bytes, static_cast<std::uint16_t>(gram.arch_id.size()));
  bytes.insert(bytes.end(), gram.arch_id.begin(), gram.arch_id.end());
  put_f64(bytes, gram.lengthscale);
  put_u64(bytes, gram.digest);
  bytes.reserve(bytes.size() + 8 * n * (n + 1) / 2);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i; j < n; ++j) put_f64(bytes, gram.entries(i, j));

  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw KernelFileError(KernelFileErrorKind::Io, "cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw KernelFileError(KernelFileErrorKind::Io, "failed writing " + path.string());
}

GramMatrix load_kernel(const fs::path& path, std::optional<std::uint64_t> expected_digest) {
  std::vector<std::uint8_t> bytes;
  try {
    bytes = read_file(path);
  } catch (const IoError& e) {
    throw KernelFileError(KernelFileErrorKind::Io, e.what());
  }
  if (bytes.size() < 4) throw KernelFileError(KernelFileErrorKind::Truncated, "kernel file is truncated");
  if (std::memcmp(bytes.data(), "CKRN", 4) != 0)
    throw KernelFileError(KernelFileErrorKind::MagicMismatch, "not a kernel file: " + path.string());
  Reader r(bytes);
  (void)r.text(4);
  const auto version = static_cast<std::uint32_t>(r.uint(4));
  if (version != kKernelFileVersion)
    throw KernelFileError(KernelFileErrorKind::VersionMismatch, "unsupported kernel file version " + std::to_string(version));
  const auto n = static_cast<std::size_t>(r.uint(4));
  const auto id_len = static_cast<std::size_t>(r.uint(2));
  GramMatrix g;
  g.arch_id = r.text(id_len);
  g.lengthscale = r.f64();
  g.digest = r.uint(8);
  if (expected_digest && *expected_digest != g.digest)
    throw KernelFileError(KernelFileErrorKind::DigestMismatch, "kernel file digest does not match the dataset");
  if (r.remaining() < 8 * n * (n + 1) / 2) throw KernelFileError(KernelFileErrorKind::Truncated, "kernel payload is truncated");
  g.entries.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i; j < n; ++j) {
      const double v = r.f64();
      g.entries(i, j) = v;
      g.entries(j, i) = v;
    }
  return g;
}

GramMatrix kernel_store_roundtrip(const GramMatrix& gram, const fs::path& path) {
  save_kernel(gram, path);
  return load_kernel(path);
}

void export_results(const std::vector<SweepRecord>& records, const fs::path& path, bool append) {
  if (records.empty()) throw ParameterError("export_results: nothing to export");
  const bool need_header = !append || !fs::exists(path) || fs::file_size(path) == 0;
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::FILE* f = std::fopen(path.string().c_str(), append ? "a" : "w");
  if (!f) throw IoError("cannot write results to " + path.string());
  if (need_header) std::fprintf(f, "%s\n", kResultsHeader);
  for (const SweepRecord& rec : records) {
    const CVResult& cv = rec.cv;
    for (std::size_t s = 0; s < cv.sigma_grid.size(); ++s) {
      const double se = cv.standard_error(s);
      for (std::size_t fold = 0; fold < cv.folds(); ++fold)
        std::fprintf(f, "%s,%zu,%.17g,%.17g,%zu,%.17g,%.17g,%.17g\n", rec.arch_id.c_str(), rec.n, rec.lengthscale,
                     cv.sigma_grid[s], fold, cv.fold_accuracy[s][fold], cv.mean_accuracy[s], se);
    }
    std::fprintf(f, "%s,%zu,%.17g,%.17g,best,%.17g,%.17g,%.17g\n", rec.arch_id.c_str(), rec.n, rec.lengthscale,
                 cv.best_sigma, cv.best_accuracy, cv.best_accuracy, cv.standard_error(cv.best_index));
  }
  if (std::fclose(f) != 0) throw IoError("failed writing " + path.string());
}

}  // namespace ccgp
