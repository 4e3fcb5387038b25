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

#include "ccgp/gram.hpp"

#include <algorithm>
#include <atomic>
#include <exception>
#include <mutex>
#include <string>
#include <thread>

#include "ccgp/errors.hpp"

namespace ccgp {

namespace {

// Runs body(i) for i in [0, n) on up to `threads` workers; the first
// exception is rethrown on the calling thread.
template <class Body>
void parallel_rows(std::size_t n, unsigned threads, Body body) {
  threads = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(std::max<std::size_t>(n, 1))));
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto worker = [&] {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= n) return;
      try {
        body(i);
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
        next = n;
        return;
      }
    }
  };
  if (threads == 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (unsigned t = 0; t < threads; ++t) pool.emplace_back(worker);
  }
  if (failure) std::rethrow_exception(failure);
}

[[noreturn]] void rethrow_with_pair(std::size_t i, std::size_t j) {
  try {
    throw;
  } catch (const std::exception& e) {
    throw Error("kernel pair (" + std::to_string(i) + ", " + std::to_string(j) + "): " + e.what());
  }
}

}  // namespace

std::vector<GramMatrix> gram_matrix_sweep(std::span<const Image> inputs, const ArchitectureSpec& arch,
                                          const std::vector<WeightCovariance>& output_covs,
                                          const GramOptions& options) {
  const KernelPipeline pipeline(arch, output_covs, options.pipeline);
  const std::size_t n = inputs.size();
  const std::size_t outs = pipeline.output_count();
  for (const Image& x : inputs)
    if (x.extent != inputs.front().extent || x.channels != inputs.front().channels)
      throw ContractError("gram_matrix: inputs have heterogeneous shapes");

  std::vector<SelfTrace> traces(n);
  parallel_rows(n, options.threads, [&](std::size_t i) {
    try {
      traces[i] = pipeline.self_trace(inputs[i]);
    } catch (...) {
      rethrow_with_pair(i, i);
    }
  });

  std::vector<GramMatrix> grams(outs);
  for (GramMatrix& g : grams) {
    g.entries = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
    g.arch_id = arch.id;
  }
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t o = 0; o < outs; ++o) grams[o].entries(i, i) = traces[i].outputs[o];

  parallel_rows(n, options.threads, [&](std::size_t i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      std::vector<double> values;
      try {
        values = pipeline.cross(inputs[i], inputs[j], traces[i], traces[j]);
      } catch (...) {
        rethrow_with_pair(i, j);
      }
      for (std::size_t o = 0; o < outs; ++o) {
        grams[o].entries(i, j) = values[o];
        grams[o].entries(j, i) = values[o];
      }
    }
  });
  return grams;
}

GramMatrix gram_matrix(std::span<const Image> inputs, const ArchitectureSpec& arch, const GramOptions& options) {
  return std::move(gram_matrix_sweep(inputs, arch, {}, options).front());
}

double min_eigenvalue(const Eigen::MatrixXd& m) {
  if (m.size() == 0) return 0.0;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(m, Eigen::EigenvaluesOnly);
  return eig.eigenvalues().minCoeff();
}

bool satisfies_gram_invariants(const Eigen::MatrixXd& m) {
  if (m.rows() != m.cols()) return false;
  if (m != m.transpose()) return false;
  const double n = static_cast<double>(m.rows());
  return min_eigenvalue(m) >= -kGramPsdTolerance * std::abs(m.trace()) / n;
}

}  // namespace ccgp
