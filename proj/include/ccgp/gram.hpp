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
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "ccgp/architecture.hpp"
#include "ccgp/image.hpp"
#include "ccgp/kernel_engine.hpp"

namespace ccgp {

/// Symmetric N x N kernel matrix with the metadata needed to persist it.
struct GramMatrix {
  Eigen::MatrixXd entries;
  std::string arch_id;
  std::uint64_t digest = 0;
  double lengthscale = 0.0;

  std::size_t n() const { return static_cast<std::size_t>(entries.rows()); }
};

struct GramOptions {
  unsigned threads = 1;
  PipelineOptions pipeline;
};

/// K[i, j] for every pair of inputs. Self traces are computed once per input;
/// only i <= j is propagated and mirrored. Work is split by rows across
/// `threads` workers, each entry depending only on its own pair, so the
/// result does not depend on the thread count.
GramMatrix gram_matrix(std::span<const Image> inputs, const ArchitectureSpec& arch, const GramOptions& options = {});

/// One Gram matrix per output covariance, sharing the propagation of every
/// layer before CollapseOutput.
std::vector<GramMatrix> gram_matrix_sweep(std::span<const Image> inputs, const ArchitectureSpec& arch,
                                          const std::vector<WeightCovariance>& output_covs,
                                          const GramOptions& options = {});

/// Smallest eigenvalue of a symmetric matrix.
double min_eigenvalue(const Eigen::MatrixXd& m);

/// PSD slack: min eigenvalue >= -kGramPsdTolerance * trace / n.
inline constexpr double kGramPsdTolerance = 1e-8;

/// Exact symmetry and the PSD slack above.
bool satisfies_gram_invariants(const Eigen::MatrixXd& m);

}  // namespace ccgp
