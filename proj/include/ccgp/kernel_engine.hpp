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
#include <span>
#include <vector>

#include "ccgp/architecture.hpp"
#include "ccgp/conv_geometry.hpp"
#include "ccgp/image.hpp"
#include "ccgp/moment_tensor.hpp"
#include "ccgp/weight_cov.hpp"

namespace ccgp {

/// Second moments of one input pair (X, X') at one pipeline stage: the cross
/// tensor Sigma(X, X') and the self tensors Sigma(X, X), Sigma(X', X'). Self
/// tensors are either Full or a Band holding only the zero offset.
struct SecondMomentPair {
  MomentTensor cross;
  MomentTensor self_x;
  MomentTensor self_x2;

  const Dims& extent() const { return cross.extent(); }
  Representation representation() const { return cross.representation(); }
};

/// How the arccos argument of the ReLU moment is formed. Standard uses
/// c / sqrt(ab); SquaredRatio uses c^2 / (ab) and exists only so the two can
/// be compared against Monte-Carlo estimates.
enum class ReluVariant { Standard, SquaredRatio };

/// E[phi(u) phi(v)] for balanced ReLU and (u, v) ~ N(0, [[a, c], [c, b]]):
///   (1/pi) sqrt(max(ab - c^2, 0)) + (1 - theta/pi) c,  theta = arccos(c / sqrt(ab)).
/// Returns 0 when a or b is zero; the correlation is clamped to [-1, 1].
double relu_expectation(double a, double b, double c, ReluVariant variant = ReluVariant::Standard);

/// cross[q, q'] = (1/C) sum_c x[c, q] x2[c, q']; self tensors likewise. All Full.
SecondMomentPair input_moment(const Image& x, const Image& x2);

/// Full-representation convolution of the second moments:
///   out[q, q'] = sum_{p, p'} cov[p, p'] in[f_q(p), f_q'(p')],
/// padding reads contributing zero. Band self tensors are accepted only for
/// diagonal covariances.
SecondMomentPair conv_propagate(const SecondMomentPair& v, const WeightCovariance& cov, const ConvGeometry& geom);

/// Independent-weight convolution on offset bands: for every needed output
/// offset d, out[q, q - d] = sum_p cov[p, p] in[f_q(p), f_{q-d}(p)], which
/// reads input offset s * d only.
SecondMomentPair conv_propagate_diag(const SecondMomentPair& v, const WeightCovariance& cov,
                                     const ConvGeometry& geom, const std::vector<Dims>& needed);

/// Elementwise balanced-ReLU moment.
SecondMomentPair relu_moment(const SecondMomentPair& sigma, ReluVariant variant = ReluVariant::Standard);

/// out[Q, Q'] = |w|^-2 sum over the windows of Q and Q'. Full tensors only.
SecondMomentPair meanpool_propagate(const SecondMomentPair& v, const Dims& window);

/// Representation required for the tensor entering a layer.
struct StagePlan {
  Representation representation = Representation::Full;
  std::vector<Dims> offsets;  // Band only, sorted
};

/// Input offsets an independent-weight convolution reads to produce the given
/// output offsets: {s * d}, restricted to offsets representable in the input.
std::vector<Dims> required_input_offsets(const ConvGeometry& geom, const std::vector<Dims>& output_offsets);

/// Backward pass from the scalar output: entry k describes the tensor entering
/// layer k, the last entry the output. Correlated convolutions and pooling
/// force Full upstream; a band wider than the extent itself is promoted to Full.
std::vector<StagePlan> plan_offsets(const ArchitectureSpec& arch);

// Tensor-level kernels used by the pipeline.

MomentTensor input_moment_tensor(const Image& x, const Image& x2, const StagePlan& plan);
MomentTensor conv_tensor(const MomentTensor& in, const WeightCovariance& cov, const ConvGeometry& geom,
                         const StagePlan& out_plan);
MomentTensor relu_tensor(const MomentTensor& cross, std::span<const double> diag_x, std::span<const double> diag_x2,
                         ReluVariant variant = ReluVariant::Standard);
MomentTensor meanpool_tensor(const MomentTensor& in, const Dims& window);

struct PipelineOptions {
  ReluVariant relu = ReluVariant::Standard;
  /// Propagate Full tensors everywhere, ignoring the offset plan.
  bool force_full = false;
};

/// Instrumentation of one propagation.
struct PropagationStats {
  std::size_t peak_tensor_entries = 0;
  std::size_t tensors_allocated = 0;
};

/// Per-input record of a self propagation: the diagonal of Sigma(X, X)
/// entering every ReLU, and the output values K(X, X).
struct SelfTrace {
  std::vector<std::vector<double>> relu_diagonals;
  std::vector<double> outputs;
};

/// Propagates second moments through an architecture. Optionally replaces
/// the CollapseOutput covariance by several alternatives that share the
/// whole prefix, so one pass yields one kernel value per alternative.
class KernelPipeline {
 public:
  explicit KernelPipeline(ArchitectureSpec arch, PipelineOptions options = {});
  KernelPipeline(ArchitectureSpec arch, std::vector<WeightCovariance> output_covs, PipelineOptions options = {});

  const ArchitectureSpec& architecture() const { return arch_; }
  const std::vector<StagePlan>& plan() const { return plan_; }
  std::size_t output_count() const { return output_covs_.size(); }

  SelfTrace self_trace(const Image& x, PropagationStats* stats = nullptr) const;

  /// Kernel values for (x, x2), using the self traces of both inputs.
  std::vector<double> cross(const Image& x, const Image& x2, const SelfTrace& tx, const SelfTrace& tx2,
                            PropagationStats* stats = nullptr) const;

  /// Kernel value for (x, x2) under the first output covariance.
  double kernel(const Image& x, const Image& x2) const;

 private:
  std::vector<double> run(const Image& x, const Image& x2, const SelfTrace* tx, const SelfTrace* tx2,
                          SelfTrace* record, PropagationStats* stats) const;

  ArchitectureSpec arch_;
  std::vector<WeightCovariance> output_covs_;
  PipelineOptions options_;
  std::vector<StagePlan> plan_;
};

}  // namespace ccgp
