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

#include "ccgp/kernel_engine.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "ccgp/errors.hpp"

namespace ccgp {

namespace {

template <class... Fs>
struct overloaded : Fs... {
  using Fs::operator()...;
};
template <class... Fs>
overloaded(Fs...) -> overloaded<Fs...>;

Dims zero_offset(std::size_t rank) { return Dims(rank, 0); }

// Patch table transposed to [p][q] so the inner loops over q are contiguous.
std::vector<long> transposed_table(const PatchTable& tab) {
  std::vector<long> t(tab.outputs() * tab.patch_volume());
  for (std::size_t q = 0; q < tab.outputs(); ++q)
    for (std::size_t p = 0; p < tab.patch_volume(); ++p) t[p * tab.outputs() + q] = tab(q, p);
  return t;
}

void require_extent(const MomentTensor& t, const Dims& extent, const char* what) {
  if (t.extent() != extent) throw ContractError(std::string(what) + ": tensor extent does not match the layer input");
}

MomentTensor conv_full_diagonal(const MomentTensor& in, const WeightCovariance& cov, const PatchTable& tab) {
  const std::size_t nq = tab.outputs();
  const std::size_t np = tab.patch_volume();
  const std::vector<long> tt = transposed_table(tab);
  MomentTensor out = MomentTensor::full(tab.output_extent());
  for (std::size_t q = 0; q < nq; ++q) {
    double* dst = out.row(q);
    for (std::size_t p = 0; p < np; ++p) {
      const long i = tab(q, p);
      const double w = cov(p, p);
      if (i < 0 || w == 0.0) continue;
      const double* src = in.row(static_cast<std::size_t>(i));
      const long* cols = tt.data() + p * nq;
      for (std::size_t q2 = 0; q2 < nq; ++q2) {
        const long j = cols[q2];
        if (j >= 0) dst[q2] += w * src[j];
      }
    }
  }
  return out;
}

MomentTensor conv_full_correlated(const MomentTensor& in, const WeightCovariance& cov, const PatchTable& tab) {
  const std::size_t nq = tab.outputs();
  const std::size_t np = tab.patch_volume();
  const std::vector<long> tt = transposed_table(tab);
  const Eigen::MatrixXd& c = cov.matrix();
  MomentTensor out = MomentTensor::full(tab.output_extent());
  for (std::size_t q = 0; q < nq; ++q) {
    double* dst = out.row(q);
    for (std::size_t p = 0; p < np; ++p) {
      const long i = tab(q, p);
      if (i < 0) continue;
      const double* src = in.row(static_cast<std::size_t>(i));
      for (std::size_t p2 = 0; p2 < np; ++p2) {
        const double w = c(static_cast<Eigen::Index>(p), static_cast<Eigen::Index>(p2));
        if (w == 0.0) continue;
        const long* cols = tt.data() + p2 * nq;
        for (std::size_t q2 = 0; q2 < nq; ++q2) {
          const long j = cols[q2];
          if (j >= 0) dst[q2] += w * src[j];
        }
      }
    }
  }
  return out;
}

MomentTensor conv_band(const MomentTensor& in, const WeightCovariance& cov, const ConvGeometry& geom,
                       const PatchTable& tab, const std::vector<Dims>& needed) {
  const std::size_t np = tab.patch_volume();
  MomentTensor out = MomentTensor::band(tab.output_extent(), needed);
  const std::vector<Dims>& offsets = out.offsets();
  const std::vector<Dims> in_offsets = [&] {
    std::vector<Dims> r;
    r.reserve(offsets.size());
    for (const Dims& d : offsets) {
      Dims s(d.size());
      for (std::size_t k = 0; k < d.size(); ++k) s[k] = geom.stride * d[k];
      r.push_back(std::move(s));
    }
    return r;
  }();

  for (std::size_t o = 0; o < offsets.size(); ++o) {
    if (!offset_representable(in_offsets[o], in.extent())) continue;  // every read is padding
    const double* slab = nullptr;
    if (!in.is_full()) {
      const auto io = in.find_offset(in_offsets[o]);
      if (!io) throw ContractError("conv_propagate_diag: input band lacks a required offset");
      slab = in.row(*io);
    }
    double* dst = out.row(o);
    for (std::size_t q = 0; q < out.positions(); ++q) {
      const long q2 = out.partner(q, offsets[o]);
      if (q2 < 0) continue;
      const long* r1 = tab.row(q);
      const long* r2 = tab.row(static_cast<std::size_t>(q2));
      double acc = 0.0;
      for (std::size_t p = 0; p < np; ++p) {
        const long i = r1[p];
        const long j = r2[p];
        if (i < 0 || j < 0) continue;
        const double v = slab ? slab[i] : in.at(static_cast<std::size_t>(i), static_cast<std::size_t>(j));
        acc += cov(p, p) * v;
      }
      dst[q] = acc;
    }
  }
  return out;
}

StagePlan zero_band(std::size_t rank) { return StagePlan{Representation::Band, {zero_offset(rank)}}; }

// Self tensors are Full or a zero-offset band; anything else is a contract violation.
MomentTensor propagate_self(const MomentTensor& self, const WeightCovariance& cov, const ConvGeometry& geom) {
  if (self.is_full()) return conv_tensor(self, cov, geom, StagePlan{Representation::Full, {}});
  if (!cov.is_diagonal())
    throw ContractError("correlated convolution needs Full self moments, not diagonals");
  return conv_tensor(self, cov, geom, zero_band(self.extent().size()));
}

MomentTensor relu_self(const MomentTensor& self, ReluVariant variant) {
  const std::vector<double> d = self.diagonal();
  return relu_tensor(self, d, d, variant);
}

}  // namespace

// ---------------------------------------------------------------------------
// Architecture

std::vector<Dims> ArchitectureSpec::stage_extents() const {
  std::vector<Dims> extents{input_extent};
  for (std::size_t k = 0; k < layers.size(); ++k) {
    const Dims& cur = extents.back();
    Dims next = std::visit(
        overloaded{
            [&](const ConvLayer& l) -> Dims {
              if (l.geom.input_extent != cur)
                throw ContractError("layer " + std::to_string(k) + ": convolution input extent does not chain");
              l.geom.validate();
              if (l.cov.patch_size() != l.geom.patch_size)
                throw ContractError("layer " + std::to_string(k) + ": covariance and patch sizes differ");
              return output_extent(l.geom);
            },
            [&](const ReluLayer&) -> Dims { return cur; },
            [&](const MeanPoolLayer& l) -> Dims {
              if (l.window.size() != cur.size())
                throw ContractError("layer " + std::to_string(k) + ": pooling window rank mismatch");
              Dims out(cur.size());
              for (std::size_t d = 0; d < cur.size(); ++d) {
                if (l.window[d] < 1 || cur[d] % l.window[d] != 0)
                  throw ContractError("layer " + std::to_string(k) + ": pooling window does not divide the extent");
                out[d] = cur[d] / l.window[d];
              }
              return out;
            },
            [&](const CollapseOutputLayer& l) -> Dims {
              if (l.cov.patch_size() != cur)
                throw ContractError("layer " + std::to_string(k) +
                                    ": output covariance must span the full incoming extent");
              return Dims(cur.size(), 1);
            },
        },
        layers[k]);
    extents.push_back(std::move(next));
  }
  return extents;
}

void ArchitectureSpec::validate() const {
  if (input_extent.empty()) throw ContractError("architecture has no input extent");
  for (int e : input_extent)
    if (e < 1) throw ContractError("architecture input extent must be positive");
  if (layers.empty() || !std::holds_alternative<CollapseOutputLayer>(layers.back()))
    throw ContractError("architecture must end with a CollapseOutput layer");
  for (std::size_t k = 0; k + 1 < layers.size(); ++k)
    if (std::holds_alternative<CollapseOutputLayer>(layers[k]))
      throw ContractError("CollapseOutput may only appear as the last layer");
  (void)stage_extents();
}

// ---------------------------------------------------------------------------
// Elementwise moments

double relu_expectation(double a, double b, double c, ReluVariant variant) {
  if (a <= 0.0 || b <= 0.0) return 0.0;
  const double ab = a * b;
  double rho = variant == ReluVariant::Standard ? c / std::sqrt(ab) : (c * c) / ab;
  rho = std::clamp(rho, -1.0, 1.0);
  const double theta = std::acos(rho);
  return std::sqrt(std::max(ab - c * c, 0.0)) / std::numbers::pi + (1.0 - theta / std::numbers::pi) * c;
}

MomentTensor relu_tensor(const MomentTensor& cross, std::span<const double> diag_x, std::span<const double> diag_x2,
                         ReluVariant variant) {
  const std::size_t n = cross.positions();
  if (diag_x.size() != n || diag_x2.size() != n) throw ContractError("relu: diagonal length does not match extent");
  MomentTensor out = cross;
  if (cross.is_full()) {
    for (std::size_t q = 0; q < n; ++q) {
      double* row = out.row(q);
      const double a = diag_x[q];
      for (std::size_t q2 = 0; q2 < n; ++q2) row[q2] = relu_expectation(a, diag_x2[q2], row[q2], variant);
    }
    return out;
  }
  for (std::size_t o = 0; o < cross.offsets().size(); ++o) {
    double* slab = out.row(o);
    for (std::size_t q = 0; q < n; ++q) {
      const long q2 = cross.partner(q, cross.offsets()[o]);
      if (q2 < 0) continue;
      slab[q] = relu_expectation(diag_x[q], diag_x2[static_cast<std::size_t>(q2)], slab[q], variant);
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Tensor-level propagation

MomentTensor input_moment_tensor(const Image& x, const Image& x2, const StagePlan& plan) {
  if (x.channels != x2.channels || x.extent != x2.extent)
    throw ContractError("input_moment: inputs differ in channel count or extent");
  if (x.channels < 1) throw ContractError("input_moment: inputs have no channels");
  const std::size_t n = x.positions();
  const double inv_c = 1.0 / x.channels;

  if (plan.representation == Representation::Full) {
    MomentTensor out = MomentTensor::full(x.extent);
    for (int c = 0; c < x.channels; ++c) {
      const double* a = x.values.data() + c * n;
      const double* b = x2.values.data() + c * n;
      for (std::size_t q = 0; q < n; ++q) {
        double* row = out.row(q);
        const double aq = a[q];
        for (std::size_t q2 = 0; q2 < n; ++q2) row[q2] += aq * b[q2];
      }
    }
    for (double& v : out.data()) v *= inv_c;
    return out;
  }

  MomentTensor out = MomentTensor::band(x.extent, plan.offsets);
  for (std::size_t o = 0; o < out.offsets().size(); ++o) {
    double* slab = out.row(o);
    for (std::size_t q = 0; q < n; ++q) {
      const long q2 = out.partner(q, out.offsets()[o]);
      if (q2 < 0) continue;
      double acc = 0.0;
      for (int c = 0; c < x.channels; ++c) acc += x(c, q) * x2(c, static_cast<std::size_t>(q2));
      slab[q] = acc * inv_c;
    }
  }
  return out;
}

MomentTensor conv_tensor(const MomentTensor& in, const WeightCovariance& cov, const ConvGeometry& geom,
                         const StagePlan& out_plan) {
  require_extent(in, geom.input_extent, "conv");
  if (cov.patch_size() != geom.patch_size) throw ContractError("conv: covariance and patch sizes differ");
  const PatchTable tab(geom);
  if (out_plan.representation == Representation::Full) {
    if (!in.is_full()) throw ContractError("conv: a Full output needs a Full input");
    return cov.is_diagonal() ? conv_full_diagonal(in, cov, tab) : conv_full_correlated(in, cov, tab);
  }
  if (!cov.is_diagonal()) {
    // Correlated weights couple every offset: go through the Full result.
    if (!in.is_full()) throw ContractError("conv: correlated weights need a Full input");
    return to_band(conv_full_correlated(in, cov, tab), out_plan.offsets);
  }
  return conv_band(in, cov, geom, tab, out_plan.offsets);
}

MomentTensor meanpool_tensor(const MomentTensor& in, const Dims& window) {
  if (!in.is_full()) throw ContractError("meanpool: Full tensor required");
  const Dims& extent = in.extent();
  if (window.size() != extent.size()) throw ContractError("meanpool: window rank mismatch");
  Dims out_extent(extent.size());
  for (std::size_t d = 0; d < extent.size(); ++d) {
    if (window[d] < 1 || extent[d] % window[d] != 0)
      throw ContractError("meanpool: window does not divide the extent");
    out_extent[d] = extent[d] / window[d];
  }
  const std::size_t n = in.positions();
  std::vector<std::size_t> target(n);
  for (std::size_t q = 0; q < n; ++q) {
    Dims c = unflatten(q, extent);
    for (std::size_t d = 0; d < c.size(); ++d) c[d] /= window[d];
    target[q] = flatten(c, out_extent);
  }
  MomentTensor out = MomentTensor::full(out_extent);
  for (std::size_t q = 0; q < n; ++q) {
    const double* src = in.row(q);
    double* dst = out.row(target[q]);
    for (std::size_t q2 = 0; q2 < n; ++q2) dst[target[q2]] += src[q2];
  }
  const double w = static_cast<double>(volume(window));
  for (double& v : out.data()) v /= w * w;
  return out;
}

// ---------------------------------------------------------------------------
// Pair-level operations

SecondMomentPair input_moment(const Image& x, const Image& x2) {
  const StagePlan full{Representation::Full, {}};
  return SecondMomentPair{input_moment_tensor(x, x2, full), input_moment_tensor(x, x, full),
                          input_moment_tensor(x2, x2, full)};
}

SecondMomentPair conv_propagate(const SecondMomentPair& v, const WeightCovariance& cov, const ConvGeometry& geom) {
  if (!v.cross.is_full()) throw ContractError("conv_propagate: Full cross tensor required");
  return SecondMomentPair{conv_tensor(v.cross, cov, geom, StagePlan{Representation::Full, {}}),
                          propagate_self(v.self_x, cov, geom), propagate_self(v.self_x2, cov, geom)};
}

SecondMomentPair conv_propagate_diag(const SecondMomentPair& v, const WeightCovariance& cov,
                                     const ConvGeometry& geom, const std::vector<Dims>& needed) {
  if (!cov.is_diagonal()) throw ContractError("conv_propagate_diag: weight covariance is not diagonal");
  if (v.cross.is_full()) throw ContractError("conv_propagate_diag: band cross tensor required");
  const StagePlan diag = zero_band(geom.input_extent.size());
  auto self = [&](const MomentTensor& t) {
    return conv_tensor(t.is_full() ? to_band(t, diag.offsets) : t, cov, geom, diag);
  };
  return SecondMomentPair{conv_tensor(v.cross, cov, geom, StagePlan{Representation::Band, needed}),
                          self(v.self_x), self(v.self_x2)};
}

SecondMomentPair relu_moment(const SecondMomentPair& sigma, ReluVariant variant) {
  const std::vector<double> dx = sigma.self_x.diagonal();
  const std::vector<double> dx2 = sigma.self_x2.diagonal();
  return SecondMomentPair{relu_tensor(sigma.cross, dx, dx2, variant), relu_self(sigma.self_x, variant),
                          relu_self(sigma.self_x2, variant)};
}

SecondMomentPair meanpool_propagate(const SecondMomentPair& v, const Dims& window) {
  return SecondMomentPair{meanpool_tensor(v.cross, window), meanpool_tensor(v.self_x, window),
                          meanpool_tensor(v.self_x2, window)};
}

// ---------------------------------------------------------------------------
// Planning

std::vector<Dims> required_input_offsets(const ConvGeometry& geom, const std::vector<Dims>& output_offsets) {
  std::vector<Dims> r;
  for (const Dims& d : output_offsets) {
    Dims s(d.size());
    for (std::size_t k = 0; k < d.size(); ++k) s[k] = geom.stride * d[k];
    if (offset_representable(s, geom.input_extent)) r.push_back(std::move(s));
  }
  std::sort(r.begin(), r.end());
  r.erase(std::unique(r.begin(), r.end()), r.end());
  return r;
}

namespace {

std::vector<StagePlan> plan_with(const ArchitectureSpec& arch, bool output_diagonal, bool force_full) {
  const std::vector<Dims> extents = arch.stage_extents();
  const std::size_t L = arch.layers.size();
  const std::size_t rank = arch.input_extent.size();
  std::vector<StagePlan> plan(L + 1);
  if (force_full) return plan;

  plan[L] = zero_band(rank);
  for (std::size_t k = L; k-- > 0;) {
    const StagePlan& next = plan[k + 1];
    StagePlan cur = std::visit(
        overloaded{
            [&](const ConvLayer& l) -> StagePlan {
              if (!l.cov.is_diagonal() || next.representation == Representation::Full) return StagePlan{};
              return StagePlan{Representation::Band, required_input_offsets(l.geom, next.offsets)};
            },
            [&](const ReluLayer&) -> StagePlan { return next; },
            [&](const MeanPoolLayer&) -> StagePlan { return StagePlan{}; },
            [&](const CollapseOutputLayer&) -> StagePlan {
              if (!output_diagonal) return StagePlan{};
              return zero_band(rank);
            },
        },
        arch.layers[k]);
    if (cur.representation == Representation::Band) {
      // ReLU inputs need the zero offset for the self diagonals.
      const Dims z = zero_offset(rank);
      if (!std::binary_search(cur.offsets.begin(), cur.offsets.end(), z)) {
        cur.offsets.push_back(z);
        std::sort(cur.offsets.begin(), cur.offsets.end());
      }
      if (cur.offsets.size() > volume(extents[k])) cur = StagePlan{};
    }
    plan[k] = std::move(cur);
  }
  return plan;
}

}  // namespace

std::vector<StagePlan> plan_offsets(const ArchitectureSpec& arch) {
  arch.validate();
  const auto& out = std::get<CollapseOutputLayer>(arch.layers.back());
  return plan_with(arch, out.cov.is_diagonal(), false);
}

// ---------------------------------------------------------------------------
// Pipeline

KernelPipeline::KernelPipeline(ArchitectureSpec arch, PipelineOptions options)
    : KernelPipeline(std::move(arch), {}, options) {}

KernelPipeline::KernelPipeline(ArchitectureSpec arch, std::vector<WeightCovariance> output_covs,
                               PipelineOptions options)
    : arch_(std::move(arch)), output_covs_(std::move(output_covs)), options_(options) {
  arch_.validate();
  const auto& out = std::get<CollapseOutputLayer>(arch_.layers.back());
  if (output_covs_.empty()) output_covs_.push_back(out.cov);
  const Dims last = arch_.stage_extents()[arch_.layers.size() - 1];
  bool diagonal = true;
  for (const WeightCovariance& c : output_covs_) {
    if (c.patch_size() != last) throw ContractError("output covariance must span the full incoming extent");
    diagonal = diagonal && c.is_diagonal();
  }
  plan_ = plan_with(arch_, diagonal, options_.force_full);
}

std::vector<double> KernelPipeline::run(const Image& x, const Image& x2, const SelfTrace* tx, const SelfTrace* tx2,
                                        SelfTrace* record, PropagationStats* stats) const {
  if (x.extent != arch_.input_extent) throw ContractError("input extent does not match the architecture");
  auto note = [&](const MomentTensor& t) {
    if (!stats) return;
    stats->tensors_allocated += 1;
    stats->peak_tensor_entries = std::max(stats->peak_tensor_entries, t.entries());
  };
  auto conform = [&](MomentTensor t, const StagePlan& want) {
    if (want.representation == Representation::Band && t.is_full()) t = to_band(t, want.offsets);
    return t;
  };

  MomentTensor cur = input_moment_tensor(x, x2, plan_[0]);
  note(cur);
  std::size_t relu_index = 0;
  std::vector<double> outputs;
  for (std::size_t k = 0; k < arch_.layers.size(); ++k) {
    const StagePlan& next = plan_[k + 1];
    const Layer& layer = arch_.layers[k];
    if (const auto* conv = std::get_if<ConvLayer>(&layer)) {
      cur = conv_tensor(cur, conv->cov, conv->geom, next);
    } else if (std::holds_alternative<ReluLayer>(layer)) {
      if (record) {
        record->relu_diagonals.push_back(cur.diagonal());
        const std::vector<double>& d = record->relu_diagonals.back();
        cur = relu_tensor(cur, d, d, options_.relu);
      } else {
        if (relu_index >= tx->relu_diagonals.size() || relu_index >= tx2->relu_diagonals.size())
          throw ContractError("self trace does not match the architecture");
        cur = relu_tensor(cur, tx->relu_diagonals[relu_index], tx2->relu_diagonals[relu_index], options_.relu);
      }
      ++relu_index;
    } else if (const auto* pool = std::get_if<MeanPoolLayer>(&layer)) {
      cur = conform(meanpool_tensor(cur, pool->window), next);
    } else {
      const ConvGeometry geom = collapse_geometry(cur.extent());
      for (const WeightCovariance& c : output_covs_) {
        const MomentTensor o = conv_tensor(cur, c, geom, c.is_diagonal() ? next : StagePlan{});
        note(o);
        outputs.push_back(o.data()[0]);
      }
      continue;
    }
    note(cur);
  }
  if (record) record->outputs = outputs;
  return outputs;
}

SelfTrace KernelPipeline::self_trace(const Image& x, PropagationStats* stats) const {
  SelfTrace trace;
  run(x, x, nullptr, nullptr, &trace, stats);
  return trace;
}

std::vector<double> KernelPipeline::cross(const Image& x, const Image& x2, const SelfTrace& tx, const SelfTrace& tx2,
                                          PropagationStats* stats) const {
  return run(x, x2, &tx, &tx2, nullptr, stats);
}

double KernelPipeline::kernel(const Image& x, const Image& x2) const {
  const SelfTrace tx = self_trace(x);
  const SelfTrace tx2 = self_trace(x2);
  return cross(x, x2, tx, tx2).front();
}

}  // namespace ccgp
