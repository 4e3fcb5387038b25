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
#include <string>
#include <vector>

#include "ccgp/architecture.hpp"
#include "ccgp/weight_cov.hpp"

namespace ccgp {

/// Knobs shared by registry entries.
///
/// `lengthscale` is the swept Matérn lengthscale: 0 means independent
/// weights and infinity means all-ones (pooling). For cnngp-<depth>,
/// myrtle-10 and toy-1d it sets the CollapseOutput covariance; for
/// myrtle-10-corr it sets every 6x6 correlated convolution instead.
struct RegistryOptions {
  std::optional<double> lengthscale;
  int filter_size = 3;  // hidden 3x3 convolutions
};

/// Registered ids: "cnngp-<depth>" (cnngp-14 being the named one),
/// "myrtle-10", "myrtle-10-corr" and "toy-1d". Throws ParameterError for
/// an unknown id.
ArchitectureSpec make_architecture(const std::string& id, const RegistryOptions& options = {});

std::vector<std::string> registered_architectures();

/// Whether the lengthscale only changes the CollapseOutput covariance, so a
/// sweep can share every earlier layer.
bool lengthscale_is_output_only(const std::string& id);

/// Lengthscale used when none is given.
double default_lengthscale(const std::string& id);

/// Covariance over `patch` for a swept lengthscale (see RegistryOptions).
WeightCovariance lengthscale_covariance(double lengthscale, const Dims& patch);

/// Replaces the covariance of the Conv or CollapseOutput layer at
/// `layer_index`. Throws ContractError for other layers or a size mismatch.
void override_layer_covariance(ArchitectureSpec& arch, std::size_t layer_index, const WeightCovariance& cov);

}  // namespace ccgp
