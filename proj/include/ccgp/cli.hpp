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
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace ccgp {

enum class Command { Kernel, Sweep, McVerify, Predict };

enum ExitCode : int { kExitOk = 0, kExitConfig = 1, kExitIo = 2, kExitVerification = 3 };

/// Everything one invocation needs. Command-line flags and the flat
/// key = value config file fill the same fields; flags win.
struct ExperimentConfig {
  Command command = Command::Kernel;
  std::string arch = "cnngp-14";
  int filter_size = 3;
  std::filesystem::path data;
  std::optional<std::size_t> n;          // 40 for data commands, 3 for mc-verify
  std::uint64_t seed = 0;
  std::vector<double> lengthscales;      // empty: the architecture's default
  std::vector<double> sigma_grid;        // relative to trace(K)/n; empty: 21 values in [1e-6, 1e2]
  std::size_t folds = 4;
  int channels = 256;
  std::size_t samples = 100000;
  unsigned threads = 1;
  std::filesystem::path out;
  std::filesystem::path cache_dir = "ccgp-cache";
  std::filesystem::path kernel;          // predict: explicit kernel file
  bool prefix_reuse = true;

  std::size_t size() const { return n.value_or(command == Command::McVerify ? 3 : 40); }
  /// Throws ParameterError for inconsistent values or missing input files.
  void validate() const;
};

/// Cache location of the kernel for one lengthscale.
std::filesystem::path kernel_cache_path(const ExperimentConfig& cfg, double lengthscale);

/// Runs a validated config. Progress and tables go to `out`, diagnostics to
/// `err`; errors are mapped to exit codes.
int run_experiment(const ExperimentConfig& cfg, std::ostream& out, std::ostream& err);

/// Parses the command line (and optional --config file) and runs it.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace ccgp
