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

#include "ccgp/cli.hpp"

#include <bit>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <random>
#include <sstream>

#include <CLI11.hpp>

#include "ccgp/data_io.hpp"
#include "ccgp/errors.hpp"
#include "ccgp/gp_predict.hpp"
#include "ccgp/gram.hpp"
#include "ccgp/mc_oracle.hpp"
#include "ccgp/registry.hpp"

namespace ccgp {

namespace fs = std::filesystem;

namespace {

std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

bool data_command(Command c) { return c == Command::Kernel || c == Command::Sweep; }

std::vector<double> lengthscale_grid(const ExperimentConfig& cfg) {
  if (!cfg.lengthscales.empty()) return cfg.lengthscales;
  return {default_lengthscale(cfg.arch)};
}

fs::path labels_path(const fs::path& kernel_file) {
  fs::path p = kernel_file;
  p += ".labels";
  return p;
}

void save_labels(const std::vector<int>& labels, const fs::path& path) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw IoError("cannot write " + path.string());
  for (int l : labels) f << l << '\n';
  if (!f) throw IoError("failed writing " + path.string());
}

std::vector<int> load_labels(const fs::path& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot read labels " + path.string());
  std::vector<int> labels;
  int l = 0;
  while (f >> l) labels.push_back(l);
  if (!f.eof()) throw IoError("malformed labels file " + path.string());
  return labels;
}

std::vector<double> noise_grid(const ExperimentConfig& cfg, const GramMatrix& gram) {
  if (cfg.sigma_grid.empty()) return default_sigma_grid(gram.entries);
  const double scale = std::abs(gram.entries.trace()) / static_cast<double>(gram.n());
  std::vector<double> grid;
  for (double s : cfg.sigma_grid) grid.push_back(s * scale);
  return grid;
}

CVOptions cv_options(const ExperimentConfig& cfg) {
  CVOptions o;
  o.folds = cfg.folds;
  o.k_classes = kCifarClasses;
  o.seed = cfg.seed;
  return o;
}

/// Cached kernel if one matches (digest, architecture and lengthscale), else
/// nothing. Corrupt or stale files are reported and recomputed.
std::optional<GramMatrix> try_cached(const fs::path& path, const ImageDataset& data, const std::string& arch,
                                     double lengthscale, std::ostream& err) {
  if (!fs::exists(path)) return std::nullopt;
  try {
    GramMatrix g = load_kernel(path, data.digest);
    if (g.arch_id == arch && std::bit_cast<std::uint64_t>(g.lengthscale) == std::bit_cast<std::uint64_t>(lengthscale) &&
        g.n() == data.n())
      return g;
    err << "stale kernel cache " << path << ", recomputing\n";
  } catch (const KernelFileError& e) {
    err << "ignoring kernel cache " << path << ": " << e.what() << '\n';
  }
  return std::nullopt;
}

/// Kernels for every lengthscale of the grid, loaded from the cache when
/// possible. Missing ones are computed, sharing the prefix when only the
/// output layer depends on the lengthscale, and written back.
std::vector<GramMatrix> obtain_kernels(const ExperimentConfig& cfg, const ImageDataset& data, std::ostream& out,
                                       std::ostream& err) {
  const std::vector<double> grid = lengthscale_grid(cfg);
  std::vector<std::optional<GramMatrix>> kernels(grid.size());
  std::vector<std::size_t> missing;
  for (std::size_t i = 0; i < grid.size(); ++i) {
    kernels[i] = try_cached(kernel_cache_path(cfg, grid[i]), data, cfg.arch, grid[i], err);
    if (kernels[i]) {
      out << "loaded cached kernel lengthscale=" << format_double(grid[i]) << '\n';
    } else {
      missing.push_back(i);
    }
  }

  GramOptions gopt;
  gopt.threads = cfg.threads;
  RegistryOptions ropt;
  ropt.filter_size = cfg.filter_size;
  auto finish = [&](std::size_t i, GramMatrix g) {
    g.lengthscale = grid[i];
    g.digest = data.digest;
    const fs::path path = kernel_cache_path(cfg, grid[i]);
    save_kernel(g, path);
    save_labels(data.labels, labels_path(path));
    out << "computed kernel lengthscale=" << format_double(grid[i]) << " -> " << path.string() << '\n';
    kernels[i] = std::move(g);
  };

  if (cfg.prefix_reuse && lengthscale_is_output_only(cfg.arch) && missing.size() > 1) {
    const ArchitectureSpec arch = make_architecture(cfg.arch, ropt);
    const Dims collapse_extent = arch.stage_extents()[arch.layers.size() - 1];
    std::vector<WeightCovariance> covs;
    for (std::size_t i : missing) covs.push_back(lengthscale_covariance(grid[i], collapse_extent));
    std::vector<GramMatrix> grams = gram_matrix_sweep(data.images, arch, covs, gopt);
    for (std::size_t k = 0; k < missing.size(); ++k) finish(missing[k], std::move(grams[k]));
  } else {
    for (std::size_t i : missing) {
      ropt.lengthscale = grid[i];
      finish(i, gram_matrix(data.images, make_architecture(cfg.arch, ropt), gopt));
    }
  }

  std::vector<GramMatrix> result;
  for (auto& k : kernels) result.push_back(std::move(*k));
  return result;
}

ImageDataset load_data(const ExperimentConfig& cfg) { return load_cifar10_subset(cfg.data, cfg.size(), cfg.seed); }

int cmd_kernel(const ExperimentConfig& cfg, std::ostream& out, std::ostream& err) {
  const ImageDataset data = load_data(cfg);
  const std::vector<GramMatrix> kernels = obtain_kernels(cfg, data, out, err);
  if (!cfg.out.empty()) {
    if (kernels.size() != 1) throw ParameterError("--out with the kernel command needs a single lengthscale");
    save_kernel(kernels.front(), cfg.out);
    save_labels(data.labels, labels_path(cfg.out));
    out << "wrote " << cfg.out.string() << '\n';
  }
  return kExitOk;
}

int cmd_sweep(const ExperimentConfig& cfg, std::ostream& out, std::ostream& err) {
  const ImageDataset data = load_data(cfg);
  const std::vector<GramMatrix> kernels = obtain_kernels(cfg, data, out, err);
  std::vector<SweepRecord> records;
  for (const GramMatrix& g : kernels) {
    SweepRecord rec;
    rec.arch_id = g.arch_id;
    rec.n = g.n();
    rec.lengthscale = g.lengthscale;
    rec.cv = cv_accuracy(g, data.labels, noise_grid(cfg, g), cv_options(cfg));
    out << "lengthscale=" << format_double(rec.lengthscale) << " best_sigma=" << format_double(rec.cv.best_sigma)
        << " accuracy=" << rec.cv.best_accuracy << " stderr=" << rec.cv.standard_error(rec.cv.best_index) << '\n';
    records.push_back(std::move(rec));
  }
  const fs::path path = cfg.out.empty() ? fs::path("results.csv") : cfg.out;
  export_results(records, path, true);
  out << "appended " << records.size() << " lengthscale(s) to " << path.string() << '\n';
  return kExitOk;
}

int cmd_predict(const ExperimentConfig& cfg, std::ostream& out, std::ostream&) {
  const fs::path path = cfg.kernel.empty() ? kernel_cache_path(cfg, lengthscale_grid(cfg).front()) : cfg.kernel;
  if (!fs::exists(path)) throw IoError("kernel file not found: " + path.string());
  const GramMatrix g = load_kernel(path);
  const std::vector<int> labels = load_labels(labels_path(path));
  if (labels.size() != g.n()) throw IoError("labels do not match kernel " + path.string());

  const CVOptions opt = cv_options(cfg);
  const CVResult cv = cv_accuracy(g, labels, noise_grid(cfg, g), opt);
  const std::vector<int> pred = cv_predictions(g, labels, cv.best_sigma, opt);

  std::ostringstream csv;
  csv << "index,label,predicted\n";
  for (std::size_t i = 0; i < pred.size(); ++i) csv << i << ',' << labels[i] << ',' << pred[i] << '\n';
  if (cfg.out.empty()) {
    out << csv.str();
  } else {
    std::ofstream f(cfg.out, std::ios::trunc);
    if (!f || !(f << csv.str())) throw IoError("cannot write " + cfg.out.string());
    out << "sigma=" << format_double(cv.best_sigma) << " accuracy=" << cv.best_accuracy << " -> " << cfg.out.string()
        << '\n';
  }
  return kExitOk;
}

int cmd_mc_verify(const ExperimentConfig& cfg, std::ostream& out, std::ostream&) {
  RegistryOptions ropt;
  ropt.filter_size = cfg.filter_size;
  ropt.lengthscale = lengthscale_grid(cfg).front();
  FiniteNetConfig mc;
  mc.arch = make_architecture(cfg.arch, ropt);
  mc.channels = cfg.channels;
  mc.n_samples = cfg.samples;
  mc.seed = cfg.seed;
  mc.threads = cfg.threads;

  // Gaussian test inputs, one channel, drawn from a stream disjoint from the weights.
  RandomStream rng(cfg.seed, ~std::uint64_t{0});
  std::vector<Image> inputs;
  for (std::size_t i = 0; i < cfg.size(); ++i) {
    Image x(1, mc.arch.input_extent);
    rng.fill_normal(x.values);
    inputs.push_back(std::move(x));
  }

  GramOptions gopt;
  gopt.threads = cfg.threads;
  const GramMatrix analytic = gram_matrix(inputs, mc.arch, gopt);
  const EmpiricalMoment emp = empirical_kernel(mc, inputs);

  bool ok = true;
  char line[256];
  out << "  i   j        analytic       empirical              se   |dev|/se  band  cross/se  status\n";
  for (Eigen::Index i = 0; i < analytic.entries.rows(); ++i) {
    for (Eigen::Index j = i; j < analytic.entries.cols(); ++j) {
      const double k = analytic.entries(i, j);
      const double e = emp.covariance(i, j);
      const double se = emp.covariance_se(i, j);
      const double band = std::max(3.0 * se, 0.02 * std::abs(k));
      const double cross_z = emp.cross_channel_se(i, j) > 0 ? std::abs(emp.cross_channel(i, j)) / emp.cross_channel_se(i, j) : 0.0;
      const bool entry_ok = std::abs(e - k) <= band && cross_z <= 3.0;
      ok = ok && entry_ok;
      std::snprintf(line, sizeof line, "%3ld %3ld %15.8g %15.8g %15.4g %10.3f %5s %9.3f  %s\n", static_cast<long>(i),
                    static_cast<long>(j), k, e, se, se > 0 ? std::abs(e - k) / se : 0.0,
                    std::abs(e - k) <= 3.0 * se ? "3se" : "2%", cross_z, entry_ok ? "ok" : "FAIL");
      out << line;
    }
  }
  out << (ok ? "verification passed\n" : "verification FAILED\n");
  return ok ? kExitOk : kExitVerification;
}

}  // namespace

void ExperimentConfig::validate() const {
  if (arch.empty()) throw ParameterError("--arch is required");
  make_architecture(arch, RegistryOptions{std::nullopt, filter_size});
  for (double l : lengthscales)
    if (std::isnan(l) || l < 0.0) throw ParameterError("lengthscales must be non-negative");
  for (double s : sigma_grid)
    if (!(s > 0.0) || std::isinf(s)) throw ParameterError("sigma grid values must be positive and finite");
  if (threads == 0) throw ParameterError("--threads must be at least 1");
  if (size() == 0) throw ParameterError("--n must be positive");
  if (data_command(command)) {
    if (data.empty()) throw ParameterError("--data is required");
    if (!fs::exists(data)) throw ParameterError("data path does not exist: " + data.string());
    if (size() % kCifarClasses != 0) throw ParameterError("--n must be a multiple of 10");
  }
  if (command == Command::Sweep || command == Command::Predict) {
    if (folds < 2) throw ParameterError("--folds must be at least 2");
    if (command == Command::Sweep && size() % folds != 0) throw ParameterError("--folds must divide --n");
  }
  if (command == Command::McVerify) {
    if (channels < 2) throw ParameterError("--channels must be at least 2");
    if (samples < 2) throw ParameterError("--samples must be at least 2");
  }
}

fs::path kernel_cache_path(const ExperimentConfig& cfg, double lengthscale) {
  std::string name = cfg.arch + "-n" + std::to_string(cfg.size()) + "-seed" + std::to_string(cfg.seed) + "-l" +
                     format_double(lengthscale);
  if (cfg.filter_size != 3) name += "-f" + std::to_string(cfg.filter_size);
  return cfg.cache_dir / (name + ".ckrn");
}

int run_experiment(const ExperimentConfig& cfg, std::ostream& out, std::ostream& err) {
  try {
    cfg.validate();
    switch (cfg.command) {
      case Command::Kernel:
        return cmd_kernel(cfg, out, err);
      case Command::Sweep:
        return cmd_sweep(cfg, out, err);
      case Command::McVerify:
        return cmd_mc_verify(cfg, out, err);
      case Command::Predict:
        return cmd_predict(cfg, out, err);
    }
  } catch (const IoError& e) {
    err << "I/O error: " << e.what() << '\n';
    return kExitIo;
  } catch (const fs::filesystem_error& e) {
    err << "I/O error: " << e.what() << '\n';
    return kExitIo;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitConfig;
  }
  return kExitConfig;
}

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Convolutional GP kernels with spatially correlated weight priors", "ccgp"};
  app.fallthrough();
  app.require_subcommand(1);
  app.set_config("--config", "", "flat key = value file; flags override it");

  ExperimentConfig cfg;
  std::size_t n = 0;
  std::vector<std::string> lengthscales;
  std::string data, out_path, cache_dir = cfg.cache_dir.string(), kernel;
  bool no_prefix_reuse = false;

  app.add_option("--arch", cfg.arch, "architecture id (cnngp-<depth>, myrtle-10, myrtle-10-corr, toy-1d)");
  app.add_option("--filter-size", cfg.filter_size, "hidden conv filter size");
  app.add_option("--data", data, "CIFAR-10 batch file or directory");
  app.add_option("--n", n, "number of inputs");
  app.add_option("--seed", cfg.seed, "subset, fold and Monte-Carlo seed");
  app.add_option("--lengthscale", lengthscales, "Matérn lengthscale; 0 = independent, inf = pooling (repeatable)")
      ->delimiter(',');
  app.add_option("--sigma-grid", cfg.sigma_grid, "noise variances relative to trace(K)/n")->delimiter(',');
  app.add_option("--folds", cfg.folds, "cross-validation folds");
  app.add_option("--channels", cfg.channels, "finite-network width for mc-verify");
  app.add_option("--samples", cfg.samples, "Monte-Carlo weight draws");
  app.add_option("--threads", cfg.threads, "worker threads");
  app.add_option("--out", out_path, "output file");
  app.add_option("--cache-dir", cache_dir, "kernel cache directory");
  app.add_option("--kernel", kernel, "kernel file for predict");
  app.add_flag("--no-prefix-reuse", no_prefix_reuse, "recompute every layer for each lengthscale");

  auto* kernel_cmd = app.add_subcommand("kernel", "compute and store Gram matrices");
  auto* sweep_cmd = app.add_subcommand("sweep", "cross-validate over lengthscales and noise");
  auto* mc_cmd = app.add_subcommand("mc-verify", "compare finite-width Monte-Carlo moments with the kernel");
  auto* predict_cmd = app.add_subcommand("predict", "out-of-fold class predictions from a stored kernel");

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    app.exit(e, out, err);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    app.exit(e, out, err);
    return kExitConfig;
  }

  if (kernel_cmd->parsed()) cfg.command = Command::Kernel;
  if (sweep_cmd->parsed()) cfg.command = Command::Sweep;
  if (mc_cmd->parsed()) cfg.command = Command::McVerify;
  if (predict_cmd->parsed()) cfg.command = Command::Predict;
  if (app.count("--n") > 0) cfg.n = n;
  for (const std::string& s : lengthscales) {
    try {
      std::size_t used = 0;
      cfg.lengthscales.push_back(std::stod(s, &used));
      if (used != s.size()) throw std::invalid_argument(s);
    } catch (const std::exception&) {
      err << "error: invalid lengthscale '" << s << "'\n";
      return kExitConfig;
    }
  }
  cfg.data = data;
  cfg.out = out_path;
  cfg.cache_dir = cache_dir;
  cfg.kernel = kernel;
  cfg.prefix_reuse = !no_prefix_reuse;
  return run_experiment(cfg, out, err);
}

}  // namespace ccgp
