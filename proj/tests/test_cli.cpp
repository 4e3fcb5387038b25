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

#include <doctest.h>

#include <cstring>
#include <fstream>
#include <sstream>

#include "ccgp/cli.hpp"
#include "ccgp/data_io.hpp"
#include "support.hpp"

using namespace ccgp;
namespace fs = std::filesystem;

namespace {

struct Run {
  int code;
  std::string out;
  std::string err;
};

Run run(std::vector<std::string> args) {
  args.insert(args.begin(), "ccgp");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = run_cli(int(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

std::vector<std::string> lines(const fs::path& p) {
  std::ifstream in(p);
  std::vector<std::string> out;
  for (std::string l; std::getline(in, l);) out.push_back(l);
  return out;
}

std::size_t count(const std::string& haystack, const std::string& needle) {
  std::size_t n = 0;
  for (std::size_t pos = haystack.find(needle); pos != std::string::npos; pos = haystack.find(needle, pos + 1)) ++n;
  return n;
}

bool bitwise_equal(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  return a.size() == b.size() && std::memcmp(a.data(), b.data(), sizeof(double) * std::size_t(a.size())) == 0;
}

struct Workspace {
  fs::path dir;
  fs::path data;
  fs::path cache;

  explicit Workspace(const std::string& name) : dir(test::scratch_dir(name)), data(dir / "batch.bin"), cache(dir / "cache") {
    test::write_synthetic_cifar(data, 3, 11);
  }

  std::vector<std::string> base(const std::string& command) const {
    return {command, "--arch", "cnngp-1", "--data", data.string(), "--n", "20", "--cache-dir", cache.string()};
  }
};

std::vector<std::string> operator+(std::vector<std::string> a, const std::vector<std::string>& b) {
  a.insert(a.end(), b.begin(), b.end());
  return a;
}

}  // namespace

TEST_CASE("kernel command caches its result") {
  const Workspace ws("cli-kernel");
  const Run first = run(ws.base("kernel") + std::vector<std::string>{"--lengthscale", "2"});
  REQUIRE_MESSAGE(first.code == kExitOk, first.err);
  CHECK(count(first.out, "computed kernel") == 1);

  ExperimentConfig cfg;
  cfg.arch = "cnngp-1";
  cfg.n = 20;
  cfg.cache_dir = ws.cache;
  const fs::path cached = kernel_cache_path(cfg, 2.0);
  REQUIRE(fs::exists(cached));
  const GramMatrix k1 = load_kernel(cached);
  CHECK(k1.n() == 20);
  CHECK(k1.lengthscale == 2.0);
  CHECK(k1.digest == load_cifar10_subset(ws.data, 20, 0).digest);

  const Run second = run(ws.base("kernel") + std::vector<std::string>{"--lengthscale", "2", "--out", (ws.dir / "k.ckrn").string()});
  REQUIRE(second.code == kExitOk);
  CHECK(count(second.out, "loaded cached kernel") == 1);
  CHECK(count(second.out, "computed kernel") == 0);
  CHECK(bitwise_equal(load_kernel(ws.dir / "k.ckrn").entries, k1.entries));
  CHECK(lines(ws.dir / "k.ckrn.labels").size() == 20);

  // A different subset seed has a different digest and is recomputed.
  const Run reseeded = run(ws.base("kernel") + std::vector<std::string>{"--lengthscale", "2", "--seed", "5"});
  CHECK(reseeded.code == kExitOk);
  CHECK(count(reseeded.out, "computed kernel") == 1);
}

TEST_CASE("sweep writes one summary row per lengthscale and one detail row per fold") {
  const Workspace ws("cli-sweep");
  const fs::path csv = ws.dir / "results.csv";
  const Run r = run(ws.base("sweep") + std::vector<std::string>{"--lengthscale", "0,2,inf", "--out", csv.string()});
  REQUIRE_MESSAGE(r.code == kExitOk, r.err);
  const auto rows = lines(csv);
  std::size_t summary = 0, detail = 0;
  for (std::size_t i = 1; i < rows.size(); ++i) (rows[i].find(",best,") != std::string::npos ? summary : detail)++;
  CHECK(rows.front() == kResultsHeader);
  CHECK(summary == 3);
  CHECK(detail == 3 * 21 * 4);

  SUBCASE("prefix reuse does not change the kernels") {
    const fs::path other = ws.dir / "cache-full";
    std::vector<std::string> args = ws.base("kernel") + std::vector<std::string>{"--lengthscale", "0,2,inf", "--no-prefix-reuse"};
    args[8] = other.string();
    REQUIRE(run(args).code == kExitOk);
    ExperimentConfig cfg;
    cfg.arch = "cnngp-1";
    cfg.n = 20;
    for (double l : {0.0, 2.0, std::numeric_limits<double>::infinity()}) {
      cfg.cache_dir = ws.cache;
      const GramMatrix reused = load_kernel(kernel_cache_path(cfg, l));
      cfg.cache_dir = other;
      const GramMatrix full = load_kernel(kernel_cache_path(cfg, l));
      CHECK((reused.entries - full.entries).cwiseAbs().maxCoeff() <= 1e-12 * full.entries.cwiseAbs().maxCoeff());
    }
  }
  SUBCASE("predict reads the cached kernel") {
    const Run p = run({"predict", "--arch", "cnngp-1", "--n", "20", "--lengthscale", "2", "--cache-dir", ws.cache.string()});
    REQUIRE_MESSAGE(p.code == kExitOk, p.err);
    CHECK(count(p.out, "\n") == 21);
    CHECK(p.out.rfind("index,label,predicted\n", 0) == 0);
  }
}

TEST_CASE("config file and flags") {
  const Workspace ws("cli-config");
  const fs::path conf = ws.dir / "run.toml";
  {
    std::ofstream f(conf);
    f << "arch = \"cnngp-1\"\n"
      << "data = \"" << ws.data.string() << "\"\n"
      << "n = 10\n"
      << "cache-dir = \"" << ws.cache.string() << "\"\n"
      << "lengthscale = 0\n";
  }
  const Run r = run({"kernel", "--config", conf.string()});
  REQUIRE_MESSAGE(r.code == kExitOk, r.err);
  ExperimentConfig cfg;
  cfg.arch = "cnngp-1";
  cfg.n = 10;
  cfg.cache_dir = ws.cache;
  CHECK(fs::exists(kernel_cache_path(cfg, 0.0)));
  // Flags override the file.
  const Run over = run({"kernel", "--config", conf.string(), "--n", "20"});
  CHECK(over.code == kExitOk);
  cfg.n = 20;
  CHECK(fs::exists(kernel_cache_path(cfg, 0.0)));
}

TEST_CASE("exit codes") {
  const Workspace ws("cli-exit");
  CHECK(run({}).code == kExitConfig);
  CHECK(run({"kernel", "--bogus"}).code == kExitConfig);
  CHECK(run({"kernel", "--arch", "cnngp-1", "--data", (ws.dir / "nope").string()}).code == kExitConfig);
  CHECK(run(ws.base("kernel") + std::vector<std::string>{"--arch", "resnet"}).code == kExitConfig);
  CHECK(run(ws.base("sweep") + std::vector<std::string>{"--folds", "3"}).code == kExitConfig);
  CHECK(run(ws.base("kernel") + std::vector<std::string>{"--lengthscale", "-1"}).code == kExitConfig);
  CHECK(run(ws.base("kernel") + std::vector<std::string>{"--lengthscale", "wide"}).code == kExitConfig);
  CHECK(run({"mc-verify", "--arch", "toy-1d", "--channels", "1"}).code == kExitConfig);

  CHECK(run({"predict", "--arch", "cnngp-1", "--cache-dir", (ws.dir / "empty").string()}).code == kExitIo);
  {
    std::ofstream bad(ws.dir / "bad.bin", std::ios::binary);
    bad << "short";
  }
  std::vector<std::string> args = ws.base("kernel");
  args[4] = (ws.dir / "bad.bin").string();
  CHECK(run(args).code == kExitIo);
  CHECK(run({"--help"}).code == kExitOk);
}

TEST_CASE("mc-verify agrees with the analytic kernel on the toy network") {
  const Run r = run({"mc-verify", "--arch", "toy-1d", "--channels", "128", "--samples", "2000", "--seed", "3"});
  CHECK_MESSAGE(r.code == kExitOk, r.out);
  CHECK(count(r.out, " ok\n") == 6);
  CHECK(r.out.find("verification passed") != std::string::npos);
}
