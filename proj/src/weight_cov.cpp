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

#include "ccgp/weight_cov.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
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

Eigen::MatrixXd distance_matrix(const Dims& patch_size) {
  const std::size_t n = volume(patch_size);
  std::vector<Dims> coords(n);
  for (std::size_t p = 0; p < n; ++p) coords[p] = unflatten(p, patch_size);
  Eigen::MatrixXd dist(n, n);
  for (std::size_t a = 0; a < n; ++a) {
    for (std::size_t b = 0; b < n; ++b) {
      double sq = 0.0;
      for (std::size_t d = 0; d < patch_size.size(); ++d) {
        const double diff = coords[a][d] - coords[b][d];
        sq += diff * diff;
      }
      dist(a, b) = std::sqrt(sq);
    }
  }
  return dist;
}

void require_lengthscale(double l) {
  if (!(l > 0.0)) throw ParameterError("covariance lengthscale must be positive, got " + std::to_string(l));
}

void check_psd(const Eigen::MatrixXd& m) {
  const double scale = m.trace() / static_cast<double>(m.rows());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(m, Eigen::EigenvaluesOnly);
  if (eig.eigenvalues().minCoeff() < -kCovPsdTolerance * std::abs(scale))
    throw NotPsdError("weight covariance is not positive semi-definite");
}

}  // namespace

double matern32(double distance, double lengthscale) {
  const double r = std::sqrt(3.0) * distance / lengthscale;
  return (1.0 + r) * std::exp(-r);
}

double mean_pool_normalizer(const Dims& patch_size) {
  const double n = static_cast<double>(volume(patch_size));
  return 1.0 / (n * n);
}

WeightCovariance build_cov(const CovarianceKind& kind, const Dims& patch_size) {
  if (patch_size.empty()) throw ParameterError("patch size must have at least one dimension");
  for (int e : patch_size)
    if (e < 1) throw ParameterError("patch size entries must be positive");
  const auto n = static_cast<Eigen::Index>(volume(patch_size));

  WeightCovariance cov;
  cov.patch_size_ = patch_size;
  cov.kind_ = kind;
  cov.matrix_ = std::visit(
      overloaded{
          [&](const Independent& k) -> Eigen::MatrixXd {
            if (!(k.variance >= 0.0)) throw ParameterError("independent weight variance must be non-negative");
            return k.variance * Eigen::MatrixXd::Identity(n, n);
          },
          [&](const MeanPool&) -> Eigen::MatrixXd { return Eigen::MatrixXd::Ones(n, n); },
          [&](const Rank1& k) -> Eigen::MatrixXd {
            if (static_cast<Eigen::Index>(k.alpha.size()) != n)
              throw ParameterError("rank-1 covariance needs one alpha per patch position");
            const Eigen::Map<const Eigen::VectorXd> a(k.alpha.data(), n);
            return a * a.transpose();
          },
          [&](const Exponential& k) -> Eigen::MatrixXd {
            require_lengthscale(k.lengthscale);
            return (-distance_matrix(patch_size).array() / k.lengthscale).exp().matrix();
          },
          [&](const Matern32& k) -> Eigen::MatrixXd {
            require_lengthscale(k.lengthscale);
            return distance_matrix(patch_size).unaryExpr([&](double d) { return matern32(d, k.lengthscale); });
          },
          [&](const Explicit& k) -> Eigen::MatrixXd {
            if (k.matrix.rows() != n || k.matrix.cols() != n)
              throw ParameterError("explicit covariance must be |P| x |P|");
            const double asym = (k.matrix - k.matrix.transpose()).cwiseAbs().maxCoeff();
            if (asym > 1e-12 * std::max(1.0, k.matrix.cwiseAbs().maxCoeff()))
              throw NotPsdError("explicit covariance is not symmetric");
            Eigen::MatrixXd sym = 0.5 * (k.matrix + k.matrix.transpose());
            check_psd(sym);
            return sym;
          },
      },
      kind);

  Eigen::MatrixXd off = cov.matrix_;
  off.diagonal().setZero();
  cov.diagonal_ = (off.array() == 0.0).all();
  return cov;
}

WeightCovariance WeightCovariance::scaled(double factor) const {
  if (!(factor >= 0.0)) throw ParameterError("covariance scale must be non-negative");
  WeightCovariance out = *this;
  out.matrix_ *= factor;
  out.kind_ = Explicit{out.matrix_};
  return out;
}

double WeightCovariance::min_eigenvalue() const {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(matrix_, Eigen::EigenvaluesOnly);
  return eig.eigenvalues().minCoeff();
}

CovSqrtFactor sqrt_factor(const WeightCovariance& cov) {
  const Eigen::MatrixXd& m = cov.matrix();
  const double mean_eig = m.trace() / static_cast<double>(m.rows());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(m);
  if (eig.info() != Eigen::Success) throw NotPsdError("eigendecomposition of weight covariance failed");
  Eigen::VectorXd values = eig.eigenvalues();
  if (values.minCoeff() < -kCovPsdTolerance * std::abs(mean_eig))
    throw NotPsdError("weight covariance has eigenvalue " + std::to_string(values.minCoeff()));
  // Roundoff-level eigenvalues would enter as sqrt(eps) noise; drop them.
  const double floor = static_cast<double>(m.rows()) * std::numeric_limits<double>::epsilon() * values.cwiseAbs().maxCoeff();
  values = (values.array() > floor).select(values, 0.0).cwiseSqrt();
  return CovSqrtFactor{cov.patch_size(), eig.eigenvectors() * values.asDiagonal()};
}

}  // namespace ccgp
