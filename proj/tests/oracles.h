// Copyright 2026 The skilldisc Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef SKILLDISC_TESTS_ORACLES_H_
#define SKILLDISC_TESTS_ORACLES_H_

// Independent reference computations shared by unit and acceptance tests.
// Plain double arithmetic only; nothing here calls into the library.

#include <cmath>
#include <numbers>
#include <utility>
#include <vector>

namespace skilldisc::oracles {

inline double normal_pdf(double x, double mean, double std) {
  const double z = (x - mean) / std;
  return std::exp(-0.5 * z * z) / (std * std::sqrt(2.0 * std::numbers::pi));
}

// KL(P||M) + KL(Q||M), M = (P+Q)/2, by midpoint quadrature on [-8,8]^2, for
// P = standard bivariate normal with correlation rho and Q = N(0, I). This is
// the f-divergence whose variational form uses T = log2 - softplus(-g) and
// f*(t) = -log(2 - e^t); it equals twice the Jensen-Shannon divergence.
inline double jsd_fdivergence_gaussian(double rho, double step = 0.01) {
  const double det = 1.0 - rho * rho;
  const double norm_p = 1.0 / (2.0 * std::numbers::pi * std::sqrt(det));
  const double norm_q = 1.0 / (2.0 * std::numbers::pi);
  double total = 0.0;
  for (double x = -8.0 + step / 2; x < 8.0; x += step) {
    for (double y = -8.0 + step / 2; y < 8.0; y += step) {
      const double p = norm_p * std::exp(-(x * x - 2 * rho * x * y + y * y) / (2 * det));
      const double q = norm_q * std::exp(-(x * x + y * y) / 2);
      const double m = 0.5 * (p + q);
      if (p > 0) total += p * std::log(p / m);
      if (q > 0) total += q * std::log(q / m);
    }
  }
  return total * step * step;
}

// Per-dimension evaluation of the multiplicative composition with sigma to
// the first power. mu and sigma are indexed [primitive][dim].
inline std::pair<std::vector<double>, std::vector<double>> compose(
    const std::vector<std::vector<double>>& mu,
    const std::vector<std::vector<double>>& sigma, const std::vector<double>& w) {
  const std::size_t a = mu[0].size();
  std::vector<double> mean(a), std(a);
  for (std::size_t j = 0; j < a; ++j) {
    double denom = 0.0, num = 0.0;
    for (std::size_t i = 0; i < w.size(); ++i) {
      denom += w[i] / sigma[i][j];
      num += w[i] / sigma[i][j] * mu[i][j];
    }
    std[j] = 1.0 / denom;
    mean[j] = std[j] * num;
  }
  return {mean, std};
}

// log density of a = tanh(u), u ~ N(mean, diag(std^2)), composed from the
// primitives, summed over dimensions.
inline double squashed_log_prob(const std::vector<std::vector<double>>& mu,
                                const std::vector<std::vector<double>>& sigma,
                                const std::vector<double>& w, const std::vector<double>& a) {
  const auto [mean, std] = compose(mu, sigma, w);
  double total = 0.0;
  for (std::size_t j = 0; j < a.size(); ++j) {
    const double u = std::atanh(a[j]);
    total += std::log(normal_pdf(u, mean[j], std[j])) - std::log(1.0 - a[j] * a[j]);
  }
  return total;
}

struct FisherSample {
  std::vector<std::vector<double>> mu, sigma;
  std::vector<double> w, a;
};

// AFS(i, m) from central-difference gradients of the log density with
// respect to the primitive means (gating = false) or the gating weights.
inline std::vector<std::vector<double>> afs_finite_difference(
    const std::vector<FisherSample>& samples, bool gating, double h = 1e-5) {
  const std::size_t n = samples[0].w.size();
  const std::size_t m = gating ? 1 : samples[0].mu[0].size();
  std::vector<std::vector<double>> fisher(n, std::vector<double>(m, 0.0));
  for (const auto& s : samples) {
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t k = 0; k < m; ++k) {
        auto plus = s;
        auto minus = s;
        if (gating) {
          plus.w[i] += h;
          minus.w[i] -= h;
        } else {
          plus.mu[i][k] += h;
          minus.mu[i][k] -= h;
        }
        const double g = (squashed_log_prob(plus.mu, plus.sigma, plus.w, plus.a) -
                          squashed_log_prob(minus.mu, minus.sigma, minus.w, minus.a)) /
                         (2 * h);
        fisher[i][k] += g * g / static_cast<double>(samples.size());
      }
    }
  }
  for (std::size_t k = 0; k < m; ++k) {
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) total += fisher[i][k];
    for (std::size_t i = 0; i < n; ++i) fisher[i][k] /= total;
  }
  return fisher;
}

}  // namespace skilldisc::oracles

#endif  // SKILLDISC_TESTS_ORACLES_H_
