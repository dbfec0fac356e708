// Copyright 2026 The latentdp Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Independent reference computations used only by the tests. Nothing here
// calls into the library's numerical paths.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numbers>
#include <numeric>
#include <random>
#include <vector>

#include <Eigen/Dense>

namespace latentdp::testing {

struct SampleMoments {
  double mean = 0.0;
  double variance = 0.0;
};

// Euler-Maruyama simulation of dX = -theta X dt + sqrt(2) rho dW, whose
// stationary variance is rho^2 / theta. Uses std::mt19937_64, unrelated to
// the library's generator.
inline SampleMoments euler_maruyama_ou(double theta, double rho, double x0, double t, int steps,
                                       int paths, std::uint64_t seed) {
  std::mt19937_64 engine(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  const double dt = t / steps;
  const double diffusion = std::sqrt(2.0 * dt) * rho;
  double sum = 0.0, sum_sq = 0.0;
  for (int p = 0; p < paths; ++p) {
    double x = x0;
    for (int s = 0; s < steps; ++s) x += -theta * x * dt + diffusion * normal(engine);
    sum += x;
    sum_sq += x * x;
  }
  const double mean = sum / paths;
  return {mean, sum_sq / paths - mean * mean};
}

inline SampleMoments moments(const Eigen::VectorXd& v) {
  const double mean = v.mean();
  return {mean, (v.array() - mean).square().sum() / static_cast<double>(v.size() - 1)};
}

// Renyi divergence of order alpha between two 1-D densities, given as log
// densities, by composite Simpson quadrature of
//   1/(alpha-1) log int p^alpha q^(1-alpha).
inline double renyi_by_quadrature(const std::function<double(double)>& log_p,
                                  const std::function<double(double)>& log_q, double alpha, double lo,
                                  double hi, int intervals) {
  if (intervals % 2) ++intervals;
  const double h = (hi - lo) / intervals;
  auto f = [&](double x) { return std::exp(alpha * log_p(x) + (1.0 - alpha) * log_q(x)); };
  double sum = f(lo) + f(hi);
  for (int i = 1; i < intervals; ++i) sum += (i % 2 ? 4.0 : 2.0) * f(lo + i * h);
  return std::log(sum * h / 3.0) / (alpha - 1.0);
}

inline std::function<double(double)> normal_log_pdf(double mean, double variance) {
  return [=](double x) {
    return -(x - mean) * (x - mean) / (2.0 * variance) - 0.5 * std::log(2.0 * std::numbers::pi * variance);
  };
}

// Central differences of a scalar function.
inline Eigen::VectorXd finite_difference_gradient(const std::function<double(const Eigen::VectorXd&)>& f,
                                                  const Eigen::VectorXd& at, double h) {
  Eigen::VectorXd g(at.size());
  Eigen::VectorXd x = at;
  for (Eigen::Index i = 0; i < at.size(); ++i) {
    x[i] = at[i] + h;
    const double up = f(x);
    x[i] = at[i] - h;
    const double down = f(x);
    x[i] = at[i];
    g[i] = (up - down) / (2.0 * h);
  }
  return g;
}

// Central differences of a vector function along direction v.
inline Eigen::VectorXd finite_difference_directional(
    const std::function<Eigen::VectorXd(const Eigen::VectorXd&)>& f, const Eigen::VectorXd& at,
    const Eigen::VectorXd& v, double h) {
  return (f(at + h * v) - f(at - h * v)) / (2.0 * h);
}

inline std::vector<double> average_ranks(const std::vector<double>& values) {
  std::vector<std::size_t> order(values.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
  std::vector<double> ranks(values.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j + 1 < order.size() && values[order[j + 1]] == values[order[i]]) ++j;
    const double rank = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = rank;
    i = j + 1;
  }
  return ranks;
}

struct SpearmanResult {
  double rho = 0.0;
  double p_less = 1.0;  // one-sided p-value for a negative association
};

// Spearman rank correlation with the large-sample normal approximation
// z = rho * sqrt(n - 1).
inline SpearmanResult spearman(const std::vector<double>& x, const std::vector<double>& y) {
  const std::vector<double> rx = average_ranks(x), ry = average_ranks(y);
  const auto n = static_cast<double>(x.size());
  const double mx = std::accumulate(rx.begin(), rx.end(), 0.0) / n;
  const double my = std::accumulate(ry.begin(), ry.end(), 0.0) / n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < rx.size(); ++i) {
    sxy += (rx[i] - mx) * (ry[i] - my);
    sxx += (rx[i] - mx) * (rx[i] - mx);
    syy += (ry[i] - my) * (ry[i] - my);
  }
  SpearmanResult r;
  r.rho = sxy / std::sqrt(sxx * syy);
  const double z = r.rho * std::sqrt(n - 1.0);
  r.p_less = 0.5 * std::erfc(-z / std::sqrt(2.0));
  return r;
}

}  // namespace latentdp::testing
