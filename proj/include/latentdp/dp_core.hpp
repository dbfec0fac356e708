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

// Differential-privacy primitives for the latent Ornstein-Uhlenbeck
// mechanism: OU transition moments and sampling, the equal-covariance
// Gaussian Renyi divergence, the mechanism's RDP bound, RDP -> (eps, delta)
// conversion and clipped l2 sensitivity.

#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <string>

#include <Eigen/Dense>

#include "latentdp/error.hpp"
#include "latentdp/rng.hpp"

namespace latentdp {

// Noise and time parameters of the OU mechanism.
struct OuParams {
  double theta = 1.0;       // mean-reversion rate (1/time)
  double rho = 1.0;         // diffusion scale
  int num_steps = 1;        // iterations T
  double step_time = 1.0;   // OU time t advanced per iteration
  double clip_bound = 1.0;  // latent l2 clip radius C

  double stationary_variance() const { return rho * rho / theta; }

  void validate() const {
    detail::require(std::isfinite(theta) && theta > 0.0, "OuParams: theta must be finite and > 0");
    detail::require(std::isfinite(rho) && rho > 0.0, "OuParams: rho must be finite and > 0");
    detail::require(num_steps >= 0, "OuParams: num_steps must be >= 0");
    detail::require(std::isfinite(step_time) && step_time > 0.0,
                    "OuParams: step_time must be finite and > 0");
    detail::require(std::isfinite(clip_bound) && clip_bound > 0.0,
                    "OuParams: clip_bound must be finite and > 0");
    detail::require(std::isfinite(stationary_variance()),
                    "OuParams: stationary variance rho^2/theta is not finite");
  }

  friend bool operator==(const OuParams&, const OuParams&) = default;
};

struct RdpBudget {
  double alpha = 2.0;
  double epsilon = 0.0;

  void validate() const {
    detail::require(alpha > 1.0 && std::isfinite(alpha), "RdpBudget: alpha must be > 1");
    detail::require(epsilon >= 0.0, "RdpBudget: epsilon must be >= 0");
  }
  friend bool operator==(const RdpBudget&, const RdpBudget&) = default;
};

struct DpBudget {
  double epsilon = 0.0;
  double delta = 1e-5;

  void validate() const {
    detail::require(delta > 0.0 && delta < 1.0, "DpBudget: delta must lie in (0, 1)");
    detail::require(epsilon >= 0.0, "DpBudget: epsilon must be >= 0");
  }
  friend bool operator==(const DpBudget&, const DpBudget&) = default;
};

enum class Adjacency { kAddRemove, kReplaceOne };
enum class SensitivityDerivation { kClippedLatent, kUserSupplied };

inline const char* to_string(Adjacency a) {
  return a == Adjacency::kAddRemove ? "add_remove" : "replace_one";
}
inline const char* to_string(SensitivityDerivation d) {
  return d == SensitivityDerivation::kClippedLatent ? "clipped_latent" : "user_supplied";
}

struct SensitivitySpec {
  double value = 0.0;  // l2 sensitivity
  Adjacency adjacency = Adjacency::kReplaceOne;
  SensitivityDerivation derivation = SensitivityDerivation::kUserSupplied;

  friend bool operator==(const SensitivitySpec&, const SensitivitySpec&) = default;
};

struct OuMoments {
  double mean_scale = 1.0;
  double variance = 0.0;
};

// Transition law of the OU process started at x: N(mean_scale * x, variance * I).
inline OuMoments ou_moments(const OuParams& params, double t) {
  detail::require(std::isfinite(params.theta) && std::isfinite(params.rho) && params.theta > 0.0 &&
                      params.rho > 0.0,
                  "ou_moments: theta and rho must be finite and positive");
  detail::require(std::isfinite(t) && t >= 0.0, "ou_moments: t must be finite and >= 0");
  const double decay = std::exp(-params.theta * t);
  // -expm1(-2 theta t) keeps precision for small t.
  return {decay, params.stationary_variance() * -std::expm1(-2.0 * params.theta * t)};
}

// Fills `out` with i.i.d. N(0, 1) draws from stream `stream` of `seed`.
inline void fill_standard_normal(Eigen::Ref<Eigen::VectorXd> out, std::uint64_t seed,
                                 std::uint64_t stream = 0) {
  CounterRng rng(seed, stream);
  for (Eigen::Index i = 0; i < out.size(); ++i) out[i] = rng.normal();
}

// One draw of the OU transition from z over time t.
inline Eigen::VectorXd ou_sample(const Eigen::VectorXd& z, const OuParams& params, double t,
                                 std::uint64_t seed) {
  detail::require(z.size() >= 1, "ou_sample: dimension must be >= 1");
  const OuMoments m = ou_moments(params, t);
  if (t == 0.0) return z;
  Eigen::VectorXd noise(z.size());
  fill_standard_normal(noise, seed);
  return m.mean_scale * z + std::sqrt(m.variance) * noise;
}

// D_alpha(N(mu1, v I) || N(mu2, v I)) = alpha * |mu1 - mu2|^2 / (2 v).
inline double renyi_gaussian(const Eigen::VectorXd& mu1, const Eigen::VectorXd& mu2,
                             double variance, double alpha) {
  if (mu1.size() != mu2.size()) throw DimensionMismatch("renyi_gaussian: mean dimensions differ");
  detail::require(alpha > 1.0, "renyi_gaussian: alpha must be > 1");
  detail::require(variance > 0.0, "renyi_gaussian: variance must be > 0");
  return alpha * (mu1 - mu2).squaredNorm() / (2.0 * variance);
}

// (alpha, eps)-RDP implies (eps + log(1/delta) / (alpha - 1), delta)-DP.
inline DpBudget rdp_to_dp(const RdpBudget& budget, double delta) {
  budget.validate();
  detail::require(delta > 0.0 && delta < 1.0, "rdp_to_dp: delta must lie in (0, 1)");
  return {budget.epsilon - std::log(delta) / (budget.alpha - 1.0), delta};
}

// RDP bound of the weighted OU mechanism after T iterations of OU time t:
//
//   eps = alpha * ds^2 / (2 T * share * (rho^2 / theta) * (e^{2 theta t} - 1))
//
// `weight_share` is the normalized classifier weight of the noised
// coordinate. T appears in the denominator as written for this mechanism;
// compose_conservative gives the sequential-composition alternative.
inline RdpBudget mechanism_rdp_bound(double alpha, const SensitivitySpec& sensitivity,
                                     const OuParams& params, double t, double weight_share) {
  detail::require(alpha > 1.0 && std::isfinite(alpha), "mechanism_rdp_bound: alpha must be > 1");
  detail::require(sensitivity.value >= 0.0 && std::isfinite(sensitivity.value),
                  "mechanism_rdp_bound: sensitivity must be finite and >= 0");
  detail::require(params.num_steps >= 1, "mechanism_rdp_bound: num_steps must be >= 1");
  detail::require(weight_share > 0.0 && weight_share <= 1.0,
                  "mechanism_rdp_bound: weight_share must lie in (0, 1]");
  detail::require(std::isfinite(params.theta) && std::isfinite(params.rho) && params.theta > 0.0 &&
                      params.rho > 0.0,
                  "mechanism_rdp_bound: theta and rho must be finite and positive");
  if (!(t > 0.0) || !std::isfinite(t)) {
    throw InvalidArgument("mechanism_rdp_bound: t must be > 0 (the bound diverges at t = 0)");
  }
  const double spread = params.stationary_variance() * std::expm1(2.0 * params.theta * t);
  const double denom = 2.0 * params.num_steps * weight_share * spread;
  return {alpha, alpha * sensitivity.value * sensitivity.value / denom};
}

inline SensitivitySpec l2_sensitivity_clipped(double clip_bound, Adjacency adjacency) {
  detail::require(clip_bound > 0.0 && std::isfinite(clip_bound),
                  "l2_sensitivity_clipped: clip_bound must be finite and > 0");
  const double value = adjacency == Adjacency::kReplaceOne ? 2.0 * clip_bound : clip_bound;
  return {value, adjacency, SensitivityDerivation::kClippedLatent};
}

// Sequential composition at a fixed order: epsilons add.
inline RdpBudget compose_conservative(std::span<const RdpBudget> steps, double alpha) {
  detail::require(alpha > 1.0, "compose_conservative: alpha must be > 1");
  double total = 0.0;
  for (const RdpBudget& step : steps) {
    if (step.alpha != alpha) {
      throw InvalidArgument("compose_conservative: all steps must share alpha = " +
                            std::to_string(alpha));
    }
    total += step.epsilon;
  }
  return {alpha, total};
}

}  // namespace latentdp
