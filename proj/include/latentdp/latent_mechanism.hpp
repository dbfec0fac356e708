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

// Latent-space Diffusion-DP: encode, clip, contract and add
// classifier-weighted OU noise, decode; repeated T times, with a privacy
// report covering both accounting modes.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <vector>

#include <Eigen/Dense>

#include "latentdp/dp_core.hpp"
#include "latentdp/error.hpp"
#include "latentdp/models.hpp"

namespace latentdp {

// Per-coordinate noise weights; positive and summing to one.
struct WeightVector {
  Eigen::VectorXd weights;
  int target_attribute = 0;
  double temperature = 1.0;

  Eigen::Index dim() const { return weights.size(); }
  double min_share() const { return weights.minCoeff(); }

  friend bool operator==(const WeightVector& a, const WeightVector& b) {
    return a.target_attribute == b.target_attribute && a.temperature == b.temperature &&
           a.weights.size() == b.weights.size() && a.weights == b.weights;
  }

  static WeightVector uniform(Eigen::Index d, int target_attribute = 0) {
    return {Eigen::VectorXd::Constant(d, 1.0 / static_cast<double>(d)), target_attribute,
            std::numeric_limits<double>::infinity()};
  }
};

struct PrivacyReport {
  std::vector<RdpBudget> per_step_rdp;  // one single-iteration bound per step
  RdpBudget paper_bound;                // closed form with T in the denominator
  RdpBudget conservative_bound;         // sum of per_step_rdp
  DpBudget dp_equivalent;               // from conservative_bound
  OuParams params;
  SensitivitySpec sensitivity;
  double min_weight_share = 1.0;        // min_i w(i)
  double noise_variance_share = 1.0;    // min_i w(i)^2, variance scale of the weakest coordinate

  friend bool operator==(const PrivacyReport&, const PrivacyReport&) = default;
};

// Radial projection onto the l2 ball of radius clip_bound.
inline Eigen::VectorXd clip_latent(const Eigen::VectorXd& z, double clip_bound) {
  detail::require(clip_bound > 0.0, "clip_latent: clip_bound must be > 0");
  const double norm = z.norm();
  if (norm <= clip_bound) return z;
  Eigen::VectorXd out = z * (clip_bound / norm);
  // Rounding can leave the norm one ulp above the bound.
  while (out.norm() > clip_bound) out *= (1.0 - 1e-16);
  return out;
}

// Softmax over the mean absolute gradient of the target logit with respect
// to each latent coordinate, averaged over the probe set.
inline WeightVector attribute_weights(const Model& classifier, const std::vector<Eigen::VectorXd>& probe_latents,
                                      int target_attribute, double temperature) {
  detail::require(!probe_latents.empty(), "attribute_weights: probe set is empty");
  detail::require(temperature > 0.0, "attribute_weights: temperature must be > 0");
  if (target_attribute < 0 || target_attribute >= classifier.output_dim) {
    throw InvalidArgument("attribute_weights: target attribute " + std::to_string(target_attribute) +
                          " out of range [0, " + std::to_string(classifier.output_dim) + ")");
  }
  Eigen::VectorXd saliency = Eigen::VectorXd::Zero(classifier.input_dim);
  for (const Eigen::VectorXd& z : probe_latents) {
    saliency += logit_input_gradient(classifier, z, target_attribute).cwiseAbs();
  }
  saliency /= static_cast<double>(probe_latents.size());

  WeightVector out{Eigen::VectorXd::Constant(saliency.size(), 1.0), target_attribute, temperature};
  if (std::isfinite(temperature)) {
    const double top = saliency.maxCoeff();
    // Floor the exponent so no weight underflows to zero.
    out.weights = ((saliency.array() - top) / temperature).max(-700.0).exp().matrix();
  }
  out.weights /= out.weights.sum();
  return out;
}

struct AccountingOptions {
  double alpha = 2.0;
  double delta = 1e-5;
};

// Both accounting modes for T iterations of the weighted mechanism.
//
// paper_bound evaluates the closed form with weight share min_i w(i).
// Each per-step entry is the single-iteration Renyi bound for the weakest
// coordinate, whose noise variance is scaled by min_i w(i)^2; the
// conservative bound composes them additively.
inline PrivacyReport privacy_report(const OuParams& params, const WeightVector& weights,
                                    const SensitivitySpec& sensitivity, double alpha, double delta) {
  params.validate();
  detail::require(weights.dim() >= 1, "privacy_report: empty weight vector");
  detail::require((weights.weights.array() > 0.0).all(), "privacy_report: weights must be positive");
  detail::require(alpha > 1.0, "privacy_report: alpha must be > 1");
  detail::require(delta > 0.0 && delta < 1.0, "privacy_report: delta must lie in (0, 1)");

  PrivacyReport report;
  report.params = params;
  report.sensitivity = sensitivity;
  report.min_weight_share = std::min(1.0, weights.min_share());
  report.noise_variance_share = report.min_weight_share * report.min_weight_share;
  report.paper_bound = {alpha, 0.0};
  report.conservative_bound = {alpha, 0.0};
  report.dp_equivalent = {0.0, delta};
  if (params.num_steps == 0) return report;

  report.paper_bound =
      mechanism_rdp_bound(alpha, sensitivity, params, params.step_time, report.min_weight_share);
  OuParams single = params;
  single.num_steps = 1;
  const RdpBudget step =
      mechanism_rdp_bound(alpha, sensitivity, single, params.step_time, report.noise_variance_share);
  report.per_step_rdp.assign(static_cast<std::size_t>(params.num_steps), step);
  report.conservative_bound = compose_conservative(report.per_step_rdp, alpha);
  // A zero-divergence mechanism is (0, 0)-DP; the conversion's log(1/delta)
  // slack only applies to a nonzero bound.
  if (report.conservative_bound.epsilon > 0.0) {
    report.dp_equivalent = rdp_to_dp(report.conservative_bound, delta);
  }
  return report;
}

struct PerturbOptions {
  AccountingOptions accounting;
  // Optional per-iteration weight update (step index, current latent).
  // Unset: weights stay fixed across iterations.
  std::function<WeightVector(int, const Eigen::VectorXd&)> reweight;
};

struct PerturbResult {
  ImageTensor image;
  Eigen::VectorXd latent;  // final noised latent (before decoding)
  PrivacyReport report;
};

// Runs T = params.num_steps iterations of
//   z <- clip(encode(x));  z <- e^{-theta t} z + w (.) n,  n ~ N(0, v(t) I);  x <- decode(z)
// with v(t) the OU transition variance at t = params.step_time.
inline PerturbResult diffusion_dp_perturb(const ImageTensor& image, const Model& autoencoder,
                                          const WeightVector& weights, const OuParams& params,
                                          std::uint64_t seed, const PerturbOptions& options = {}) {
  params.validate();
  if (!is_autoencoder(autoencoder.family)) {
    throw InvalidArgument("diffusion_dp_perturb: model is not an autoencoder");
  }
  if (image.size() != autoencoder.input_dim) {
    throw DimensionMismatch("diffusion_dp_perturb: image has " + std::to_string(image.size()) +
                            " pixels, autoencoder expects " + std::to_string(autoencoder.input_dim));
  }
  if (weights.dim() != autoencoder.latent_dim()) {
    throw DimensionMismatch("diffusion_dp_perturb: weight vector has dimension " +
                            std::to_string(weights.dim()) + ", latent dimension is " +
                            std::to_string(autoencoder.latent_dim()));
  }
  const SensitivitySpec sensitivity = l2_sensitivity_clipped(params.clip_bound, Adjacency::kReplaceOne);

  PerturbResult result;
  result.image = image;
  result.latent = encode(autoencoder, image);
  if (params.num_steps == 0) {
    result.report = privacy_report(params, weights, sensitivity, options.accounting.alpha,
                                   options.accounting.delta);
    return result;
  }

  const OuMoments moments = ou_moments(params, params.step_time);
  const double sd = std::sqrt(moments.variance);
  WeightVector current = weights;
  WeightVector weakest = weights;
  Eigen::VectorXd noise(weights.dim());
  for (int step = 0; step < params.num_steps; ++step) {
    Eigen::VectorXd z = clip_latent(encode(autoencoder, result.image), params.clip_bound);
    if (options.reweight) {
      current = options.reweight(step, z);
      if (current.dim() != weights.dim()) {
        throw DimensionMismatch("diffusion_dp_perturb: reweight changed the latent dimension");
      }
      if (current.min_share() < weakest.min_share()) weakest = current;
    }
    fill_standard_normal(noise, seed, static_cast<std::uint64_t>(step));
    z = moments.mean_scale * z + sd * current.weights.cwiseProduct(noise);
    result.latent = z;
    result.image = decode(autoencoder, z, image.height, image.width);
  }
  result.report = privacy_report(params, weakest, sensitivity, options.accounting.alpha,
                                 options.accounting.delta);
  return result;
}

}  // namespace latentdp
