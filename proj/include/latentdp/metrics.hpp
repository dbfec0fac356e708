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

// Evaluation metrics: SSIM, per-attribute accuracy and wall-clock timing.

#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "latentdp/datagen.hpp"
#include "latentdp/error.hpp"
#include "latentdp/models.hpp"

namespace latentdp {

enum class WindowWeighting { kUniform, kGaussian };

struct SsimConfig {
  int window = 7;
  WindowWeighting weighting = WindowWeighting::kGaussian;
  double gaussian_sigma = 1.5;
  double k1 = 0.01;
  double k2 = 0.03;
  double dynamic_range = 1.0;
};

namespace detail {

inline Eigen::MatrixXd ssim_window(const SsimConfig& config) {
  const int w = config.window;
  Eigen::MatrixXd kernel(w, w);
  const double center = (w - 1) / 2.0;
  for (int r = 0; r < w; ++r) {
    for (int c = 0; c < w; ++c) {
      if (config.weighting == WindowWeighting::kUniform) {
        kernel(r, c) = 1.0;
      } else {
        const double dr = r - center, dc = c - center;
        kernel(r, c) = std::exp(-(dr * dr + dc * dc) / (2.0 * config.gaussian_sigma * config.gaussian_sigma));
      }
    }
  }
  return kernel / kernel.sum();
}

}  // namespace detail

// Mean SSIM over all fully contained windows (no padding).
inline double ssim(const ImageTensor& x, const ImageTensor& y, const SsimConfig& config = {}) {
  if (x.height != y.height || x.width != y.width) throw DimensionMismatch("ssim: image shapes differ");
  detail::require(config.window >= 1 && config.window % 2 == 1, "ssim: window must be odd and positive");
  if (config.window > std::min(x.height, x.width)) throw InvalidArgument("ssim: window larger than image");
  detail::require(config.k1 > 0.0 && config.k2 > 0.0 && config.dynamic_range > 0.0,
                  "ssim: k1, k2 and dynamic range must be > 0");
  const Eigen::MatrixXd kernel = detail::ssim_window(config);
  const double c1 = (config.k1 * config.dynamic_range) * (config.k1 * config.dynamic_range);
  const double c2 = (config.k2 * config.dynamic_range) * (config.k2 * config.dynamic_range);
  const int w = config.window;
  double total = 0.0;
  int windows = 0;
  for (int r0 = 0; r0 + w <= x.height; ++r0) {
    for (int c0 = 0; c0 + w <= x.width; ++c0) {
      double mx = 0.0, my = 0.0;
      for (int r = 0; r < w; ++r) {
        for (int c = 0; c < w; ++c) {
          mx += kernel(r, c) * x.at(r0 + r, c0 + c);
          my += kernel(r, c) * y.at(r0 + r, c0 + c);
        }
      }
      double vx = 0.0, vy = 0.0, cov = 0.0;
      for (int r = 0; r < w; ++r) {
        for (int c = 0; c < w; ++c) {
          const double dx = x.at(r0 + r, c0 + c) - mx, dy = y.at(r0 + r, c0 + c) - my;
          vx += kernel(r, c) * dx * dx;
          vy += kernel(r, c) * dy * dy;
          cov += kernel(r, c) * dx * dy;
        }
      }
      total += ((2.0 * mx * my + c1) * (2.0 * cov + c2)) / ((mx * mx + my * my + c1) * (vx + vy + c2));
      ++windows;
    }
  }
  return total / windows;
}

struct AccReport {
  Eigen::VectorXd per_attribute;
  double average = 0.0;

  static AccReport from_per_attribute(Eigen::VectorXd values) {
    AccReport r{std::move(values), 0.0};
    r.average = r.per_attribute.size() ? r.per_attribute.mean() : 0.0;
    return r;
  }

  friend bool operator==(const AccReport& a, const AccReport& b) {
    return a.average == b.average && a.per_attribute.size() == b.per_attribute.size() &&
           a.per_attribute == b.per_attribute;
  }
};

// Thresholded prediction: probability >= 0.5 maps to 1.
inline int predict_label(const Model& classifier, const Eigen::VectorXd& input) {
  return classify_attributes(classifier, input)[0] >= 0.5 ? 1 : 0;
}

// Accuracy of one single-output classifier on one attribute column.
inline double classifier_accuracy(const Model& classifier, const Dataset& data, int attribute) {
  if (data.size() == 0) return 0.0;
  const Eigen::MatrixXd x = data.pixel_matrix();
  const Eigen::VectorXd logits = (detail::augmented(classifier, x) * detail::head_matrix(classifier).transpose()).col(0);
  int correct = 0;
  for (Eigen::Index i = 0; i < logits.size(); ++i) {
    // sigma(s) >= 0.5 iff s >= 0.
    const int predicted = logits[i] >= 0.0 ? 1 : 0;
    correct += predicted == data.labels(i, attribute) ? 1 : 0;
  }
  return static_cast<double>(correct) / static_cast<double>(data.size());
}

// classifiers[k] predicts attribute k.
inline AccReport attribute_acc(const std::vector<Model>& classifiers, const Dataset& data) {
  if (static_cast<int>(classifiers.size()) != data.num_attributes()) {
    throw InvalidArgument("attribute_acc: " + std::to_string(classifiers.size()) + " classifiers for " +
                          std::to_string(data.num_attributes()) + " attributes");
  }
  Eigen::VectorXd per(data.num_attributes());
  for (int k = 0; k < data.num_attributes(); ++k) {
    const Model& c = classifiers[static_cast<std::size_t>(k)];
    if (c.family != ModelFamily::kLogistic || c.output_dim != 1) {
      throw InvalidArgument("attribute_acc: classifier " + std::to_string(k) + " must be single-output logistic");
    }
    detail::check_input(c, data.pixel_count());
    per[k] = classifier_accuracy(c, data, k);
  }
  return AccReport::from_per_attribute(std::move(per));
}

// Median wall time in seconds over `runs` timed executions, after one
// untimed warm-up run.
inline double time_method(const std::function<void()>& task, int runs = 3) {
  detail::require(runs >= 1, "time_method: runs must be >= 1");
  task();
  std::vector<double> seconds;
  for (int i = 0; i < runs; ++i) {
    const auto start = std::chrono::steady_clock::now();
    task();
    const auto stop = std::chrono::steady_clock::now();
    seconds.push_back(std::chrono::duration<double>(stop - start).count());
  }
  std::sort(seconds.begin(), seconds.end());
  return runs % 2 ? seconds[runs / 2] : 0.5 * (seconds[runs / 2 - 1] + seconds[runs / 2]);
}

}  // namespace latentdp
