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

#pragma once

// Wall-clock comparison of the unlearning methods on a synthetic logistic
// problem: first-order step, second-order step and full retraining.

#include <algorithm>
#include <cstdint>
#include <vector>

#include <Eigen/Dense>

#include "latentdp/metrics.hpp"
#include "latentdp/models.hpp"
#include "latentdp/rng.hpp"
#include "latentdp/unlearning.hpp"

namespace latentdp {

struct TimingBenchConfig {
  int records = 10000;
  int features = 50;
  double replace_fraction = 0.05;
  double lambda = 1.0;
  double unlearning_rate = 1e-4;
  int runs = 3;  // median over this many timings per method
  std::uint64_t seed = 0;

  void validate() const {
    detail::require(records >= 2 && features >= 1, "bench: need records >= 2 and features >= 1");
    detail::require(replace_fraction > 0.0 && replace_fraction <= 1.0, "bench: replace_fraction must lie in (0, 1]");
    detail::require(lambda > 0.0, "bench: lambda must be > 0");
    detail::require(unlearning_rate > 0.0, "bench: unlearning_rate must be > 0");
    detail::require(runs >= 1, "bench: runs must be >= 1");
  }
};

struct TimingBenchResult {
  double first_order_seconds = 0.0;
  double second_order_seconds = 0.0;
  double retrain_seconds = 0.0;
  Eigen::Index parameters = 0;
  Eigen::Index replaced = 0;
  // Distance of each update to the retrained parameters.
  double first_order_distance = 0.0;
  double second_order_distance = 0.0;
};

struct LogisticProblem {
  Model spec;
  SampleSet data;
  UnlearnRequest request;
  SampleSet data_after;
};

// Gaussian features, labels drawn from a random logistic model; the first
// replace_fraction of the rows get shifted features and resampled labels.
inline LogisticProblem synthetic_logistic_problem(const TimingBenchConfig& c) {
  c.validate();
  CounterRng rng(c.seed, 0);
  const Eigen::Index n = c.records, p = c.features;
  Eigen::VectorXd truth(p);
  for (Eigen::Index j = 0; j < p; ++j) truth[j] = rng.normal() / std::sqrt(static_cast<double>(p));
  auto label = [&](const Eigen::VectorXd& x) { return rng.uniform() < detail::sigmoid(3.0 * x.dot(truth)) ? 1.0 : 0.0; };
  LogisticProblem out;
  out.spec = Model::make(ModelFamily::kLogistic, static_cast<int>(p), 1, {c.lambda, true, 0, 0});
  out.data = {Eigen::MatrixXd(n, p), Eigen::MatrixXd(n, 1)};
  for (Eigen::Index i = 0; i < n; ++i) {
    Eigen::VectorXd x(p);
    for (Eigen::Index j = 0; j < p; ++j) x[j] = rng.normal();
    out.data.inputs.row(i) = x.transpose();
    out.data.targets(i, 0) = label(x);
  }
  const auto m = std::max<Eigen::Index>(1, static_cast<Eigen::Index>(std::llround(c.replace_fraction * n)));
  out.request.unlearning_rate = c.unlearning_rate;
  out.request.originals = {out.data.inputs.topRows(m), out.data.targets.topRows(m)};
  out.request.replacements = {Eigen::MatrixXd(m, p), Eigen::MatrixXd(m, 1)};
  out.data_after = out.data;
  for (Eigen::Index i = 0; i < m; ++i) {
    Eigen::VectorXd x = out.data.inputs.row(i).transpose();
    for (Eigen::Index j = 0; j < p; ++j) x[j] += 0.5 * rng.normal();
    out.request.replacements.inputs.row(i) = x.transpose();
    out.request.replacements.targets(i, 0) = label(x);
    out.data_after.inputs.row(i) = x.transpose();
    out.data_after.targets(i, 0) = out.request.replacements.targets(i, 0);
  }
  return out;
}

inline TimingBenchResult benchmark_unlearning_timing(const TimingBenchConfig& c) {
  const LogisticProblem prob = synthetic_logistic_problem(c);
  const Model trained = train(prob.spec, prob.data).model;
  TimingBenchResult r;
  r.parameters = trained.parameters.size();
  r.replaced = prob.request.size();
  Model fo, so, rt;
  r.first_order_seconds = time_method([&] { fo = first_order_update(trained, prob.request); }, c.runs);
  r.second_order_seconds = time_method([&] { so = second_order_update(trained, prob.request, SolverConfig{}, prob.data_after); }, c.runs);
  r.retrain_seconds = time_method([&] { rt = retrain_oracle(prob.spec, prob.data_after); }, c.runs);
  r.first_order_distance = (fo.parameters - rt.parameters).norm();
  r.second_order_distance = (so.parameters - rt.parameters).norm();
  return r;
}

}  // namespace latentdp
