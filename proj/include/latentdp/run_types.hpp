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

// Value types of a pipeline run: config, reports and the run record.

#include <chrono>
#include <cstdint>
#include <ctime>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "latentdp/datagen.hpp"
#include "latentdp/dp_core.hpp"
#include "latentdp/error.hpp"
#include "latentdp/latent_mechanism.hpp"
#include "latentdp/metrics.hpp"
#include "latentdp/models.hpp"
#include "latentdp/rng.hpp"
#include "latentdp/unlearning.hpp"

namespace latentdp {

using ojson = nlohmann::ordered_json;

enum class UnlearnMethod { kFirstOrder, kSecondOrder, kRetrain };

inline const char* to_string(UnlearnMethod m) {
  switch (m) {
    case UnlearnMethod::kFirstOrder: return "first_order";
    case UnlearnMethod::kSecondOrder: return "second_order";
    case UnlearnMethod::kRetrain: return "retrain";
  }
  return "unknown";
}

inline UnlearnMethod unlearn_method_from_string(const std::string& s) {
  if (s == "first_order") return UnlearnMethod::kFirstOrder;
  if (s == "second_order") return UnlearnMethod::kSecondOrder;
  if (s == "retrain") return UnlearnMethod::kRetrain;
  throw InvalidArgument("unknown unlearn method '" + s + "'");
}

enum class RunStatus { kCreated, kPerturbed, kUnlearned, kFailed };

inline const char* to_string(RunStatus s) {
  switch (s) {
    case RunStatus::kCreated: return "created";
    case RunStatus::kPerturbed: return "perturbed";
    case RunStatus::kUnlearned: return "unlearned";
    case RunStatus::kFailed: return "failed";
  }
  return "unknown";
}

inline RunStatus run_status_from_string(const std::string& s) {
  if (s == "created") return RunStatus::kCreated;
  if (s == "perturbed") return RunStatus::kPerturbed;
  if (s == "unlearned") return RunStatus::kUnlearned;
  if (s == "failed") return RunStatus::kFailed;
  throw InvalidArgument("unknown run status '" + s + "'");
}

inline GeneratorSpec default_generator() {
  GeneratorSpec g;
  g.num_images = 5000;
  g.noise_level = 0.5;
  return g;
}

struct RunConfig {
  GeneratorSpec generator = default_generator();  // generator.seed is derived from `seed`
  int test_images = 1000;
  int transfer_images = 1000;
  int target_attribute = 0;
  double sensitive_fraction = 0.05;
  int latent_dim = 16;
  double classifier_lambda = 100.0;
  int classifier_iterations = 50;  // Newton iterations per classifier
  double weight_temperature = 1.0;
  OuParams ou{0.1, 4.0, 1, 0.5, 3.0};
  double alpha = 2.0;
  double delta = 1e-5;
  UnlearnMethod method = UnlearnMethod::kSecondOrder;
  double unlearning_rate = 2e-5;
  SolverConfig solver;
  std::uint64_t seed = 0;
  std::optional<BaselineMethod> baseline;
  BaselineConfig baseline_config;  // seed is derived from `seed`

  void validate() const {
    detail::require(generator.num_attributes >= 1 && generator.num_attributes <= kMaxAttributes,
                    "config: generator.num_attributes must lie in [1, " + std::to_string(kMaxAttributes) + "]");
    detail::require(generator.num_images >= 1, "config: generator.num_images must be >= 1");
    detail::require(generator.height >= 4 && generator.width >= 2, "config: images must be at least 4 x 2");
    detail::require(test_images >= 1, "config: test_images must be >= 1");
    detail::require(transfer_images >= 1, "config: transfer_images must be >= 1");
    detail::require(target_attribute >= 0 && target_attribute < generator.num_attributes,
                    "config: target_attribute out of range");
    detail::require(sensitive_fraction >= 0.0 && sensitive_fraction <= 1.0,
                    "config: sensitive_fraction must lie in [0, 1]");
    detail::require(latent_dim >= 1 && latent_dim <= generator.height * generator.width,
                    "config: latent_dim must lie in [1, pixel count]");
    detail::require(classifier_lambda > 0.0, "config: classifier_lambda must be > 0");
    detail::require(classifier_iterations >= 1, "config: classifier_iterations must be >= 1");
    detail::require(weight_temperature > 0.0, "config: weight_temperature must be > 0");
    ou.validate();
    detail::require(alpha > 1.0 && std::isfinite(alpha), "config: alpha must be > 1");
    detail::require(delta > 0.0 && delta < 1.0, "config: delta must lie in (0, 1)");
    detail::require(unlearning_rate > 0.0 && std::isfinite(unlearning_rate), "config: unlearning_rate must be > 0");
    solver.validate();
  }

  friend bool operator==(const RunConfig&, const RunConfig&) = default;
};

struct EvalReport {
  AccReport test;                          // per attribute, held-out records
  std::optional<double> forget_target_acc;  // target attribute on the originals that were transferred
  std::size_t forget_count = 0;

  friend bool operator==(const EvalReport&, const EvalReport&) = default;
};

inline double non_target_average(const EvalReport& r, int target) {
  double sum = 0.0;
  int count = 0;
  for (Eigen::Index k = 0; k < r.test.per_attribute.size(); ++k) {
    if (k == target) continue;
    sum += r.test.per_attribute[k];
    ++count;
  }
  return count ? sum / count : 0.0;
}

struct SsimSummary {
  double mean = 0.0;
  double min = 0.0;
  double max = 0.0;
  std::size_t count = 0;

  friend bool operator==(const SsimSummary&, const SsimSummary&) = default;
};

struct BaselineSummary {
  BaselineMethod method = BaselineMethod::kMosaic;
  SsimSummary ssim;
  std::optional<double> forget_target_acc;

  friend bool operator==(const BaselineSummary&, const BaselineSummary&) = default;
};

struct StageFailure {
  std::string stage;
  ErrorCode code = ErrorCode::kInternal;
  std::string message;

  friend bool operator==(const StageFailure&, const StageFailure&) = default;
};

struct RunArtifacts {
  Dataset risky;
  Dataset test;
  Dataset transfer;  // safe records only (target label 0)
  Model autoencoder;
  Model latent_classifier;
  std::vector<Model> risky_models;  // one single-output logistic head per attribute
  std::vector<std::size_t> sensitive;
  MatchResult match;
  Dataset transferred;
  WeightVector weights;
  Dataset perturbed;
  std::vector<Model> safe_models;

  friend bool operator==(const RunArtifacts&, const RunArtifacts&) = default;
};

struct RunRecord {
  std::string run_id;
  RunConfig config;
  RunStatus status = RunStatus::kCreated;
  std::string created_at;
  std::string updated_at;
  int adjustments = 0;
  bool models_ready = false;
  bool transfer_ready = false;
  RunArtifacts artifacts;
  std::optional<EvalReport> acc_before;
  std::optional<EvalReport> acc_after;
  std::optional<PrivacyReport> privacy;
  std::optional<SsimSummary> ssim;
  std::optional<BaselineSummary> baseline;
  ojson timings = ojson::object();
  ojson history = ojson::array();
  std::vector<ojson> events;
  std::optional<StageFailure> failure;

  friend bool operator==(const RunRecord&, const RunRecord&) = default;
};

// An error raised inside a named pipeline stage.
class StageError : public Error {
 public:
  StageError(std::string stage, ErrorCode code, const std::string& message)
      : Error(code, message), stage_(std::move(stage)) {}
  const std::string& stage() const noexcept { return stage_; }

 private:
  std::string stage_;
};

}  // namespace latentdp
