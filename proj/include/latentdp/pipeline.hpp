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

// End-to-end run orchestration: risky data and models, resource
// specification, distribution matching, attribute transfer, latent
// perturbation, unlearning and evaluation.

#include <chrono>
#include <ctime>
#include <functional>
#include <string>
#include <vector>

#include "latentdp/run_json.hpp"
#include "latentdp/run_types.hpp"

namespace latentdp {

namespace detail {

inline std::string utc_now() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

inline void log_event(RunRecord& r, const std::string& stage, const std::string& event, ojson details = {}) {
  ojson e = {{"seq", r.events.size()}, {"time", utc_now()}, {"stage", stage}, {"event", event}};
  if (details.is_object()) {
    for (auto& [k, v] : details.items()) e[k] = v;
  }
  r.events.push_back(std::move(e));
}

template <typename Body>
void run_stage(RunRecord& r, const std::string& stage, Body&& body) {
  log_event(r, stage, "started");
  const auto start = std::chrono::steady_clock::now();
  auto fail = [&](ErrorCode code, const std::string& message) {
    r.status = RunStatus::kFailed;
    r.failure = StageFailure{stage, code, message};
    r.updated_at = utc_now();
    log_event(r, stage, "failed", {{"code", to_string(code)}, {"message", message}});
    return StageError(stage, code, message);
  };
  try {
    body();
  } catch (const StageError&) {
    throw;
  } catch (const Error& e) {
    throw fail(e.code(), e.what());
  } catch (const std::exception& e) {
    throw fail(ErrorCode::kInternal, e.what());
  }
  r.timings[stage] = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  r.updated_at = utc_now();
  log_event(r, stage, "completed");
}

inline SampleSet latent_samples(const Model& autoencoder, const Dataset& data) {
  SampleSet s{Eigen::MatrixXd(static_cast<Eigen::Index>(data.size()), autoencoder.latent_dim()),
              data.labels.cast<double>()};
  for (std::size_t i = 0; i < data.size(); ++i) {
    s.inputs.row(static_cast<Eigen::Index>(i)) = encode(autoencoder, data.images[i]).transpose();
  }
  return s;
}

inline SsimSummary summarize(const std::vector<double>& v) {
  SsimSummary s;
  s.count = v.size();
  if (v.empty()) return s;
  double sum = 0.0;
  s.min = v.front();
  s.max = v.front();
  for (double x : v) {
    sum += x;
    s.min = std::min(s.min, x);
    s.max = std::max(s.max, x);
  }
  s.mean = sum / static_cast<double>(v.size());
  return s;
}

// Original (pre-transfer) records of the transferred subset.
inline Dataset forget_set(const RunRecord& r) { return r.artifacts.risky.subset(r.artifacts.transferred.origin); }

inline void require_stage(bool ok, const std::string& message) {
  if (!ok) throw FailedPrecondition(message);
}

}  // namespace detail

// Stage seeds. The perturbation seed is keyed on the OU parameters, so
// changing them draws fresh noise and re-applying the same ones reproduces
// the previous output.
inline std::uint64_t stage_seed(const RunConfig& c, std::string_view stage) { return derive_seed(c.seed, stage, 0); }

inline std::uint64_t perturb_seed(const RunConfig& c) {
  return derive_seed(c.seed, "perturb", fnv1a64(to_json(c.ou).dump()));
}

inline RunRecord make_run(const RunConfig& config, std::string run_id) {
  config.validate();
  RunRecord r;
  r.run_id = std::move(run_id);
  r.config = config;
  r.created_at = detail::utc_now();
  r.updated_at = r.created_at;
  detail::log_event(r, "run", "created", {{"seed", config.seed}});
  return r;
}

// Accounting for a run is a pure function of its config, its weights and
// the number of records perturbed. Nothing perturbed means nothing spent.
inline PrivacyReport expected_privacy_report(const RunConfig& c, const WeightVector& weights,
                                             std::size_t perturbed_count) {
  const SensitivitySpec sens = l2_sensitivity_clipped(c.ou.clip_bound, Adjacency::kReplaceOne);
  if (perturbed_count == 0) {
    OuParams idle = c.ou;
    idle.num_steps = 0;
    PrivacyReport r = privacy_report(idle, weights, sens, c.alpha, c.delta);
    r.params = c.ou;
    return r;
  }
  return privacy_report(c.ou, weights, sens, c.alpha, c.delta);
}

inline EvalReport evaluate_models(const RunRecord& r, const std::vector<Model>& models) {
  EvalReport e;
  e.test = attribute_acc(models, r.artifacts.test);
  if (r.transfer_ready && r.artifacts.transferred.size() > 0) {
    const Dataset forget = detail::forget_set(r);
    const int target = r.config.target_attribute;
    e.forget_target_acc = classifier_accuracy(models[static_cast<std::size_t>(target)], forget, target);
    e.forget_count = forget.size();
  }
  return e;
}

// Risky data, held-out data, the safe transfer pool, the risky attribute
// classifiers, the autoencoder and the latent classifier used for weights.
inline void prepare_models(RunRecord& r) {
  const RunConfig& c = r.config;
  detail::run_stage(r, "risky_models", [&] {
    RunArtifacts& a = r.artifacts;
    GeneratorSpec g = c.generator;
    g.seed = stage_seed(c, "risky_data");
    a.risky = generate_dataset(g);
    g.num_images = c.test_images;
    g.seed = stage_seed(c, "test_data");
    a.test = generate_dataset(g);
    g.num_images = c.transfer_images;
    g.seed = stage_seed(c, "transfer_data");
    const Dataset pool = generate_dataset(g);
    std::vector<std::size_t> safe;
    for (std::size_t i = 0; i < pool.size(); ++i) {
      if (pool.labels(static_cast<Eigen::Index>(i), c.target_attribute) == 0) safe.push_back(i);
    }
    a.transfer = pool.subset(safe);
    a.transfer.provenance = Provenance::kTransfer;

    const Eigen::Index pixels = a.risky.pixel_count();
    const Eigen::MatrixXd x = a.risky.pixel_matrix();
    a.risky_models.clear();
    TrainOptions opt;
    opt.epochs = c.classifier_iterations;
    for (int k = 0; k < a.risky.num_attributes(); ++k) {
      const Model spec = Model::make(ModelFamily::kLogistic, pixels, 1, {c.classifier_lambda, true, 0, 0});
      a.risky_models.push_back(train(spec, SampleSet{x, a.risky.labels.col(k).cast<double>()}, opt).model);
    }
    const Model ae_spec =
        Model::make(ModelFamily::kLinearAutoencoder, pixels, pixels, {0.0, false, c.latent_dim, 0});
    a.autoencoder = train(ae_spec, SampleSet{x, Eigen::MatrixXd(x.rows(), 0)}).model;
    const Model latent_spec = Model::make(ModelFamily::kLogistic, c.latent_dim, a.risky.num_attributes(),
                                          {c.classifier_lambda, true, 0, 0});
    a.latent_classifier = train(latent_spec, detail::latent_samples(a.autoencoder, a.risky), opt).model;
    r.models_ready = true;
    r.acc_before = evaluate_models(r, a.risky_models);
  });
}

// Resource specification, distribution matching and attribute transfer.
inline void prepare_transfer(RunRecord& r) {
  detail::require_stage(r.models_ready, "attribute transfer requires trained risky models");
  const RunConfig& c = r.config;
  RunArtifacts& a = r.artifacts;
  detail::run_stage(r, "resource_specification", [&] {
    a.sensitive.clear();
    if (c.sensitive_fraction > 0.0) {
      a.sensitive = select_sensitive_subset(a.risky, c.target_attribute, c.sensitive_fraction,
                                            stage_seed(c, "sensitive_subset"));
    }
  });
  detail::run_stage(r, "distribution_matching", [&] {
    a.match = a.sensitive.empty() ? MatchResult{}
                                  : distribution_match(a.transfer, a.risky, a.sensitive, a.autoencoder,
                                                       c.target_attribute);
    if (!a.match.unmatched.empty()) {
      ojson which = ojson::array();
      for (std::size_t i : a.match.unmatched) which.push_back(a.sensitive[i]);
      detail::log_event(r, "distribution_matching", "unmatched", {{"records", which}});
    }
  });
  detail::run_stage(r, "attribute_transfer", [&] {
    a.transferred = attribute_transfer(a.risky, a.sensitive, a.transfer, a.match, c.target_attribute,
                                       TransferMode::kSwapRegion);
    r.transfer_ready = true;
    // The risky models are unchanged, but the forget set now exists.
    r.acc_before = evaluate_models(r, a.risky_models);
  });
}

// Latent perturbation of the transferred records.
inline void perturb_stage(RunRecord& r) {
  detail::require_stage(r.transfer_ready, "perturbation requires a completed attribute transfer");
  const RunConfig& c = r.config;
  RunArtifacts& a = r.artifacts;
  detail::run_stage(r, "perturb", [&] {
    std::vector<Eigen::VectorXd> probes;
    for (std::size_t s : a.transferred.origin) probes.push_back(encode(a.autoencoder, a.risky.images[s]));
    a.weights = probes.empty() ? WeightVector::uniform(c.latent_dim, c.target_attribute)
                               : attribute_weights(a.latent_classifier, probes, c.target_attribute,
                                                   c.weight_temperature);
    const std::uint64_t seed = perturb_seed(c);
    PerturbOptions opt;
    opt.accounting = {c.alpha, c.delta};
    a.perturbed = a.transferred;
    a.perturbed.provenance = Provenance::kPerturbed;
    std::vector<double> scores;
    for (std::size_t i = 0; i < a.transferred.size(); ++i) {
      ImageTensor out = diffusion_dp_perturb(a.transferred.images[i], a.autoencoder, a.weights, c.ou,
                                             derive_seed(seed, "record", a.transferred.origin[i]), opt)
                            .image;
      quantize_to_f32(out);
      scores.push_back(ssim(a.risky.images[a.transferred.origin[i]], out));
      a.perturbed.images[i] = std::move(out);
    }
    r.privacy = expected_privacy_report(c, a.weights, a.perturbed.size());
    r.ssim = detail::summarize(scores);
    if (c.baseline) {
      const Dataset forget = detail::forget_set(r);
      BaselineConfig bc = c.baseline_config;
      bc.seed = stage_seed(c, "baseline");
      const Dataset hidden = apply_baseline(forget, *c.baseline, bc);
      std::vector<double> base_scores;
      for (std::size_t i = 0; i < forget.size(); ++i) base_scores.push_back(ssim(forget.images[i], hidden.images[i]));
      BaselineSummary b{*c.baseline, detail::summarize(base_scores), std::nullopt};
      if (forget.size() > 0) {
        b.forget_target_acc = classifier_accuracy(a.risky_models[static_cast<std::size_t>(c.target_attribute)], hidden,
                                                  c.target_attribute);
      }
      r.baseline = b;
    }
    r.status = RunStatus::kPerturbed;
    r.acc_after.reset();
    a.safe_models.clear();
  });
}

// Safe models for every attribute: each classifier forgets the original
// sensitive records and learns their perturbed replacements.
inline std::vector<Model> unlearn_models(const RunRecord& r, UnlearnMethod method, double unlearning_rate,
                                         const SolverConfig& solver) {
  const RunArtifacts& a = r.artifacts;
  const std::size_t m = a.perturbed.size();
  if (m == 0) return a.risky_models;
  const Eigen::MatrixXd x = a.risky.pixel_matrix();
  const auto pixels = x.cols();
  Eigen::MatrixXd x_old(static_cast<Eigen::Index>(m), pixels), x_new(static_cast<Eigen::Index>(m), pixels);
  Eigen::MatrixXd x_after = x;
  for (std::size_t i = 0; i < m; ++i) {
    const auto row = static_cast<Eigen::Index>(a.perturbed.origin[i]);
    x_old.row(static_cast<Eigen::Index>(i)) = x.row(row);
    x_new.row(static_cast<Eigen::Index>(i)) = a.perturbed.images[i].pixels.transpose();
    x_after.row(row) = x_new.row(static_cast<Eigen::Index>(i));
  }
  std::vector<Model> out;
  for (int k = 0; k < a.risky.num_attributes(); ++k) {
    const Model& w = a.risky_models[static_cast<std::size_t>(k)];
    Eigen::VectorXd y_after = a.risky.labels.col(k).cast<double>();
    UnlearnRequest req{{x_old, Eigen::MatrixXd(static_cast<Eigen::Index>(m), 1)},
                       {x_new, Eigen::MatrixXd(static_cast<Eigen::Index>(m), 1)},
                       unlearning_rate};
    for (std::size_t i = 0; i < m; ++i) {
      const auto row = static_cast<Eigen::Index>(a.perturbed.origin[i]);
      req.originals.targets(static_cast<Eigen::Index>(i), 0) = a.risky.labels(row, k);
      req.replacements.targets(static_cast<Eigen::Index>(i), 0) = a.perturbed.labels(static_cast<Eigen::Index>(i), k);
      y_after[row] = req.replacements.targets(static_cast<Eigen::Index>(i), 0);
    }
    switch (method) {
      case UnlearnMethod::kFirstOrder: out.push_back(first_order_update(w, req)); break;
      case UnlearnMethod::kSecondOrder:
        out.push_back(second_order_update(w, req, solver, SampleSet{x_after, y_after}));
        break;
      case UnlearnMethod::kRetrain: {
        // Warm start: the objective is strictly convex, so the optimum is
        // the one a cold start reaches.
        TrainOptions opt;
        opt.epochs = r.config.classifier_iterations;
        opt.initial_parameters = w.parameters;
        out.push_back(retrain_oracle(w, SampleSet{x_after, y_after}, opt));
        break;
      }
    }
  }
  return out;
}

inline void unlearn_stage(RunRecord& r) {
  detail::require_stage(r.transfer_ready, "unlearning requires a completed attribute transfer");
  detail::require_stage(r.status == RunStatus::kPerturbed || r.status == RunStatus::kUnlearned,
                        "unlearning requires a perturbed run (status is " + std::string(to_string(r.status)) + ")");
  const RunConfig& c = r.config;
  detail::run_stage(r, "unlearn", [&] {
    r.artifacts.safe_models = unlearn_models(r, c.method, c.unlearning_rate, c.solver);
    r.acc_after = evaluate_models(r, r.artifacts.safe_models);
    r.status = RunStatus::kUnlearned;
  });
}

using StageCallback = std::function<void(const RunRecord&)>;

// Runs every stage through `last` (perturbed or unlearned). `checkpoint`
// is called after each stage and once more if a stage fails.
inline void advance_run(RunRecord& r, RunStatus last, const StageCallback& checkpoint = {}) {
  auto step = [&](auto&& stage) {
    try {
      stage(r);
    } catch (const StageError&) {
      if (checkpoint) checkpoint(r);
      throw;
    }
    if (checkpoint) checkpoint(r);
  };
  if (!r.models_ready) step(prepare_models);
  if (!r.transfer_ready) step(prepare_transfer);
  if (r.status == RunStatus::kCreated) step(perturb_stage);
  if (last == RunStatus::kUnlearned && r.status == RunStatus::kPerturbed) step(unlearn_stage);
}

inline RunRecord run_pipeline(const RunConfig& config, std::string run_id = "run-000001",
                              const StageCallback& checkpoint = {}) {
  RunRecord r = make_run(config, std::move(run_id));
  if (checkpoint) checkpoint(r);
  advance_run(r, RunStatus::kUnlearned, checkpoint);
  return r;
}

// New OU parameters: re-perturb, and re-unlearn if the run had been
// unlearned. Previous reports move to the history.
inline void adjust_privacy(RunRecord& r, const OuParams& params, const StageCallback& checkpoint = {}) {
  params.validate();
  detail::require_stage(r.status == RunStatus::kPerturbed || r.status == RunStatus::kUnlearned,
                        "adjust requires a perturbed run (status is " + std::string(to_string(r.status)) + ")");
  const bool relearn = r.status == RunStatus::kUnlearned;
  r.history.push_back(history_entry(r));
  r.config.ou = params;
  ++r.adjustments;
  detail::log_event(r, "adjust", "requested", {{"adjustment", r.adjustments}, {"params", to_json(params)}});
  r.status = RunStatus::kCreated;
  advance_run(r, relearn ? RunStatus::kUnlearned : RunStatus::kPerturbed, checkpoint);
}

// Switches the unlearning method and (re)runs the unlearning stage.
inline void request_unlearn(RunRecord& r, UnlearnMethod method, std::optional<double> unlearning_rate,
                            std::optional<SolverConfig> solver, const StageCallback& checkpoint = {}) {
  RunConfig next = r.config;
  next.method = method;
  if (unlearning_rate) next.unlearning_rate = *unlearning_rate;
  if (solver) next.solver = *solver;
  next.validate();
  detail::require_stage(r.status == RunStatus::kPerturbed || r.status == RunStatus::kUnlearned,
                        "unlearning requires a perturbed run (status is " + std::string(to_string(r.status)) + ")");
  r.config = next;
  detail::log_event(r, "unlearn", "requested", {{"method", to_string(method)}, {"unlearning_rate", next.unlearning_rate}});
  try {
    unlearn_stage(r);
  } catch (const StageError&) {
    if (checkpoint) checkpoint(r);
    throw;
  }
  if (checkpoint) checkpoint(r);
}

// One seeded trial of the unlearning comparison: every method starts from
// the same risky models and replaces the same records.
struct MethodOutcome {
  EvalReport eval;
  double seconds = 0.0;
  double parameter_distance = 0.0;  // max over attributes of |w - w_retrain|, retrain is 0
};

struct ComparisonTrial {
  std::uint64_t seed = 0;
  double fraction = 0.0;
  std::size_t changed = 0;
  MethodOutcome first_order;
  MethodOutcome second_order;
  MethodOutcome retrain;
};

// Risky models are trained once per seed and shared across fractions.
inline std::vector<ComparisonTrial> compare_unlearning_methods(const RunConfig& base,
                                                              const std::vector<std::uint64_t>& seeds,
                                                              const std::vector<double>& fractions) {
  std::vector<ComparisonTrial> trials;
  for (std::uint64_t seed : seeds) {
    RunConfig c = base;
    c.seed = seed;
    RunRecord r = make_run(c, "comparison");
    prepare_models(r);
    for (double fraction : fractions) {
      r.config.sensitive_fraction = fraction;
      r.config.validate();
      r.transfer_ready = false;
      r.status = RunStatus::kCreated;
      prepare_transfer(r);
      perturb_stage(r);
      ComparisonTrial t;
      t.seed = seed;
      t.fraction = fraction;
      t.changed = r.artifacts.perturbed.size();
      auto measure = [&](UnlearnMethod m, MethodOutcome& out) {
        std::vector<Model> models;
        const auto start = std::chrono::steady_clock::now();
        models = unlearn_models(r, m, r.config.unlearning_rate, r.config.solver);
        out.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        out.eval = evaluate_models(r, models);
        return models;
      };
      const std::vector<Model> reference = measure(UnlearnMethod::kRetrain, t.retrain);
      auto distance = [&](const std::vector<Model>& models) {
        double d = 0.0;
        for (std::size_t k = 0; k < models.size(); ++k) {
          d = std::max(d, (models[k].parameters - reference[k].parameters).lpNorm<Eigen::Infinity>());
        }
        return d;
      };
      t.first_order.parameter_distance = distance(measure(UnlearnMethod::kFirstOrder, t.first_order));
      t.second_order.parameter_distance = distance(measure(UnlearnMethod::kSecondOrder, t.second_order));
      trials.push_back(std::move(t));
    }
  }
  return trials;
}

}  // namespace latentdp
