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

// JSON forms of the pipeline types. Config parsing is strict: unknown
// keys are rejected.

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <limits>
#include <set>
#include <string>

#include <nlohmann/json.hpp>

#include "latentdp/run_types.hpp"

namespace latentdp {


inline constexpr const char* kRunFormat = "latentdp-run";
inline constexpr int kRunFormatVersion = 1;

inline SolverMethod solver_method_from_string(const std::string& s) {
  if (s == "direct_cholesky") return SolverMethod::kDirectCholesky;
  if (s == "conjugate_gradient") return SolverMethod::kConjugateGradient;
  throw InvalidArgument("unknown solver method '" + s + "'");
}

inline ErrorCode error_code_from_string(const std::string& s) {
  for (ErrorCode c : {ErrorCode::kInvalidArgument, ErrorCode::kDimensionMismatch, ErrorCode::kNumerical,
                      ErrorCode::kNotConverged, ErrorCode::kNotFound, ErrorCode::kCorrupt,
                      ErrorCode::kFailedPrecondition, ErrorCode::kInternal}) {
    if (s == to_string(c)) return c;
  }
  throw InvalidArgument("unknown error code '" + s + "'");
}

namespace detail {

// Strict object reader: every key must be consumed by a setter, so typos
// in configs are rejected instead of silently ignored.
class StrictObject {
 public:
  StrictObject(const nlohmann::json& j, std::string where) : j_(j), where_(std::move(where)) {
    if (!j.is_object()) throw InvalidArgument(where_ + ": expected a JSON object");
  }

  template <typename T>
  void get(const char* key, T& out) {
    seen_.insert(key);
    auto it = j_.find(key);
    if (it == j_.end()) return;
    try {
      out = it->template get<T>();
    } catch (const nlohmann::json::exception&) {
      throw InvalidArgument(where_ + "." + key + ": wrong type");
    }
  }

  const nlohmann::json* child(const char* key) {
    seen_.insert(key);
    auto it = j_.find(key);
    return it == j_.end() ? nullptr : &*it;
  }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it) {
      if (!seen_.count(it.key())) throw InvalidArgument(where_ + ": unknown key '" + it.key() + "'");
    }
  }

 private:
  const nlohmann::json& j_;
  std::string where_;
  std::set<std::string> seen_;
};

inline std::string get_string(StrictObject& o, const char* key, std::string fallback) {
  o.get(key, fallback);
  return fallback;
}

// JSON has no infinity; non-finite values are written as null.
inline ojson finite_or_null(double v) { return std::isfinite(v) ? ojson(v) : ojson(nullptr); }
inline double from_finite_or_null(const nlohmann::json& j, double if_null) {
  return j.is_null() ? if_null : j.get<double>();
}

inline ojson vector_json(const Eigen::VectorXd& v) {
  ojson a = ojson::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v[i]);
  return a;
}

inline Eigen::VectorXd vector_from_json(const nlohmann::json& j) {
  Eigen::VectorXd v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) v[static_cast<Eigen::Index>(i)] = j.at(i).get<double>();
  return v;
}

inline std::string hex64(std::uint64_t h) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Parameters and config.

inline ojson to_json(const OuParams& p) {
  return {{"theta", p.theta}, {"rho", p.rho}, {"num_steps", p.num_steps}, {"step_time", p.step_time},
          {"clip_bound", p.clip_bound}};
}

// Missing keys keep the values of `base`.
inline OuParams ou_params_from_json(const nlohmann::json& j, OuParams base = {}) {
  detail::StrictObject o(j, "ou");
  o.get("theta", base.theta);
  o.get("rho", base.rho);
  o.get("num_steps", base.num_steps);
  o.get("step_time", base.step_time);
  o.get("clip_bound", base.clip_bound);
  o.finish();
  base.validate();
  return base;
}

inline ojson to_json(const SolverConfig& s) {
  return {{"method", to_string(s.method)}, {"tolerance", s.tolerance}, {"max_iterations", s.max_iterations},
          {"damping", s.damping}};
}

inline SolverConfig solver_config_from_json(const nlohmann::json& j, SolverConfig base = {}) {
  detail::StrictObject o(j, "solver");
  base.method = solver_method_from_string(detail::get_string(o, "method", to_string(base.method)));
  o.get("tolerance", base.tolerance);
  o.get("max_iterations", base.max_iterations);
  o.get("damping", base.damping);
  o.finish();
  base.validate();
  return base;
}

inline ojson to_json(const GeneratorSpec& g) {
  return {{"height", g.height},
          {"width", g.width},
          {"num_images", g.num_images},
          {"num_attributes", g.num_attributes},
          {"attribute_balance", g.attribute_balance},
          {"noise_level", g.noise_level}};
}

inline GeneratorSpec generator_from_json(const nlohmann::json& j, GeneratorSpec base) {
  detail::StrictObject o(j, "generator");
  o.get("height", base.height);
  o.get("width", base.width);
  o.get("num_images", base.num_images);
  o.get("num_attributes", base.num_attributes);
  o.get("attribute_balance", base.attribute_balance);
  o.get("noise_level", base.noise_level);
  o.finish();
  return base;
}

inline ojson to_json(const BaselineConfig& b) {
  return {{"block", b.block}, {"window_height", b.window_height}, {"window_width", b.window_width}};
}

inline ojson to_json(const RunConfig& c) {
  ojson j;
  j["generator"] = to_json(c.generator);
  j["test_images"] = c.test_images;
  j["transfer_images"] = c.transfer_images;
  j["target_attribute"] = c.target_attribute;
  j["sensitive_fraction"] = c.sensitive_fraction;
  j["latent_dim"] = c.latent_dim;
  j["classifier_lambda"] = c.classifier_lambda;
  j["classifier_iterations"] = c.classifier_iterations;
  j["weight_temperature"] = c.weight_temperature;
  j["ou"] = to_json(c.ou);
  j["alpha"] = c.alpha;
  j["delta"] = c.delta;
  j["method"] = to_string(c.method);
  j["unlearning_rate"] = c.unlearning_rate;
  j["solver"] = to_json(c.solver);
  j["seed"] = c.seed;
  j["baseline"] = c.baseline ? ojson(to_string(*c.baseline)) : ojson(nullptr);
  j["baseline_config"] = to_json(c.baseline_config);
  return j;
}

// Partial configs are allowed; unknown keys are rejected.
inline RunConfig run_config_from_json(const nlohmann::json& j) {
  RunConfig c;
  detail::StrictObject o(j, "config");
  if (const auto* g = o.child("generator")) c.generator = generator_from_json(*g, c.generator);
  o.get("test_images", c.test_images);
  o.get("transfer_images", c.transfer_images);
  o.get("target_attribute", c.target_attribute);
  o.get("sensitive_fraction", c.sensitive_fraction);
  o.get("latent_dim", c.latent_dim);
  o.get("classifier_lambda", c.classifier_lambda);
  o.get("classifier_iterations", c.classifier_iterations);
  o.get("weight_temperature", c.weight_temperature);
  if (const auto* ou = o.child("ou")) c.ou = ou_params_from_json(*ou, c.ou);
  o.get("alpha", c.alpha);
  o.get("delta", c.delta);
  c.method = unlearn_method_from_string(detail::get_string(o, "method", to_string(c.method)));
  o.get("unlearning_rate", c.unlearning_rate);
  if (const auto* s = o.child("solver")) c.solver = solver_config_from_json(*s, c.solver);
  o.get("seed", c.seed);
  if (const auto* b = o.child("baseline"); b && !b->is_null()) {
    if (!b->is_string()) throw InvalidArgument("config.baseline: expected a string or null");
    c.baseline = baseline_method_from_string(b->get<std::string>());
  }
  if (const auto* bc = o.child("baseline_config")) {
    detail::StrictObject b(*bc, "baseline_config");
    b.get("block", c.baseline_config.block);
    b.get("window_height", c.baseline_config.window_height);
    b.get("window_width", c.baseline_config.window_width);
    b.finish();
  }
  o.finish();
  c.validate();
  return c;
}

inline RunConfig load_run_config(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw NotFound("config file not found: " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(detail::read_file(path.string()));
  } catch (const nlohmann::json::parse_error& e) {
    throw InvalidArgument("config " + path.string() + ": " + e.what());
  }
  return run_config_from_json(j);
}

// ---------------------------------------------------------------------------
// Reports.

inline ojson to_json(const RdpBudget& b) { return {{"alpha", b.alpha}, {"epsilon", b.epsilon}}; }
inline ojson to_json(const DpBudget& b) { return {{"epsilon", b.epsilon}, {"delta", b.delta}}; }

inline ojson to_json(const PrivacyReport& r) {
  ojson steps = ojson::array();
  for (const RdpBudget& b : r.per_step_rdp) steps.push_back(to_json(b));
  return {{"paper_bound", to_json(r.paper_bound)},
          {"conservative_bound", to_json(r.conservative_bound)},
          {"dp_equivalent", to_json(r.dp_equivalent)},
          {"per_step_rdp", steps},
          {"params", to_json(r.params)},
          {"sensitivity",
           {{"value", r.sensitivity.value},
            {"adjacency", to_string(r.sensitivity.adjacency)},
            {"derivation", to_string(r.sensitivity.derivation)}}},
          {"min_weight_share", r.min_weight_share},
          {"noise_variance_share", r.noise_variance_share}};
}

inline PrivacyReport privacy_report_from_json(const nlohmann::json& j) {
  PrivacyReport r;
  auto rdp = [](const nlohmann::json& b) { return RdpBudget{b.at("alpha").get<double>(), b.at("epsilon").get<double>()}; };
  r.paper_bound = rdp(j.at("paper_bound"));
  r.conservative_bound = rdp(j.at("conservative_bound"));
  r.dp_equivalent = {j.at("dp_equivalent").at("epsilon").get<double>(), j.at("dp_equivalent").at("delta").get<double>()};
  for (const auto& b : j.at("per_step_rdp")) r.per_step_rdp.push_back(rdp(b));
  r.params = ou_params_from_json(j.at("params"));
  const auto& s = j.at("sensitivity");
  r.sensitivity.value = s.at("value").get<double>();
  r.sensitivity.adjacency =
      s.at("adjacency").get<std::string>() == "add_remove" ? Adjacency::kAddRemove : Adjacency::kReplaceOne;
  r.sensitivity.derivation = s.at("derivation").get<std::string>() == "clipped_latent"
                                 ? SensitivityDerivation::kClippedLatent
                                 : SensitivityDerivation::kUserSupplied;
  r.min_weight_share = j.at("min_weight_share").get<double>();
  r.noise_variance_share = j.at("noise_variance_share").get<double>();
  return r;
}

inline ojson to_json(const AccReport& a) {
  return {{"average", a.average}, {"per_attribute", detail::vector_json(a.per_attribute)}};
}

inline AccReport acc_report_from_json(const nlohmann::json& j) {
  AccReport a;
  a.average = j.at("average").get<double>();
  a.per_attribute = detail::vector_from_json(j.at("per_attribute"));
  return a;
}

inline ojson to_json(const EvalReport& e) {
  return {{"test", to_json(e.test)},
          {"forget_target_acc", e.forget_target_acc ? ojson(*e.forget_target_acc) : ojson(nullptr)},
          {"forget_count", e.forget_count}};
}

inline EvalReport eval_report_from_json(const nlohmann::json& j) {
  EvalReport e;
  e.test = acc_report_from_json(j.at("test"));
  if (!j.at("forget_target_acc").is_null()) e.forget_target_acc = j.at("forget_target_acc").get<double>();
  e.forget_count = j.at("forget_count").get<std::size_t>();
  return e;
}

inline ojson to_json(const SsimSummary& s) {
  return {{"mean", s.mean}, {"min", s.min}, {"max", s.max}, {"count", s.count}};
}

inline SsimSummary ssim_summary_from_json(const nlohmann::json& j) {
  return {j.at("mean").get<double>(), j.at("min").get<double>(), j.at("max").get<double>(),
          j.at("count").get<std::size_t>()};
}

inline ojson to_json(const BaselineSummary& b) {
  return {{"method", to_string(b.method)},
          {"ssim", to_json(b.ssim)},
          {"forget_target_acc", b.forget_target_acc ? ojson(*b.forget_target_acc) : ojson(nullptr)}};
}

inline BaselineSummary baseline_summary_from_json(const nlohmann::json& j) {
  BaselineSummary b;
  b.method = baseline_method_from_string(j.at("method").get<std::string>());
  b.ssim = ssim_summary_from_json(j.at("ssim"));
  if (!j.at("forget_target_acc").is_null()) b.forget_target_acc = j.at("forget_target_acc").get<double>();
  return b;
}

template <typename T>
ojson optional_json(const std::optional<T>& v) {
  return v ? to_json(*v) : ojson(nullptr);
}

// What the report endpoint and the CLI print.
inline ojson run_report(const RunRecord& r) {
  ojson j;
  j["run_id"] = r.run_id;
  j["status"] = to_string(r.status);
  j["adjustments"] = r.adjustments;
  j["params"] = to_json(r.config.ou);
  j["privacy"] = optional_json(r.privacy);
  if (r.privacy) {
    j["privacy"]["alpha"] = r.config.alpha;
    j["privacy"]["delta"] = r.config.delta;
  }
  j["acc_before"] = optional_json(r.acc_before);
  j["acc_after"] = optional_json(r.acc_after);
  j["ssim"] = optional_json(r.ssim);
  j["baseline"] = optional_json(r.baseline);
  j["method"] = to_string(r.config.method);
  j["unlearning_rate"] = r.config.unlearning_rate;
  j["perturbed_count"] = r.artifacts.perturbed.size();
  j["timings"] = r.timings;
  j["history"] = r.history;
  if (r.failure) {
    j["failure"] = {{"stage", r.failure->stage}, {"code", to_string(r.failure->code)}, {"message", r.failure->message}};
  }
  return j;
}

inline ojson history_entry(const RunRecord& r) {
  return {{"adjustment", r.adjustments},
          {"params", to_json(r.config.ou)},
          {"status", to_string(r.status)},
          {"privacy", optional_json(r.privacy)},
          {"ssim", optional_json(r.ssim)},
          {"acc_after", optional_json(r.acc_after)}};
}

}  // namespace latentdp
