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

// Thread-safe run operations over a RunStore: what the HTTP API and the
// CLI call. Mutations of one run are serialized; reads share access.

#include <map>
#include <memory>
#include <mutex>
#include <shared_mutex>
#include <string>

#include "latentdp/png.hpp"
#include "latentdp/run_store.hpp"

namespace latentdp {

enum class ImageVariant { kOriginal, kTransferred, kPerturbed };

inline ImageVariant image_variant_from_string(const std::string& s) {
  if (s == "original") return ImageVariant::kOriginal;
  if (s == "transferred") return ImageVariant::kTransferred;
  if (s == "perturbed") return ImageVariant::kPerturbed;
  throw InvalidArgument("unknown image variant '" + s + "' (expected original, transferred or perturbed)");
}

class RunService {
 public:
  explicit RunService(std::filesystem::path root) : store_(std::move(root)) {}

  RunStore& store() { return store_; }

  // Creates a run and takes it through perturbation. A stage failure is
  // persisted with the run before the error propagates.
  ojson create(const RunConfig& config) {
    config.validate();
    const std::string id = store_.allocate_id();
    auto record = std::make_shared<RunRecord>(make_run(config, id));
    auto lock = lock_for(id);
    std::unique_lock guard(*lock);
    {
      std::lock_guard reg(registry_);
      cache_[id] = record;
    }
    const StageCallback save = [this](const RunRecord& r) { store_.save(r); };
    save(*record);
    advance_run(*record, RunStatus::kPerturbed, save);
    ojson out;
    out["run_id"] = id;
    out["status"] = to_string(record->status);
    out["report"] = run_report(*record);
    return out;
  }

  ojson manifest(const std::string& id) {
    auto lock = existing_lock(id);
    std::shared_lock guard(*lock);
    return store_.manifest(id);
  }

  ojson report(const std::string& id) {
    auto lock = existing_lock(id);
    std::shared_lock guard(*lock);
    return run_report(*record(id));
  }

  // `params` may be partial; missing fields keep their current values.
  ojson adjust(const std::string& id, const nlohmann::json& params) {
    auto lock = existing_lock(id);
    std::unique_lock guard(*lock);
    auto r = record(id);
    const OuParams next = ou_params_from_json(params, r->config.ou);
    adjust_privacy(*r, next, [this](const RunRecord& rec) { store_.save(rec); });
    return run_report(*r);
  }

  // Body: {method, unlearning_rate?, solver?}.
  ojson unlearn(const std::string& id, const nlohmann::json& body) {
    auto lock = existing_lock(id);
    std::unique_lock guard(*lock);
    auto r = record(id);
    detail::StrictObject o(body, "unlearn");
    const UnlearnMethod method =
        unlearn_method_from_string(detail::get_string(o, "method", to_string(r->config.method)));
    std::optional<double> rate;
    if (const auto* v = o.child("unlearning_rate")) {
      if (!v->is_number()) throw InvalidArgument("unlearn.unlearning_rate: expected a number");
      rate = v->get<double>();
    }
    std::optional<SolverConfig> solver;
    if (const auto* s = o.child("solver")) solver = solver_config_from_json(*s, r->config.solver);
    o.finish();
    request_unlearn(*r, method, rate, solver, [this](const RunRecord& rec) { store_.save(rec); });
    return run_report(*r);
  }

  // PNG of record `index` of the transferred subset.
  std::string image_png(const std::string& id, std::size_t index, ImageVariant variant) {
    auto lock = existing_lock(id);
    std::shared_lock guard(*lock);
    auto r = record(id);
    const RunArtifacts& a = r->artifacts;
    if (!r->transfer_ready) throw FailedPrecondition("run has no transferred records yet");
    if (index >= a.transferred.size()) {
      throw NotFound("image index " + std::to_string(index) + " out of range (" +
                     std::to_string(a.transferred.size()) + " records)");
    }
    switch (variant) {
      case ImageVariant::kOriginal: return encode_png(a.risky.images[a.transferred.origin[index]]);
      case ImageVariant::kTransferred: return encode_png(a.transferred.images[index]);
      case ImageVariant::kPerturbed:
        if (!r->privacy || a.perturbed.size() != a.transferred.size()) {
          throw FailedPrecondition("run has not been perturbed");
        }
        return encode_png(a.perturbed.images[index]);
    }
    throw InvalidArgument("unknown image variant");
  }

 private:
  using Lock = std::shared_ptr<std::shared_mutex>;

  Lock lock_for(const std::string& id) {
    std::lock_guard reg(registry_);
    auto& l = locks_[id];
    if (!l) l = std::make_shared<std::shared_mutex>();
    return l;
  }

  Lock existing_lock(const std::string& id) {
    if (!store_.exists(id)) throw NotFound("run not found: " + id);
    return lock_for(id);
  }

  // Caller holds the run's lock.
  std::shared_ptr<RunRecord> record(const std::string& id) {
    {
      std::lock_guard reg(registry_);
      auto it = cache_.find(id);
      if (it != cache_.end()) return it->second;
    }
    auto loaded = std::make_shared<RunRecord>(store_.load(id));
    std::lock_guard reg(registry_);
    return cache_.emplace(id, loaded).first->second;
  }

  RunStore store_;
  std::mutex registry_;
  std::map<std::string, Lock> locks_;
  std::map<std::string, std::shared_ptr<RunRecord>> cache_;
};

}  // namespace latentdp
