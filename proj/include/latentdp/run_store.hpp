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

// On-disk run persistence.
//
// Run directory:
//   manifest.json   config, status, reports, history, artifact hashes
//   events.log      one JSON event per line, append-only
//   data/<name>/    dataset directories (risky, test, transfer, transferred, perturbed)
//   models/*.ckpt   model checkpoints

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <regex>
#include <string>
#include <vector>

#include "latentdp/pipeline.hpp"
#include "latentdp/run_json.hpp"

namespace latentdp {

// ---------------------------------------------------------------------------
// Persistence.

namespace detail {

inline const std::vector<std::pair<std::string, Dataset RunArtifacts::*>>& dataset_fields() {
  static const std::vector<std::pair<std::string, Dataset RunArtifacts::*>> fields = {
      {"risky", &RunArtifacts::risky},
      {"test", &RunArtifacts::test},
      {"transfer", &RunArtifacts::transfer},
      {"transferred", &RunArtifacts::transferred},
      {"perturbed", &RunArtifacts::perturbed}};
  return fields;
}

// Which datasets and models exist at the record's current stage.
inline std::vector<std::string> present_datasets(const RunRecord& r) {
  std::vector<std::string> out;
  if (r.models_ready) out = {"risky", "test", "transfer"};
  if (r.transfer_ready) out.push_back("transferred");
  if (r.privacy) out.push_back("perturbed");
  return out;
}

inline std::map<std::string, const Model*> present_models(const RunRecord& r) {
  std::map<std::string, const Model*> out;
  const RunArtifacts& a = r.artifacts;
  if (!r.models_ready) return out;
  out["autoencoder.ckpt"] = &a.autoencoder;
  out["latent_classifier.ckpt"] = &a.latent_classifier;
  char name[64];
  for (std::size_t k = 0; k < a.risky_models.size(); ++k) {
    std::snprintf(name, sizeof name, "risky_%02zu.ckpt", k);
    out[name] = &a.risky_models[k];
  }
  for (std::size_t k = 0; k < a.safe_models.size(); ++k) {
    std::snprintf(name, sizeof name, "safe_%02zu.ckpt", k);
    out[name] = &a.safe_models[k];
  }
  return out;
}

inline void write_atomic(const std::filesystem::path& path, const std::string& bytes) {
  const std::filesystem::path tmp = path.string() + ".tmp";
  write_file(tmp.string(), bytes);
  std::filesystem::rename(tmp, path);
}

inline std::string file_hash(const std::filesystem::path& path) { return hex64(fnv1a64(read_file(path.string()))); }

inline std::uint64_t manifest_checksum(ojson manifest) {
  manifest.erase("checksum");
  return fnv1a64(manifest.dump());
}

}  // namespace detail

// Manifest without artifact hashes or checksum; `save_run` adds both.
inline ojson run_manifest(const RunRecord& r) {
  const RunArtifacts& a = r.artifacts;
  ojson m;
  m["format"] = kRunFormat;
  m["version"] = kRunFormatVersion;
  m["run_id"] = r.run_id;
  m["status"] = to_string(r.status);
  m["created_at"] = r.created_at;
  m["updated_at"] = r.updated_at;
  m["adjustments"] = r.adjustments;
  m["config"] = to_json(r.config);
  m["flags"] = {{"models_ready", r.models_ready}, {"transfer_ready", r.transfer_ready}};
  m["sensitive_indices"] = a.sensitive;
  ojson pairing = ojson::array();
  for (const auto& p : a.match.pairing) pairing.push_back(p ? ojson(*p) : ojson(nullptr));
  m["matching"] = {{"pairing", pairing}, {"unmatched", a.match.unmatched}};
  m["weights"] = a.weights.dim() == 0 ? ojson(nullptr)
                                      : ojson{{"weights", detail::vector_json(a.weights.weights)},
                                              {"target_attribute", a.weights.target_attribute},
                                              {"temperature", detail::finite_or_null(a.weights.temperature)}};
  m["reports"] = {{"privacy", optional_json(r.privacy)},
                  {"acc_before", optional_json(r.acc_before)},
                  {"acc_after", optional_json(r.acc_after)},
                  {"ssim", optional_json(r.ssim)},
                  {"baseline", optional_json(r.baseline)}};
  m["timings"] = r.timings;
  m["history"] = r.history;
  m["failure"] = r.failure ? ojson{{"stage", r.failure->stage},
                                   {"code", to_string(r.failure->code)},
                                   {"message", r.failure->message}}
                           : ojson(nullptr);
  ojson datasets = ojson::object();
  for (const std::string& name : detail::present_datasets(r)) datasets[name] = "data/" + name;
  m["datasets"] = datasets;
  ojson models = ojson::object();
  for (const auto& [name, model] : detail::present_models(r)) models[name] = "models/" + name;
  m["models"] = models;
  m["events"] = r.events.size();
  return m;
}

// Writes every artifact, appends new events, then replaces the manifest
// atomically. Stale files from earlier stages are removed.
inline void save_run(const RunRecord& r, const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(dir / "data");
  fs::create_directories(dir / "models");
  ojson artifacts = ojson::object();

  const auto datasets = detail::present_datasets(r);
  for (const auto& [name, field] : detail::dataset_fields()) {
    const fs::path d = dir / "data" / name;
    if (std::find(datasets.begin(), datasets.end(), name) == datasets.end()) {
      fs::remove_all(d);
      continue;
    }
    save_dataset(r.artifacts.*field, d);
    for (const char* file : {"images.f32", "labels.csv", "manifest.json"}) {
      const std::string rel = "data/" + name + "/" + file;
      artifacts[rel] = detail::file_hash(dir / rel);
    }
  }
  const auto models = detail::present_models(r);
  for (const auto& entry : fs::directory_iterator(dir / "models")) {
    if (!models.count(entry.path().filename().string())) fs::remove(entry.path());
  }
  for (const auto& [name, model] : models) {
    const std::string rel = "models/" + name;
    save_model(*model, (dir / rel).string());
    artifacts[rel] = detail::file_hash(dir / rel);
  }

  // events.log is append-only: write only the events not yet on disk.
  const fs::path log = dir / "events.log";
  std::size_t on_disk = 0;
  if (fs::exists(log)) {
    std::ifstream in(log);
    std::string line;
    while (std::getline(in, line)) on_disk += line.empty() ? 0 : 1;
  }
  if (on_disk > r.events.size()) {
    fs::remove(log);
    on_disk = 0;
  }
  {
    std::ofstream out(log, std::ios::app | std::ios::binary);
    for (std::size_t i = on_disk; i < r.events.size(); ++i) out << r.events[i].dump() << "\n";
  }

  ojson m = run_manifest(r);
  m["artifacts"] = artifacts;
  m["checksum"] = detail::hex64(detail::manifest_checksum(m));
  detail::write_atomic(dir / "manifest.json", m.dump(2) + "\n");
}

// Reads and verifies a manifest. NotFound if there is none; CorruptData if
// it does not parse or its checksum does not match.
inline ojson read_manifest(const std::filesystem::path& dir) {
  const std::filesystem::path path = dir / "manifest.json";
  if (!std::filesystem::exists(path)) throw NotFound("run not found: " + dir.string());
  ojson m;
  try {
    m = ojson::parse(detail::read_file(path.string()));
  } catch (const nlohmann::json::parse_error& e) {
    throw CorruptData("manifest " + path.string() + " does not parse: " + e.what());
  }
  if (!m.is_object() || !m.contains("checksum") || !m["checksum"].is_string()) {
    throw CorruptData("manifest " + path.string() + " has no checksum");
  }
  if (m["checksum"].get<std::string>() != detail::hex64(detail::manifest_checksum(m))) {
    throw CorruptData("manifest " + path.string() + " checksum mismatch");
  }
  if (m.value("format", "") != kRunFormat || m.value("version", 0) != kRunFormatVersion) {
    throw CorruptData("manifest " + path.string() + " has an unsupported format");
  }
  return m;
}

inline RunRecord load_run(const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  const ojson m = read_manifest(dir);
  try {
    for (const auto& [rel, hash] : m.at("artifacts").items()) {
      const fs::path p = dir / rel;
      if (!fs::exists(p)) throw CorruptData("run artifact missing: " + rel);
      if (detail::file_hash(p) != hash.get<std::string>()) throw CorruptData("run artifact hash mismatch: " + rel);
    }
    RunRecord r;
    r.run_id = m.at("run_id").get<std::string>();
    r.config = run_config_from_json(m.at("config"));
    r.status = run_status_from_string(m.at("status").get<std::string>());
    r.created_at = m.at("created_at").get<std::string>();
    r.updated_at = m.at("updated_at").get<std::string>();
    r.adjustments = m.at("adjustments").get<int>();
    r.models_ready = m.at("flags").at("models_ready").get<bool>();
    r.transfer_ready = m.at("flags").at("transfer_ready").get<bool>();
    RunArtifacts& a = r.artifacts;
    a.sensitive = m.at("sensitive_indices").get<std::vector<std::size_t>>();
    for (const auto& p : m.at("matching").at("pairing")) {
      a.match.pairing.push_back(p.is_null() ? std::nullopt : std::optional<std::size_t>(p.get<std::size_t>()));
    }
    a.match.unmatched = m.at("matching").at("unmatched").get<std::vector<std::size_t>>();
    if (const auto& w = m.at("weights"); !w.is_null()) {
      a.weights.weights = detail::vector_from_json(w.at("weights"));
      a.weights.target_attribute = w.at("target_attribute").get<int>();
      a.weights.temperature = detail::from_finite_or_null(w.at("temperature"), std::numeric_limits<double>::infinity());
    }
    const auto& reports = m.at("reports");
    if (!reports.at("privacy").is_null()) r.privacy = privacy_report_from_json(reports.at("privacy"));
    if (!reports.at("acc_before").is_null()) r.acc_before = eval_report_from_json(reports.at("acc_before"));
    if (!reports.at("acc_after").is_null()) r.acc_after = eval_report_from_json(reports.at("acc_after"));
    if (!reports.at("ssim").is_null()) r.ssim = ssim_summary_from_json(reports.at("ssim"));
    if (!reports.at("baseline").is_null()) r.baseline = baseline_summary_from_json(reports.at("baseline"));
    r.timings = m.at("timings");
    r.history = m.at("history");
    if (const auto& f = m.at("failure"); !f.is_null()) {
      r.failure = StageFailure{f.at("stage").get<std::string>(), error_code_from_string(f.at("code").get<std::string>()),
                               f.at("message").get<std::string>()};
    }
    for (const auto& [name, field] : detail::dataset_fields()) {
      if (m.at("datasets").contains(name)) a.*field = load_dataset(dir / "data" / name);
    }
    const auto& models = m.at("models");
    auto model = [&](const std::string& name) { return load_model((dir / "models" / name).string()); };
    if (models.contains("autoencoder.ckpt")) a.autoencoder = model("autoencoder.ckpt");
    if (models.contains("latent_classifier.ckpt")) a.latent_classifier = model("latent_classifier.ckpt");
    char name[64];
    for (std::size_t k = 0;; ++k) {
      std::snprintf(name, sizeof name, "risky_%02zu.ckpt", k);
      if (!models.contains(name)) break;
      a.risky_models.push_back(model(name));
    }
    for (std::size_t k = 0;; ++k) {
      std::snprintf(name, sizeof name, "safe_%02zu.ckpt", k);
      if (!models.contains(name)) break;
      a.safe_models.push_back(model(name));
    }
    const std::size_t expected_events = m.at("events").get<std::size_t>();
    std::ifstream in(dir / "events.log");
    std::string line;
    while (r.events.size() < expected_events && std::getline(in, line)) {
      if (!line.empty()) r.events.push_back(ojson::parse(line));
    }
    if (r.events.size() != expected_events) throw CorruptData("events.log is shorter than the manifest says");
    return r;
  } catch (const CorruptData&) {
    throw;
  } catch (const nlohmann::json::exception& e) {
    throw CorruptData("run " + dir.string() + " is malformed: " + e.what());
  } catch (const Error& e) {
    throw CorruptData("run " + dir.string() + " failed to load: " + e.what());
  }
}

// Manifest with the fields that legitimately differ between two runs of
// the same config removed.
inline ojson comparable_manifest(ojson m) {
  for (const char* key : {"created_at", "updated_at", "timings", "checksum"}) m.erase(key);
  for (auto& h : m["history"]) h.erase("timings");
  return m;
}

// ---------------------------------------------------------------------------
// Run directory registry.

class RunStore {
 public:
  explicit RunStore(std::filesystem::path root) : root_(std::move(root)) { std::filesystem::create_directories(root_); }

  const std::filesystem::path& root() const { return root_; }

  // Ids of the form run-000001, allocated in order.
  std::string allocate_id() {
    std::lock_guard<std::mutex> lock(mutex_);
    int next = 1;
    for (const auto& entry : std::filesystem::directory_iterator(root_)) {
      int n = 0;
      if (std::sscanf(entry.path().filename().string().c_str(), "run-%d", &n) == 1) next = std::max(next, n + 1);
    }
    char id[32];
    std::snprintf(id, sizeof id, "run-%06d", next);
    std::filesystem::create_directories(root_ / id);
    return id;
  }

  std::filesystem::path path(const std::string& run_id) const {
    static const std::regex valid("[A-Za-z0-9_-]{1,64}");
    if (!std::regex_match(run_id, valid)) throw NotFound("run not found: " + run_id);
    return root_ / run_id;
  }

  bool exists(const std::string& run_id) const {
    try {
      return std::filesystem::exists(path(run_id) / "manifest.json");
    } catch (const NotFound&) {
      return false;
    }
  }

  void save(const RunRecord& r) const { save_run(r, path(r.run_id)); }
  RunRecord load(const std::string& run_id) const { return load_run(path(run_id)); }
  ojson manifest(const std::string& run_id) const { return read_manifest(path(run_id)); }

  std::vector<std::string> list() const {
    std::vector<std::string> ids;
    for (const auto& entry : std::filesystem::directory_iterator(root_)) {
      if (std::filesystem::exists(entry.path() / "manifest.json")) ids.push_back(entry.path().filename().string());
    }
    std::sort(ids.begin(), ids.end());
    return ids;
  }

 private:
  std::filesystem::path root_;
  std::mutex mutex_;
};

}  // namespace latentdp
