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

#include "latentdp/pipeline.hpp"

#include <filesystem>
#include <fstream>
#include <sstream>

#include <gtest/gtest.h>

#include "latentdp/run_store.hpp"

namespace latentdp {
namespace {

namespace fs = std::filesystem;

RunConfig Small(std::uint64_t seed, double fraction = 0.1) {
  RunConfig c;
  c.generator.num_images = 600;
  c.test_images = 200;
  c.transfer_images = 300;
  c.latent_dim = 8;
  c.sensitive_fraction = fraction;
  c.seed = seed;
  return c;
}

fs::path TempDir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("latentdp_pipeline_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string Slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

// Everything a user reads off a run except wall-clock fields.
ojson Reports(const RunRecord& r) {
  ojson j = run_report(r);
  j.erase("timings");
  return j;
}

const RunRecord& SharedUnlearnedRun() {
  static const RunRecord r = run_pipeline(Small(11), "shared");
  return r;
}

TEST(PipelineTest, RunsAllStagesInOrder) {
  const RunRecord& r = SharedUnlearnedRun();
  EXPECT_EQ(r.status, RunStatus::kUnlearned);
  ASSERT_TRUE(r.privacy && r.ssim && r.acc_before && r.acc_after);
  EXPECT_FALSE(r.failure);
  std::vector<std::string> completed;
  for (const ojson& e : r.events) {
    if (e["event"] == "completed") completed.push_back(e["stage"].get<std::string>());
  }
  const std::vector<std::string> expected = {"risky_models", "resource_specification", "distribution_matching",
                                             "attribute_transfer", "perturb", "unlearn"};
  EXPECT_EQ(completed, expected);
  for (const auto& s : expected) EXPECT_TRUE(r.timings.contains(s)) << s;
  EXPECT_EQ(r.artifacts.risky_models.size(), 8u);
  EXPECT_EQ(r.artifacts.safe_models.size(), 8u);
  EXPECT_GT(r.artifacts.perturbed.size(), 0u);
  EXPECT_EQ(r.artifacts.perturbed.size(), r.artifacts.transferred.size());
  EXPECT_EQ(r.ssim->count, r.artifacts.perturbed.size());
}

TEST(PipelineTest, TransferPoolHoldsOnlySafeRecords) {
  const RunRecord& r = SharedUnlearnedRun();
  for (Eigen::Index i = 0; i < r.artifacts.transfer.labels.rows(); ++i) {
    EXPECT_EQ(r.artifacts.transfer.labels(i, r.config.target_attribute), 0);
  }
  for (Eigen::Index i = 0; i < r.artifacts.perturbed.labels.rows(); ++i) {
    EXPECT_EQ(r.artifacts.perturbed.labels(i, r.config.target_attribute), 0);
  }
}

TEST(PipelineTest, ZeroFractionDegenerates) {
  const RunRecord r = run_pipeline(Small(5, 0.0));
  EXPECT_EQ(r.status, RunStatus::kUnlearned);
  EXPECT_TRUE(r.artifacts.sensitive.empty());
  EXPECT_EQ(r.artifacts.transferred.size(), 0u);
  EXPECT_EQ(r.artifacts.perturbed.size(), 0u);
  EXPECT_EQ(r.artifacts.safe_models, r.artifacts.risky_models);
  ASSERT_TRUE(r.privacy);
  EXPECT_EQ(r.privacy->paper_bound.epsilon, 0.0);
  EXPECT_EQ(r.privacy->conservative_bound.epsilon, 0.0);
  EXPECT_EQ(r.privacy->dp_equivalent.epsilon, 0.0);
  EXPECT_EQ(r.privacy->params, r.config.ou);
  EXPECT_EQ(r.acc_after->test, r.acc_before->test);
  EXPECT_FALSE(r.acc_after->forget_target_acc);
}

TEST(PipelineTest, SameSeedGivesIdenticalManifests) {
  const fs::path a = TempDir("det_a"), b = TempDir("det_b");
  const RunRecord ra = run_pipeline(Small(21), "run-000001");
  const RunRecord rb = run_pipeline(Small(21), "run-000001");
  save_run(ra, a);
  save_run(rb, b);
  const ojson ma = comparable_manifest(read_manifest(a));
  const ojson mb = comparable_manifest(read_manifest(b));
  EXPECT_EQ(ma.dump(), mb.dump());
  // Artifacts are byte-identical, so their hashes agree too.
  EXPECT_EQ(ma["artifacts"], mb["artifacts"]);
  EXPECT_EQ(ra.artifacts, rb.artifacts);
}

TEST(PipelineTest, DifferentSeedsDiffer) {
  const RunRecord r = run_pipeline(Small(22));
  EXPECT_NE(r.artifacts.risky, SharedUnlearnedRun().artifacts.risky);
}

TEST(PipelineTest, StoredPrivacyEqualsRecomputation) {
  const RunRecord& r = SharedUnlearnedRun();
  const PrivacyReport again = expected_privacy_report(r.config, r.artifacts.weights, r.artifacts.perturbed.size());
  EXPECT_EQ(*r.privacy, again);
  // Also through the JSON form, digit for digit.
  const fs::path dir = TempDir("privacy");
  save_run(r, dir);
  const RunRecord loaded = load_run(dir);
  const PrivacyReport from_disk =
      expected_privacy_report(loaded.config, loaded.artifacts.weights, loaded.artifacts.perturbed.size());
  EXPECT_EQ(*loaded.privacy, from_disk);
  EXPECT_EQ(to_json(*loaded.privacy).dump(), to_json(*r.privacy).dump());
}

TEST(PipelineTest, StageOrderingIsEnforced) {
  RunRecord r = make_run(Small(3), "order");
  EXPECT_THROW(prepare_transfer(r), FailedPrecondition);
  EXPECT_THROW(perturb_stage(r), FailedPrecondition);
  EXPECT_THROW(unlearn_stage(r), FailedPrecondition);
  EXPECT_EQ(r.status, RunStatus::kCreated);
  prepare_models(r);
  EXPECT_THROW(unlearn_stage(r), FailedPrecondition);
  prepare_transfer(r);
  EXPECT_THROW(unlearn_stage(r), FailedPrecondition);  // not perturbed yet
  EXPECT_FALSE(r.acc_after);
  EXPECT_FALSE(r.failure);
  perturb_stage(r);
  unlearn_stage(r);
  EXPECT_EQ(r.status, RunStatus::kUnlearned);
}

TEST(PipelineTest, ReportsPresentOnlyAfterTheirStage) {
  RunRecord r = make_run(Small(3), "presence");
  EXPECT_FALSE(r.acc_before || r.privacy || r.ssim || r.acc_after);
  prepare_models(r);
  prepare_transfer(r);
  EXPECT_TRUE(r.acc_before);
  EXPECT_FALSE(r.privacy || r.ssim || r.acc_after);
  perturb_stage(r);
  EXPECT_TRUE(r.privacy && r.ssim);
  EXPECT_FALSE(r.acc_after);
}

TEST(PipelineTest, StageFailureIsRecorded) {
  RunConfig c = Small(4);
  c.solver.method = SolverMethod::kConjugateGradient;
  c.solver.max_iterations = 1;
  c.solver.tolerance = 1e-14;
  const fs::path dir = TempDir("failure");
  try {
    run_pipeline(c, "failing", [&](const RunRecord& rec) { save_run(rec, dir); });
    FAIL() << "expected a stage error";
  } catch (const StageError& e) {
    EXPECT_EQ(e.stage(), "unlearn");
    EXPECT_EQ(e.code(), ErrorCode::kNotConverged);
  }
  const RunRecord r = load_run(dir);
  EXPECT_EQ(r.status, RunStatus::kFailed);
  ASSERT_TRUE(r.failure);
  EXPECT_EQ(r.failure->stage, "unlearn");
  EXPECT_EQ(r.failure->code, ErrorCode::kNotConverged);
  EXPECT_EQ(r.events.back()["event"], "failed");
  EXPECT_EQ(r.events.back()["stage"], "unlearn");
  // Partial artifacts survive.
  EXPECT_TRUE(r.privacy);
  EXPECT_GT(r.artifacts.perturbed.size(), 0u);
  EXPECT_TRUE(fs::exists(dir / "data" / "perturbed" / "images.f32"));
}

TEST(PipelineTest, AdjustWithSameParamsIsIdempotent) {
  RunRecord r = SharedUnlearnedRun();
  const ojson before = Reports(r);
  adjust_privacy(r, r.config.ou);
  ASSERT_EQ(r.history.size(), 1u);
  EXPECT_EQ(r.adjustments, 1);
  EXPECT_EQ(r.status, RunStatus::kUnlearned);
  const ojson& entry = r.history[0];
  EXPECT_EQ(entry["privacy"], to_json(*r.privacy));
  EXPECT_EQ(entry["ssim"], to_json(*r.ssim));
  EXPECT_EQ(entry["acc_after"], to_json(*r.acc_after));
  ojson after = Reports(r);
  for (const char* k : {"privacy", "ssim", "acc_before", "acc_after", "params"}) EXPECT_EQ(after[k], before[k]) << k;
}

TEST(PipelineTest, DoublingRhoLowersEpsilonAndSsim) {
  RunRecord r = SharedUnlearnedRun();
  const PrivacyReport old = *r.privacy;
  const double old_ssim = r.ssim->mean;
  OuParams p = r.config.ou;
  p.rho *= 2.0;
  adjust_privacy(r, p);
  EXPECT_LT(r.privacy->paper_bound.epsilon, old.paper_bound.epsilon);
  EXPECT_LT(r.privacy->conservative_bound.epsilon, old.conservative_bound.epsilon);
  EXPECT_LT(r.privacy->dp_equivalent.epsilon, old.dp_equivalent.epsilon);
  ASSERT_EQ(r.privacy->per_step_rdp.size(), old.per_step_rdp.size());
  for (std::size_t i = 0; i < old.per_step_rdp.size(); ++i) {
    EXPECT_LT(r.privacy->per_step_rdp[i].epsilon, old.per_step_rdp[i].epsilon);
  }
  EXPECT_LE(r.ssim->mean, old_ssim);
  EXPECT_EQ(r.history.back()["privacy"], to_json(old));
}

TEST(PipelineTest, AdjustBeforePerturbationIsRejected) {
  RunRecord r = make_run(Small(3), "early");
  EXPECT_THROW(adjust_privacy(r, r.config.ou), FailedPrecondition);
  OuParams bad = SharedUnlearnedRun().config.ou;
  bad.rho = -1.0;
  RunRecord s = SharedUnlearnedRun();
  EXPECT_THROW(adjust_privacy(s, bad), InvalidArgument);
  EXPECT_TRUE(s.history.empty());
}

TEST(PipelineTest, AdjustOnPerturbedRunStaysPerturbed) {
  RunRecord r = make_run(Small(8), "perturbed");
  advance_run(r, RunStatus::kPerturbed);
  OuParams p = r.config.ou;
  p.theta = 0.2;
  adjust_privacy(r, p);
  EXPECT_EQ(r.status, RunStatus::kPerturbed);
  EXPECT_FALSE(r.acc_after);
}

TEST(PipelineTest, UnlearnMethodsCanBeSwitched) {
  RunRecord r = SharedUnlearnedRun();
  request_unlearn(r, UnlearnMethod::kRetrain, std::nullopt, std::nullopt);
  EXPECT_EQ(r.artifacts.safe_models, unlearn_models(r, UnlearnMethod::kRetrain, 1.0, r.config.solver));
  request_unlearn(r, UnlearnMethod::kFirstOrder, 1e-5, std::nullopt);
  EXPECT_EQ(r.config.method, UnlearnMethod::kFirstOrder);
  EXPECT_EQ(r.config.unlearning_rate, 1e-5);
  EXPECT_EQ(r.status, RunStatus::kUnlearned);
  EXPECT_THROW(request_unlearn(r, UnlearnMethod::kFirstOrder, -1.0, std::nullopt), InvalidArgument);
  EXPECT_EQ(r.config.unlearning_rate, 1e-5);
}

// Default desk-scale config: the second-order safe models lose accuracy on
// the target attribute of the changed records while the other attributes
// stay within two points.
TEST(PipelineTest, DefaultConfigSecondOrderForgetsTarget) {
  RunConfig c;
  c.seed = 2026;
  const RunRecord r = run_pipeline(c);
  ASSERT_EQ(r.config.method, UnlearnMethod::kSecondOrder);
  const int target = c.target_attribute;
  EXPECT_LT(*r.acc_after->forget_target_acc, *r.acc_before->forget_target_acc);
  EXPECT_LE(std::abs(non_target_average(*r.acc_after, target) - non_target_average(*r.acc_before, target)), 0.02);
  const std::vector<Model> retrained = unlearn_models(r, UnlearnMethod::kRetrain, 1.0, c.solver);
  const EvalReport oracle = evaluate_models(r, retrained);
  EXPECT_LE(std::abs(non_target_average(*r.acc_after, target) - non_target_average(oracle, target)), 0.02);
}

TEST(PipelineTest, ReplayFromManifestReproducesReports) {
  RunRecord r = SharedUnlearnedRun();
  OuParams p = r.config.ou;
  p.num_steps = 2;
  adjust_privacy(r, p);
  const fs::path dir = TempDir("replay");
  save_run(r, dir);
  const ojson m = read_manifest(dir);
  const RunRecord replay = run_pipeline(run_config_from_json(m.at("config")), r.run_id);
  ojson a = Reports(r), b = Reports(replay);
  for (const char* k : {"privacy", "ssim", "acc_before", "acc_after", "params", "perturbed_count"}) {
    EXPECT_EQ(a[k], b[k]) << k;
  }
  EXPECT_EQ(replay.artifacts.safe_models, r.artifacts.safe_models);
}

// ---------------------------------------------------------------------------
// Persistence.

TEST(PersistenceTest, SaveThenLoadIsEqual) {
  const RunRecord& r = SharedUnlearnedRun();
  const fs::path dir = TempDir("roundtrip");
  save_run(r, dir);
  const RunRecord loaded = load_run(dir);
  EXPECT_TRUE(loaded == r);
  // Byte-exact: saving the loaded record reproduces every file.
  const fs::path again = TempDir("roundtrip_again");
  save_run(loaded, again);
  for (const auto& entry : fs::recursive_directory_iterator(dir)) {
    if (!entry.is_regular_file()) continue;
    const fs::path rel = fs::relative(entry.path(), dir);
    EXPECT_EQ(Slurp(entry.path()), Slurp(again / rel)) << rel;
  }
}

TEST(PersistenceTest, RoundTripsEveryStage) {
  const fs::path dir = TempDir("stages");
  RunRecord r = make_run(Small(9), "stages");
  auto check = [&] {
    save_run(r, dir);
    EXPECT_TRUE(load_run(dir) == r) << to_string(r.status);
  };
  check();
  prepare_models(r);
  check();
  prepare_transfer(r);
  check();
  perturb_stage(r);
  check();
  unlearn_stage(r);
  check();
}

TEST(PersistenceTest, EventLogIsAppendOnly) {
  RunRecord r = SharedUnlearnedRun();
  const fs::path dir = TempDir("events");
  save_run(r, dir);
  const std::string before = Slurp(dir / "events.log");
  adjust_privacy(r, r.config.ou, [&](const RunRecord& rec) { save_run(rec, dir); });
  const std::string after = Slurp(dir / "events.log");
  ASSERT_GT(after.size(), before.size());
  EXPECT_EQ(after.substr(0, before.size()), before);
  std::istringstream lines(after);
  std::string line;
  std::size_t count = 0;
  while (std::getline(lines, line)) {
    ojson parsed;
    EXPECT_NO_THROW(parsed = ojson::parse(line));
    ++count;
  }
  EXPECT_EQ(count, r.events.size());
}

TEST(PersistenceTest, MissingRunIsNotFound) {
  EXPECT_THROW(load_run(TempDir("empty")), NotFound);
  EXPECT_THROW(load_run(fs::temp_directory_path() / "latentdp_pipeline_never_created"), NotFound);
  RunStore store(TempDir("store_missing"));
  EXPECT_THROW(store.load("run-000042"), NotFound);
  EXPECT_THROW(store.load("../etc"), NotFound);
}

TEST(PersistenceTest, FlippedChecksumByteIsCorrupt) {
  const fs::path dir = TempDir("checksum");
  save_run(SharedUnlearnedRun(), dir);
  std::string text = Slurp(dir / "manifest.json");
  const std::size_t at = text.find("\"checksum\": \"") + 13;
  text[at] = text[at] == '0' ? '1' : '0';
  std::ofstream(dir / "manifest.json", std::ios::binary) << text;
  try {
    load_run(dir);
    FAIL() << "expected CorruptData";
  } catch (const CorruptData& e) {
    EXPECT_NE(std::string(e.what()).find("checksum"), std::string::npos);
  }
}

TEST(PersistenceTest, EditedManifestIsCorrupt) {
  const fs::path dir = TempDir("edited");
  save_run(SharedUnlearnedRun(), dir);
  std::string text = Slurp(dir / "manifest.json");
  const std::size_t at = text.find("\"adjustments\": 0");
  ASSERT_NE(at, std::string::npos);
  text[at + 15] = '7';
  std::ofstream(dir / "manifest.json", std::ios::binary) << text;
  EXPECT_THROW(load_run(dir), CorruptData);
}

TEST(PersistenceTest, TamperedArtifactIsCorrupt) {
  const fs::path dir = TempDir("tampered");
  save_run(SharedUnlearnedRun(), dir);
  {
    std::fstream f(dir / "models" / "safe_00.ckpt", std::ios::in | std::ios::out | std::ios::binary);
    f.seekp(40);
    f.put('\x7f');
  }
  EXPECT_THROW(load_run(dir), CorruptData);
  fs::remove(dir / "models" / "safe_00.ckpt");
  EXPECT_THROW(load_run(dir), CorruptData);
}

TEST(PersistenceTest, UnparseableManifestIsCorrupt) {
  const fs::path dir = TempDir("garbage");
  std::ofstream(dir / "manifest.json") << "{ not json";
  EXPECT_THROW(load_run(dir), CorruptData);
}

TEST(PersistenceTest, StoreAllocatesSequentialIds) {
  RunStore store(TempDir("store_ids"));
  EXPECT_EQ(store.allocate_id(), "run-000001");
  EXPECT_EQ(store.allocate_id(), "run-000002");
  EXPECT_FALSE(store.exists("run-000001"));  // no manifest yet
}

// ---------------------------------------------------------------------------
// Config JSON.

TEST(ConfigJsonTest, RoundTrips) {
  RunConfig c = Small(77);
  c.baseline = BaselineMethod::kMosaic;
  c.method = UnlearnMethod::kRetrain;
  c.solver.method = SolverMethod::kConjugateGradient;
  EXPECT_EQ(run_config_from_json(to_json(c)), c);
}

TEST(ConfigJsonTest, PartialConfigKeepsDefaults) {
  const RunConfig c = run_config_from_json(nlohmann::json::parse(R"({"seed": 5, "ou": {"rho": 2.5}})"));
  RunConfig expected;
  expected.seed = 5;
  expected.ou.rho = 2.5;
  EXPECT_EQ(c, expected);
}

TEST(ConfigJsonTest, RejectsUnknownKeysAndBadValues) {
  EXPECT_THROW(run_config_from_json(nlohmann::json::parse(R"({"sead": 5})")), InvalidArgument);
  EXPECT_THROW(run_config_from_json(nlohmann::json::parse(R"({"ou": {"sigma": 1}})")), InvalidArgument);
  EXPECT_THROW(run_config_from_json(nlohmann::json::parse(R"({"ou": {"rho": -1}})")), InvalidArgument);
  EXPECT_THROW(run_config_from_json(nlohmann::json::parse(R"({"seed": "x"})")), InvalidArgument);
  EXPECT_THROW(run_config_from_json(nlohmann::json::parse(R"({"method": "magic"})")), InvalidArgument);
  EXPECT_THROW(run_config_from_json(nlohmann::json::parse(R"({"sensitive_fraction": 1.5})")), InvalidArgument);
  EXPECT_THROW(run_config_from_json(nlohmann::json::parse(R"([1, 2])")), InvalidArgument);
}

TEST(ConfigJsonTest, SampleConfigParses) {
  const fs::path sample = fs::path(LATENTDP_SOURCE_DIR) / "samples" / "desk_run.json";
  const RunConfig c = load_run_config(sample);
  EXPECT_EQ(c.generator.num_attributes, 8);
}

}  // namespace
}  // namespace latentdp
