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

// latentdp command-line interface.

#include <cstdio>
#include <csignal>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "latentdp/bench.hpp"
#include "latentdp/http_server.hpp"

namespace {

using namespace latentdp;

struct Common {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out = "runs";
  std::string format = "table";
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--config", c.config_path, "JSON run config (partial configs are filled with defaults)");
  cmd->add_option("--seed", c.seed, "master seed (overrides the config)");
  cmd->add_option("--out", c.out, "output directory")->capture_default_str();
  cmd->add_option("--format", c.format, "report format")->check(CLI::IsMember({"json", "table"}))->capture_default_str();
}

RunConfig resolve_config(const Common& c) {
  RunConfig config = c.config_path.empty() ? RunConfig{} : load_run_config(c.config_path);
  if (c.seed) config.seed = *c.seed;
  config.validate();
  return config;
}

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

void print_eval(const char* label, const ojson& e) {
  if (e.is_null()) return;
  std::cout << label << ": average ACC " << fmt(e["test"]["average"].get<double>());
  if (!e["forget_target_acc"].is_null()) {
    std::cout << ", target ACC on changed records " << fmt(e["forget_target_acc"].get<double>());
  }
  std::cout << "\n  per attribute:";
  for (const auto& v : e["test"]["per_attribute"]) std::cout << ' ' << fmt(v.get<double>());
  std::cout << "\n";
}

void print_report(const ojson& report, const std::string& format) {
  if (format == "json") {
    std::cout << report.dump(2) << "\n";
    return;
  }
  std::cout << "run " << report["run_id"].get<std::string>() << "  status " << report["status"].get<std::string>()
            << "  adjustments " << report["adjustments"].get<int>() << "\n";
  const ojson& p = report["params"];
  std::cout << "OU params: theta " << fmt(p["theta"].get<double>()) << ", rho " << fmt(p["rho"].get<double>())
            << ", T " << p["num_steps"].get<int>() << ", t " << fmt(p["step_time"].get<double>()) << ", C "
            << fmt(p["clip_bound"].get<double>()) << "\n";
  if (!report["privacy"].is_null()) {
    const ojson& pr = report["privacy"];
    std::cout << "privacy (alpha " << fmt(pr["alpha"].get<double>()) << ", delta " << fmt(pr["delta"].get<double>())
              << "): RDP eps closed-form " << fmt(pr["paper_bound"]["epsilon"].get<double>()) << ", conservative "
              << fmt(pr["conservative_bound"]["epsilon"].get<double>()) << ", (eps, delta)-DP "
              << fmt(pr["dp_equivalent"]["epsilon"].get<double>()) << "\n";
  }
  if (!report["ssim"].is_null()) {
    const ojson& s = report["ssim"];
    std::cout << "SSIM(original, perturbed): mean " << fmt(s["mean"].get<double>()) << ", min "
              << fmt(s["min"].get<double>()) << ", max " << fmt(s["max"].get<double>()) << " over "
              << s["count"].get<std::size_t>() << " images\n";
  }
  print_eval("before unlearning", report["acc_before"]);
  if (!report["acc_after"].is_null()) {
    std::cout << "method " << report["method"].get<std::string>() << "\n";
    print_eval("after unlearning", report["acc_after"]);
  }
  if (report.contains("failure")) {
    std::cout << "FAILED in stage " << report["failure"]["stage"].get<std::string>() << ": "
              << report["failure"]["message"].get<std::string>() << "\n";
  }
}

int report_error(const Error& e) {
  ojson body = {{"code", to_string(e.code())}, {"message", e.what()}};
  if (const auto* s = dynamic_cast<const StageError*>(&e)) body["stage"] = s->stage();
  std::cerr << body.dump() << "\n";
  return e.code() == ErrorCode::kInvalidArgument ? 2 : 1;
}

HttpServer* g_server = nullptr;
void on_signal(int) {
  if (g_server) g_server->stop();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"latentdp: latent-space differential privacy and machine unlearning"};
  app.require_subcommand(1);

  Common common;
  std::string run_id;
  std::optional<double> theta, rho, step_time, clip;
  std::optional<int> steps;
  std::string method = "second_order";
  std::optional<double> eta;
  std::string host = "127.0.0.1";
  int port = 8080;
  TimingBenchConfig bench;

  auto* gen = app.add_subcommand("gen-data", "generate the risky, test and transfer datasets");
  add_common(gen, common);
  auto* trn = app.add_subcommand("train", "create a run and train the risky models");
  add_common(trn, common);
  auto* per = app.add_subcommand("perturb", "transfer and perturb (or re-perturb with new OU parameters)");
  add_common(per, common);
  per->add_option("--run", run_id, "run id")->required();
  per->add_option("--theta", theta, "mean-reversion rate");
  per->add_option("--rho", rho, "diffusion scale");
  per->add_option("--steps", steps, "iterations T");
  per->add_option("--step-time", step_time, "OU time per iteration");
  per->add_option("--clip", clip, "latent clip bound C");
  auto* unl = app.add_subcommand("unlearn", "update the risky models to forget the changed records");
  add_common(unl, common);
  unl->add_option("--run", run_id, "run id")->required();
  unl->add_option("--method", method, "first_order, second_order or retrain")
      ->check(CLI::IsMember({"first_order", "second_order", "retrain"}))
      ->capture_default_str();
  unl->add_option("--eta", eta, "first-order unlearning rate");
  auto* eva = app.add_subcommand("evaluate", "print a run's report");
  add_common(eva, common);
  eva->add_option("--run", run_id, "run id")->required();
  auto* run = app.add_subcommand("run", "full pipeline");
  add_common(run, common);
  auto* ben = app.add_subcommand("bench", "unlearning timing table");
  add_common(ben, common);
  ben->add_option("--records", bench.records)->capture_default_str();
  ben->add_option("--features", bench.features)->capture_default_str();
  ben->add_option("--fraction", bench.replace_fraction, "fraction of records replaced")->capture_default_str();
  ben->add_option("--runs", bench.runs, "median over this many timings")->capture_default_str();
  auto* srv = app.add_subcommand("serve", "HTTP API over the run directory --out");
  add_common(srv, common);
  srv->add_option("--host", host)->capture_default_str();
  srv->add_option("--port", port, "0 picks a free port")->capture_default_str();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*gen) {
      const RunConfig config = resolve_config(common);
      RunRecord r = make_run(config, "gen-data");
      prepare_models(r);
      const std::filesystem::path out(common.out);
      save_dataset(r.artifacts.risky, out / "risky");
      save_dataset(r.artifacts.test, out / "test");
      save_dataset(r.artifacts.transfer, out / "transfer");
      ojson summary = {{"out", common.out},
                       {"risky", r.artifacts.risky.size()},
                       {"test", r.artifacts.test.size()},
                       {"transfer", r.artifacts.transfer.size()}};
      std::cout << (common.format == "json" ? summary.dump(2) : summary.dump()) << "\n";
      return 0;
    }
    if (*ben) {
      if (common.seed) bench.seed = *common.seed;
      const TimingBenchResult b = benchmark_unlearning_timing(bench);
      ojson j = {{"records", bench.records},
                 {"parameters", b.parameters},
                 {"replaced", b.replaced},
                 {"seconds",
                  {{"first_order", b.first_order_seconds},
                   {"second_order", b.second_order_seconds},
                   {"retrain", b.retrain_seconds}}},
                 {"distance_to_retrain", {{"first_order", b.first_order_distance}, {"second_order", b.second_order_distance}}}};
      if (common.format == "json") {
        std::cout << j.dump(2) << "\n";
      } else {
        std::printf("%-14s %12s %18s\n", "method", "seconds", "|w - w_retrain|");
        std::printf("%-14s %12.6f %18.3e\n", "first_order", b.first_order_seconds, b.first_order_distance);
        std::printf("%-14s %12.6f %18.3e\n", "second_order", b.second_order_seconds, b.second_order_distance);
        std::printf("%-14s %12.6f %18s\n", "retrain", b.retrain_seconds, "0");
      }
      return 0;
    }

    RunStore store(common.out);
    const StageCallback save = [&](const RunRecord& rec) { store.save(rec); };
    if (*trn || *run) {
      RunRecord r = make_run(resolve_config(common), store.allocate_id());
      save(r);
      if (*trn) {
        prepare_models(r);
        save(r);
      } else {
        advance_run(r, RunStatus::kUnlearned, save);
      }
      print_report(run_report(r), common.format);
      return 0;
    }
    if (*per) {
      RunRecord r = store.load(run_id);
      OuParams p = r.config.ou;
      if (theta) p.theta = *theta;
      if (rho) p.rho = *rho;
      if (steps) p.num_steps = *steps;
      if (step_time) p.step_time = *step_time;
      if (clip) p.clip_bound = *clip;
      if (r.status == RunStatus::kPerturbed || r.status == RunStatus::kUnlearned) {
        adjust_privacy(r, p, save);
      } else {
        p.validate();
        r.config.ou = p;
        advance_run(r, RunStatus::kPerturbed, save);
      }
      print_report(run_report(r), common.format);
      return 0;
    }
    if (*unl) {
      RunRecord r = store.load(run_id);
      request_unlearn(r, unlearn_method_from_string(method), eta, std::nullopt, save);
      print_report(run_report(r), common.format);
      return 0;
    }
    if (*eva) {
      print_report(run_report(store.load(run_id)), common.format);
      return 0;
    }
    if (*srv) {
      HttpServer server(common.out);
      const int bound = server.bind(host, port);
      g_server = &server;
      std::signal(SIGINT, on_signal);
      std::signal(SIGTERM, on_signal);
      std::cout << "listening on http://" << host << ":" << bound << "\n" << std::flush;
      server.listen_after_bind();
      return 0;
    }
  } catch (const Error& e) {
    return report_error(e);
  } catch (const std::exception& e) {
    std::cerr << ojson{{"code", "internal"}, {"message", e.what()}}.dump() << "\n";
    return 1;
  }
  return 0;
}
