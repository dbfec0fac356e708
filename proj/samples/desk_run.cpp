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

// Desk-scale walkthrough: run the pipeline from a config file, persist
// every stage, then double rho and print how privacy and utility move.
//
//   desk_run [config.json] [runs_dir]

#include <cstdio>
#include <string>

#include "latentdp/run_store.hpp"

using namespace latentdp;

namespace {

void print_summary(const char* label, const RunRecord& r) {
  const PrivacyReport& p = *r.privacy;
  std::printf("%-9s rho=%-5g RDP eps (closed form) %-10.4g conservative %-10.4g (eps, delta)-DP %-10.4g SSIM %.3f\n",
              label, r.config.ou.rho, p.paper_bound.epsilon, p.conservative_bound.epsilon, p.dp_equivalent.epsilon,
              r.ssim->mean);
  if (r.acc_after) {
    const int target = r.config.target_attribute;
    std::printf("          target ACC before %.3f after %.3f on %zu forgotten records; non-target average %.3f -> %.3f\n",
                r.acc_before->forget_target_acc.value_or(0.0), r.acc_after->forget_target_acc.value_or(0.0),
                r.acc_after->forget_count, non_target_average(*r.acc_before, target),
                non_target_average(*r.acc_after, target));
  }
}

}  // namespace

int main(int argc, char** argv) {
  const std::string config_path = argc > 1 ? argv[1] : LATENTDP_SAMPLES_DIR "/desk_run.json";
  const std::string root = argc > 2 ? argv[2] : "runs";
  try {
    const RunConfig config = load_run_config(config_path);
    RunStore store(root);
    const std::string id = store.allocate_id();
    auto save = [&](const RunRecord& r) { store.save(r); };

    RunRecord run = run_pipeline(config, id, save);
    print_summary("initial", run);

    OuParams louder = run.config.ou;
    louder.rho *= 2.0;
    adjust_privacy(run, louder, save);
    print_summary("adjusted", run);

    std::printf("run saved to %s\n", store.path(id).string().c_str());
  } catch (const Error& e) {
    std::fprintf(stderr, "%s: %s\n", to_string(e.code()), e.what());
    return 1;
  }
  return 0;
}
