// Copyright 2026 The hgdpo Authors
// SPDX-License-Identifier: Apache-2.0

// hgdpo: command-line driver for the curriculum pipeline.
//
// Exit codes: 0 success, 1 usage, 2 validation (config, artifacts, formats),
// 3 numeric failure (non-finite values, divergence).

#include <CLI11.hpp>
#include <cstdint>
#include <functional>
#include <iostream>
#include <map>
#include <optional>
#include <string>

#include "hgdpo/config.hpp"
#include "hgdpo/errors.hpp"
#include "hgdpo/io.hpp"
#include "hgdpo/pipeline.hpp"

namespace {

struct Common {
  std::string config;
  std::uint64_t seed = 0;
  std::string out = "out";
  bool force = false;
  bool quiet = false;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--config", c.config, "Config file (default: built-in full-scale values)");
  cmd->add_option("--seed", c.seed, "Global seed");
  cmd->add_option("--out", c.out, "Artifact directory");
  cmd->add_flag("--force", c.force, "Accept artifacts written under a different config");
  cmd->add_flag("--quiet", c.quiet, "No progress output");
}

void print_reports(const std::vector<hgdpo::StageReport>& reports) {
  for (const auto& r : reports) {
    std::cout << "# " << r.label << "\n" << hgdpo::io::report_text(r);
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Three-stage preference-optimization curriculum for a toy diffusion model"};
  app.require_subcommand(1);
  Common c;
  std::string ablate_mode;
  std::string sample_model = "hard";
  int sample_prompt = 0;
  int sample_count = 4;

  using Action = std::function<void(hgdpo::Pipeline&)>;
  std::map<CLI::App*, Action> actions;
  const auto step = [&](const std::string& name, const std::string& help, Action a) {
    CLI::App* cmd = app.add_subcommand(name, help);
    add_common(cmd, c);
    actions[cmd] = std::move(a);
    return cmd;
  };
  step("gen-data", "Render the real image set and the toy-FID reference set", [](auto& p) { p.gen_data(); });
  step("train-sft", "Train the base model with the noise-prediction loss", [](auto& p) { p.train_sft(); });
  step("build-pool", "Sample and score the per-prompt image pools", [](auto& p) { p.build_pool(); });
  step("build-easy", "Select easy-stage pairs from the pools", [](auto& p) { p.build_easy(); });
  step("train-easy", "Easy stage: DPO plus statistics matching", [](auto& p) { p.train_easy(); });
  step("build-normal", "SDRecon intermediates, windowed selection and filtering", [](auto& p) { p.build_normal(); });
  step("train-normal", "Normal stage DPO", [](auto& p) { p.train_normal(); });
  step("build-hard", "Hard-stage pairs over the filtered index set", [](auto& p) { p.build_hard(); });
  step("train-hard", "Hard stage DPO on the output half", [](auto& p) { p.train_hard(); });
  step("train-conditioner", "Conditioner adapter DPO on the easy dataset", [](auto& p) { p.train_conditioner(); });
  step("eval", "Write stage reports for every trained model", [](auto& p) { print_reports(p.eval()); });
  step("pipeline", "Run every step, then evaluate", [](auto& p) { print_reports(p.run_all()); });
  CLI::App* ablate = step("ablate", "Run an ablation mode", [&](auto& p) { print_reports(p.ablate(ablate_mode)); });
  ablate->add_option("mode", ablate_mode, "naive | e2e | skip-easy | skip-normal | sft-from-<base|easy|normal> | nostat | beta-up | n2 | lan | hard-real")
      ->required();
  CLI::App* sample = step("sample", "Write PPM samples of a trained model", [&](auto& p) {
    for (const auto& path : p.sample(sample_model, sample_prompt, sample_count)) std::cout << path.string() << "\n";
  });
  sample->add_option("--model", sample_model, "base | easy | normal | hard | conditioner");
  sample->add_option("--prompt", sample_prompt, "Prompt id");
  sample->add_option("--count", sample_count, "Number of samples");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    const hgdpo::Config cfg = c.config.empty() ? hgdpo::Config{} : hgdpo::Config::load(c.config);
    hgdpo::Pipeline pipeline(cfg, c.seed, c.out, c.force, c.quiet ? nullptr : &std::cerr);
    for (auto& [cmd, action] : actions) {
      if (cmd->parsed()) action(pipeline);
    }
  } catch (const hgdpo::NumericError& e) {
    std::cerr << "numeric error: " << e.what() << "\n";
    return 3;
  } catch (const hgdpo::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
