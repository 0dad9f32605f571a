// Copyright 2026 The hgdpo Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "hgdpo/config.hpp"
#include "hgdpo/forge.hpp"
#include "hgdpo/metrics.hpp"
#include "hgdpo/model.hpp"
#include "hgdpo/trainer.hpp"
#include "hgdpo/world.hpp"

namespace hgdpo {

namespace fs = std::filesystem;

/// Artifact-directory driver. Every step reads only files written by earlier
/// steps, writes its outputs atomically, and then drops a completion marker;
/// a finished step is skipped on rerun, which makes runs resumable.
class Pipeline {
 public:
  /// Creates (or re-opens) `out`. An existing directory whose manifest carries
  /// a different config hash or seed is refused unless `force`.
  Pipeline(Config cfg, std::uint64_t seed, fs::path out, bool force = false, std::ostream* log = nullptr);

  void gen_data();
  void train_sft();
  void build_pool();
  void build_easy();
  void train_easy();
  void build_normal();
  void build_hard();
  void train_normal();
  void train_hard();
  void train_conditioner();
  /// Reports for every trained model found in the directory.
  std::vector<StageReport> eval();
  /// All steps above in order.
  std::vector<StageReport> run_all();

  /// Modes: naive, e2e, skip-easy, skip-normal, sft-from-{base,easy,normal},
  /// nostat, beta-up, n2, lan, hard-real. Missing prerequisites are built.
  std::vector<StageReport> ablate(const std::string& mode);
  static std::vector<std::string> ablation_modes();

  /// Writes `count` PPM samples of a model ("base", "easy", "normal", "hard",
  /// "conditioner") for `prompt` into out/samples; returns the paths.
  std::vector<fs::path> sample(const std::string& model, int prompt, int count);

  const fs::path& out() const { return out_; }
  const Config& config() const { return cfg_; }

 private:
  bool done(const std::string& step) const;
  void mark(const std::string& step);
  void require(const std::string& step, const std::string& producer) const;
  void log(const std::string& msg) const;

  std::vector<PromptSpec> prompts() const;
  std::vector<RealImage> load_reals() const;
  std::vector<Tensor> load_eval_reals() const;
  std::vector<ImagePool> load_pools() const;
  std::vector<IntermediateSet> load_intermediates() const;
  ModelState load_model(const fs::path& path) const;
  void save_model(const fs::path& path, const ModelState& state) const;
  void save_trace(const std::string& name, const TrainingRun& run) const;
  std::uint64_t step_seed(std::uint64_t step) const;

  struct EvalResources;
  EvalResources eval_resources();
  StageReport evaluate(const std::string& label, const ModelState& state, bool conditioner_adapter, EvalResources& res,
                       const fs::path& report_dir, const ModelState* lan_base = nullptr);

  void train_dpo_step(const std::string& step, const std::string& from, const std::string& dataset, Stage stage,
                      const std::string& to);

  Config cfg_;
  std::uint64_t seed_;
  fs::path out_;
  bool force_;
  std::ostream* log_;
};

}  // namespace hgdpo
