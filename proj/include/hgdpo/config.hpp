// Copyright 2026 The hgdpo Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>

#include "hgdpo/adam.hpp"
#include "hgdpo/diffusion.hpp"
#include "hgdpo/forge.hpp"
#include "hgdpo/losses.hpp"
#include "hgdpo/model.hpp"
#include "hgdpo/world.hpp"

namespace hgdpo {

enum class ReferenceKind { kStageStart, kBase };
enum class AdapterScope { kAllBlocks, kOutputHalf };

struct StageSettings {
  int steps = 0;
  int batch = 16;
  double lr = 1e-3;
};

/// Every tunable of a run. Defaults are the full-scale values; configs/toy.cfg
/// holds the desk-scale variant used by the acceptance runs.
struct Config {
  WorldConfig world;

  int timesteps = 1000;
  double beta_min = 1e-4;
  double beta_max = 0.02;

  std::size_t hidden = 256;
  std::size_t blocks = 4;
  std::size_t time_dim = 32;
  std::size_t cond_dim = 16;
  std::size_t denoiser_rank = 8;
  std::size_t conditioner_rank = 64;
  double merge_weight = 0.5;
  /// Conditioner adapter is active for t >= gate * T.
  double conditioner_gate = 0.9;

  int sampler_steps = 1000;
  double guidance = 5.0;
  SamplerKind sampler_kind = SamplerKind::kAncestral;
  double eta = 0.0;

  DpoConfig dpo;
  ReferenceKind reference = ReferenceKind::kStageStart;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;

  int pool_size = 20;
  int levels = 10;
  int window_lo = 4;  // 1-based level index of t_r
  int window_hi = 7;  // 1-based level index of t_g
  HardWinner hard_winner = HardWinner::kIntermediateT1;
  NaiveLoser naive_loser = NaiveLoser::kBestOfPool;

  StageSettings sft{3000, 16, 1e-3};
  StageSettings easy{1500, 16, 1e-3};
  StageSettings normal{500, 16, 1e-3};
  StageSettings hard{500, 16, 1e-3};
  StageSettings conditioner{300, 16, 1e-3};
  StatConfig stat;  // easy stage only
  AdapterScope hard_scope = AdapterScope::kOutputHalf;

  int eval_samples = 64;
  std::size_t fid_dim = 16;
  std::uint64_t fid_seed = 0x5eed;

  NoiseSchedule schedule() const;
  SamplerConfig sampler() const;
  DenoiserConfig denoiser() const;
  WindowConfig window() const;
  AdamConfig adam(double lr) const;
  int conditioner_gate_lo() const;

  /// Checks ranges and cross-field constraints; throws ValidationError.
  void validate() const;
  /// Canonical text: every key, in a fixed order, full precision.
  std::string to_text() const;
  /// FNV-1a 64 over to_text().
  std::uint64_t hash() const;

  /// Strict parse: INI sections, `key = value`, '#' comments. Every key must
  /// appear exactly once; unknown keys are rejected. Throws ValidationError
  /// naming the offending key.
  static Config parse(std::string_view text);
  static Config load(const std::filesystem::path& path);
};

}  // namespace hgdpo
