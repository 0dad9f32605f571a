// Copyright 2026 The hgdpo Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "hgdpo/diffusion.hpp"
#include "hgdpo/model.hpp"
#include "hgdpo/tensor.hpp"
#include "hgdpo/world.hpp"

namespace hgdpo {

enum class StageTag : std::uint8_t { kEasy = 0, kNormal = 1, kHard = 2, kNaive = 3 };

std::string to_string(StageTag tag);
std::optional<StageTag> parse_stage_tag(std::uint8_t raw);

struct PreferenceTriplet {
  int prompt = 0;
  StageTag tag = StageTag::kEasy;
  Tensor winner;
  Tensor loser;
  double winner_score = 0.0;
  double loser_score = 0.0;

  bool operator==(const PreferenceTriplet&) const = default;
};

using TripletDataset = std::vector<PreferenceTriplet>;

struct ImagePool {
  int prompt = 0;
  std::vector<Tensor> images;
  std::vector<std::uint64_t> seeds;
  std::vector<OracleScore> scores;  // empty until scored

  bool scored() const { return !images.empty() && scores.size() == images.size(); }
  std::vector<double> totals() const;
};

/// 10-level SDRecon grid plus the mid-level selection window [t_r, t_g],
/// given as 0-based positions into `levels`.
struct WindowConfig {
  std::vector<int> levels;
  std::size_t r_index = 3;
  std::size_t g_index = 6;

  /// levels t_k = round(k * T / count), k = 1..count.
  static WindowConfig scaled(int timesteps, int count = 10, std::size_t r_index = 3, std::size_t g_index = 6);
  void validate() const;
};

struct IntermediateSet {
  int prompt = 0;
  std::vector<int> levels;
  std::vector<Tensor> images;
  std::vector<OracleScore> scores;
};

/// Images of pool i for prompt p are seeded derive_seed(derive_seed(seed, p), i).
ImagePool build_pool(const NoiseModel& base, int prompt, int n, std::uint64_t seed, const SamplerConfig& sampler,
                     const NoiseSchedule& sched);
/// All prompts' pools, sampled in one batch (identical to per-prompt builds).
std::vector<ImagePool> build_pools(const NoiseModel& base, std::span<const int> prompts, int n, std::uint64_t seed,
                                   const SamplerConfig& sampler, const NoiseSchedule& sched);
void score_pool(ImagePool& pool, const PromptSpec& spec, const WorldConfig& world);

/// (argmax, argmin) with ties going to the lowest index; nullopt when every
/// score is equal.
std::optional<std::pair<std::size_t, std::size_t>> select_easy_indices(std::span<const double> scores);
std::optional<PreferenceTriplet> select_easy_pair(const ImagePool& pool);

struct EasyDataset {
  TripletDataset triplets;
  int dropped = 0;  // degenerate pools
};
EasyDataset build_easy_dataset(const std::vector<ImagePool>& pools);

/// Level k of prompt p uses noise stream derive_seed(derive_seed(seed, p), k).
std::vector<IntermediateSet> build_intermediates(const NoiseModel& base, std::span<const int> prompts,
                                                 const std::vector<Tensor>& reals, const WindowConfig& window,
                                                 std::uint64_t seed, const SamplerConfig& sampler,
                                                 const NoiseSchedule& sched);
void score_intermediates(IntermediateSet& set, const PromptSpec& spec, const WorldConfig& world);

/// Position of the best-scoring level inside the window (lowest on ties).
std::size_t select_normal_index(std::span<const double> level_scores, const WindowConfig& window);
/// Winner: best windowed intermediate; loser: the pool's best image.
PreferenceTriplet select_normal_pair(const IntermediateSet& inter, const ImagePool& pool, const WindowConfig& window);

bool keep_normal(const PreferenceTriplet& candidate);

struct NormalDataset {
  TripletDataset triplets;
  std::vector<int> kept;  // prompt ids (the index set shared with the hard stage)
};
NormalDataset filter_triplets(const TripletDataset& candidates);

enum class HardWinner { kIntermediateT1, kReal };

/// For each kept prompt: winner is its t_1 intermediate (or real image),
/// loser is its normal-stage winner.
TripletDataset build_hard_pairs(const std::vector<IntermediateSet>& inters, const NormalDataset& normal,
                                HardWinner mode = HardWinner::kIntermediateT1,
                                const std::vector<RealImage>* reals = nullptr, const std::vector<PromptSpec>* specs = nullptr,
                                const WorldConfig* world = nullptr);

enum class NaiveLoser { kBestOfPool, kRandom };

/// Winner: the prompt's real image; loser: a generated pool image.
TripletDataset build_naive_pairs(const std::vector<RealImage>& reals, const std::vector<ImagePool>& pools,
                                 const std::vector<PromptSpec>& specs, const WorldConfig& world,
                                 NaiveLoser mode = NaiveLoser::kBestOfPool, std::uint64_t seed = 0);

}  // namespace hgdpo
