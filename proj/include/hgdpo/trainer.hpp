// Copyright 2026 The hgdpo Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "hgdpo/config.hpp"
#include "hgdpo/forge.hpp"
#include "hgdpo/model.hpp"
#include "hgdpo/world.hpp"

namespace hgdpo {

enum class Stage { kSft, kEasy, kNormal, kHard, kConditioner, kNaive, kE2e, kSftAdapter };

std::string to_string(Stage stage);

struct TrainingRun {
  Stage stage = Stage::kSft;
  std::vector<double> loss_trace;
};

/// Untrained base denoiser, conditioner and a zero-initialized adapter.
ModelState init_model(const Config& cfg, std::uint64_t seed);

/// Copy of `state` with the inference merge weight applied to both adapters.
ModelState inference_state(const ModelState& state, const Config& cfg);

/// Probability of replacing a prompt by the null condition during SFT.
inline constexpr double kConditionDropout = 0.1;

/// Full-model noise-prediction training on real images (no adapters).
TrainingRun train_sft(ModelState& state, const std::vector<RealImage>& data, const Config& cfg, std::uint64_t seed);

/// One DPO stage on the denoiser adapter. The reference is a snapshot taken
/// on entry (or the base model, per cfg.reference). Easy applies the
/// statistics term; hard trains only the output half when so configured;
/// e2e draws each item from a uniformly chosen source dataset. Naive and e2e
/// run for the summed easy + normal + hard step budget.
TrainingRun train_stage(ModelState& state, const TripletDataset& data, Stage stage, const Config& cfg,
                        std::uint64_t seed);

/// Conditioner adapter only, plain DPO on the easy dataset against the
/// current model with its conditioner adapter disabled.
TrainingRun train_conditioner(ModelState& state, const TripletDataset& easy, const Config& cfg, std::uint64_t seed);

/// Denoiser adapter trained with the noise-prediction loss on the winners of
/// `data` (hard-stage winners for the SFT-from-stage ablations).
TrainingRun train_sft_adapter(ModelState& state, const TripletDataset& data, const Config& cfg, std::uint64_t seed);

}  // namespace hgdpo
