// Copyright 2026 The hgdpo Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <climits>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "hgdpo/autodiff.hpp"
#include "hgdpo/tensor.hpp"

namespace hgdpo {

inline constexpr int kNullPrompt = -1;

struct DenoiserConfig {
  std::size_t channels = 3;
  std::size_t height = 16;
  std::size_t width = 16;
  std::size_t hidden = 256;
  std::size_t blocks = 4;
  std::size_t time_dim = 32;
  std::size_t cond_dim = 16;
  /// Diffusion length; time features are computed on t * 1000 / timesteps.
  std::size_t timesteps = 1000;

  std::size_t image_size() const { return channels * height * width; }
  Shape image_shape() const { return {channels, height, width}; }
};

/// y = x * weight + bias with weight stored [in, out] (row-vector convention).
struct LinearLayer {
  ad::Parameter weight;
  ad::Parameter bias;
  std::size_t in() const { return weight.value.dim(0); }
  std::size_t out() const { return weight.value.dim(1); }
};

enum class BlockScope { kAll, kOutputHalf };

/// Rank-r factor pair for one affine layer. In the column-vector convention
/// the delta is B*A with A [r x in] and B [out x r]; here both are stored
/// transposed to match LinearLayer, so the delta on `weight` is down * up.
struct AdapterLayer {
  ad::Parameter down;  // A^T: [in, r]
  ad::Parameter up;    // B^T: [r, out]
};

/// Low-rank adapter over every affine layer of a Denoiser.
///
/// Effective weight of layer i is W_i + weight * down_i * up_i while the
/// adapter is active: the layer lies in `active_blocks` and the query
/// timestep is in [t_lo, t_hi). Outside that the frozen W_i is used.
struct LowRankAdapter {
  std::size_t rank = 8;
  double weight = 1.0;
  int t_lo = 0;
  int t_hi = INT_MAX;
  BlockScope active_blocks = BlockScope::kAll;
  std::vector<AdapterLayer> layers;

  bool active_at(int t) const { return t >= t_lo && t < t_hi; }
};

class Denoiser;

/// Fresh adapter: `down` ~ N(0, 1/in), `up` = 0, so it starts as a no-op.
LowRankAdapter make_adapter(const Denoiser& model, std::size_t rank, std::uint64_t seed);

/// Prompt-id -> condition vector, with a reserved null row for guidance and
/// a rank-r adapter on the table projection (one-hot prompt -> embedding).
class Conditioner {
 public:
  Conditioner() = default;
  static Conditioner create(std::size_t num_prompts, std::size_t cond_dim, std::size_t adapter_rank,
                            std::uint64_t seed);

  std::size_t num_prompts() const { return table.value.dim(0); }
  std::size_t dim() const { return table.value.dim(1); }

  ad::Parameter table;     // [P, d_c]
  ad::Parameter null_row;  // [1, d_c]
  AdapterLayer adapter;    // down [P, r], up [r, d_c]
  std::size_t adapter_rank = 64;
  double adapter_weight = 1.0;
  int adapter_t_lo = 0;
  int adapter_t_hi = INT_MAX;

  struct Bind {
    bool train_table = false;
    bool train_adapter = false;
    bool use_adapter = false;
  };

  /// Condition vectors [B, d_c]. Rows with prompt kNullPrompt get the null
  /// row and never the adapter; other rows get the adapter only if
  /// bind.use_adapter and their timestep is inside the adapter's range.
  ad::Var embed(ad::Graph& g, std::span<const int> prompts, std::span<const int> t, const Bind& bind);
  ad::Var embed(ad::Graph& g, std::span<const int> prompts, std::span<const int> t, bool use_adapter) const;

  std::vector<ad::Parameter*> base_parameters();
  std::vector<ad::Parameter*> adapter_parameters();
};

/// Conditional noise predictor eps(x_t, t, c): a residual MLP over the
/// flattened image plus a scalar input skip, out_proj(h) + s(t) * x_t with
/// s affine in the time features. Layer order: in_proj([x, c]),
/// time_proj(sinusoid(t)), `blocks` residual blocks, out_proj. The first half
/// of the residual blocks (plus both input projections) is the input half;
/// the rest plus out_proj is the output half. The skip is not an adapted
/// layer.
class Denoiser {
 public:
  Denoiser() = default;
  static Denoiser create(const DenoiserConfig& cfg, std::uint64_t seed);

  const DenoiserConfig& config() const { return cfg_; }
  std::vector<LinearLayer>& layers() { return layers_; }
  const std::vector<LinearLayer>& layers() const { return layers_; }
  LinearLayer& skip() { return skip_; }
  const LinearLayer& skip() const { return skip_; }
  std::vector<ad::Parameter*> parameters();

  static constexpr std::size_t kInProj = 0;
  static constexpr std::size_t kTimeProj = 1;
  std::size_t block_layer(std::size_t block) const { return 2 + block; }
  std::size_t out_layer() const { return 2 + cfg_.blocks; }
  bool in_output_half(std::size_t layer) const;
  std::string layer_name(std::size_t layer) const;

  struct Bind {
    bool train_weights = false;
    const LowRankAdapter* adapter = nullptr;
    /// Adapter parameters receive gradients for layers in this scope.
    LowRankAdapter* train_adapter = nullptr;
    BlockScope train_scope = BlockScope::kAll;
    /// When set, receives the hidden state after each residual block.
    std::vector<Tensor>* block_outputs = nullptr;
  };

  /// x: [B, C, H, W] (or [B, C*H*W]); t: one timestep per row; cond: [B, d_c].
  /// Returns predicted noise with x's shape.
  ad::Var forward(ad::Graph& g, ad::Var x, std::span<const int> t, ad::Var cond, const Bind& bind);
  ad::Var forward(ad::Graph& g, ad::Var x, std::span<const int> t, ad::Var cond,
                  const LowRankAdapter* adapter = nullptr, std::vector<Tensor>* block_outputs = nullptr) const;

  /// Sinusoidal time features [B, time_dim].
  Tensor time_features(std::span<const int> t) const;

 private:
  DenoiserConfig cfg_;
  std::vector<LinearLayer> layers_;
  LinearLayer skip_;
};

/// Returns a copy of `model` with w * down * up folded into every layer the
/// adapter covers (timestep gating is not part of a merge).
Denoiser merge_adapter(const Denoiser& model, const LowRankAdapter& adapter, double w);

/// Read-only view of a noise predictor for inference.
struct NoiseModel {
  const Denoiser* denoiser = nullptr;
  const LowRankAdapter* adapter = nullptr;
  const Conditioner* conditioner = nullptr;
  bool conditioner_adapter = false;
};

/// Inference-mode prediction [B, C, H, W].
Tensor predict_noise(const NoiseModel& model, const Tensor& x, std::span<const int> t, std::span<const int> prompts);

/// Everything a curriculum stage reads or writes: the frozen base, the one
/// persistent denoiser adapter, and the conditioner.
struct ModelState {
  Denoiser denoiser;
  LowRankAdapter adapter;
  Conditioner conditioner;
  bool has_adapter = false;

  NoiseModel view(bool conditioner_adapter = false) const {
    return NoiseModel{&denoiser, has_adapter ? &adapter : nullptr, &conditioner, conditioner_adapter};
  }
};

/// Deep copy used as a frozen reference; later training of the source never
/// touches it.
inline const ModelState snapshot(const ModelState& state) { return state; }

}  // namespace hgdpo
