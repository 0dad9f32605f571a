// Copyright 2026 The hgdpo Authors
// SPDX-License-Identifier: Apache-2.0

#include "hgdpo/model.hpp"

#include <cmath>

#include "hgdpo/errors.hpp"
#include "hgdpo/kernels.hpp"
#include "hgdpo/rng.hpp"

namespace hgdpo {

namespace {

LinearLayer make_linear(const std::string& name, std::size_t in, std::size_t out, double gain, RngStream& rng) {
  Tensor w({in, out});
  const double s = gain / std::sqrt(static_cast<double>(in));
  for (auto& v : w.data()) v = s * rng.normal();
  return LinearLayer{ad::Parameter(name + ".weight", std::move(w)), ad::Parameter(name + ".bias", Tensor({out}, 0.0))};
}

AdapterLayer make_adapter_layer(const std::string& name, std::size_t in, std::size_t out, std::size_t rank,
                                RngStream& rng) {
  Tensor down({in, rank});
  const double s = 1.0 / std::sqrt(static_cast<double>(in));
  for (auto& v : down.data()) v = s * rng.normal();
  return AdapterLayer{ad::Parameter(name + ".down", std::move(down)), ad::Parameter(name + ".up", Tensor({rank, out}, 0.0))};
}

std::vector<double> gate_rows(std::span<const int> t, int lo, int hi, double weight) {
  std::vector<double> g(t.size());
  for (std::size_t i = 0; i < t.size(); ++i) g[i] = (t[i] >= lo && t[i] < hi) ? weight : 0.0;
  return g;
}

bool any_nonzero(const std::vector<double>& v) {
  for (double x : v) {
    if (x != 0.0) return true;
  }
  return false;
}

ad::Var bind_param(ad::Graph& g, ad::Parameter& p, bool trainable) {
  return trainable ? g.parameter(p) : g.external(p.value);
}

}  // namespace

LowRankAdapter make_adapter(const Denoiser& model, std::size_t rank, std::uint64_t seed) {
  RngStream rng(seed);
  LowRankAdapter a;
  a.rank = rank;
  for (std::size_t i = 0; i < model.layers().size(); ++i) {
    const auto& l = model.layers()[i];
    a.layers.push_back(make_adapter_layer("adapter." + model.layer_name(i), l.in(), l.out(), rank, rng));
  }
  return a;
}

Conditioner Conditioner::create(std::size_t num_prompts, std::size_t cond_dim, std::size_t adapter_rank,
                                std::uint64_t seed) {
  RngStream rng(seed);
  Conditioner c;
  Tensor table({num_prompts, cond_dim});
  rng.fill_normal(table.data());
  c.table = ad::Parameter("conditioner.table", std::move(table));
  c.null_row = ad::Parameter("conditioner.null", Tensor({1, cond_dim}, 0.0));
  c.adapter = make_adapter_layer("conditioner.adapter", num_prompts, cond_dim, adapter_rank, rng);
  c.adapter_rank = adapter_rank;
  return c;
}

ad::Var Conditioner::embed(ad::Graph& g, std::span<const int> prompts, std::span<const int> t, const Bind& bind) {
  if (t.size() != prompts.size()) throw ShapeError("Conditioner::embed: prompts/timesteps length mismatch");
  const std::size_t rows = prompts.size(), p = num_prompts();
  Tensor onehot({rows, p}, 0.0);
  Tensor nullmask({rows, 1}, 0.0);
  for (std::size_t r = 0; r < rows; ++r) {
    if (prompts[r] == kNullPrompt) {
      nullmask[r] = 1.0;
    } else {
      if (prompts[r] < 0 || static_cast<std::size_t>(prompts[r]) >= p) {
        throw ValidationError("Conditioner::embed: prompt id " + std::to_string(prompts[r]) + " out of range");
      }
      onehot.at(r, static_cast<std::size_t>(prompts[r])) = 1.0;
    }
  }
  ad::Var oh = g.constant(std::move(onehot));
  ad::Var e = ad::add(ad::matmul(oh, bind_param(g, table, bind.train_table)),
                      ad::matmul(g.constant(std::move(nullmask)), bind_param(g, null_row, bind.train_table)));
  if (bind.use_adapter) {
    auto gate = gate_rows(t, adapter_t_lo, adapter_t_hi, adapter_weight);
    if (any_nonzero(gate)) {
      ad::Var delta = ad::matmul(ad::matmul(oh, bind_param(g, adapter.down, bind.train_adapter)),
                                 bind_param(g, adapter.up, bind.train_adapter));
      e = ad::add(e, ad::row_scale(delta, std::move(gate)));
    }
  }
  return e;
}

ad::Var Conditioner::embed(ad::Graph& g, std::span<const int> prompts, std::span<const int> t, bool use_adapter) const {
  Bind bind;
  bind.use_adapter = use_adapter;
  // Nothing is bound as trainable, so the parameters are only read.
  return const_cast<Conditioner*>(this)->embed(g, prompts, t, bind);
}

std::vector<ad::Parameter*> Conditioner::base_parameters() { return {&table, &null_row}; }
std::vector<ad::Parameter*> Conditioner::adapter_parameters() { return {&adapter.down, &adapter.up}; }

Denoiser Denoiser::create(const DenoiserConfig& cfg, std::uint64_t seed) {
  if (cfg.blocks < 2) throw ValidationError("Denoiser needs at least two residual blocks");
  RngStream rng(seed);
  Denoiser d;
  d.cfg_ = cfg;
  d.layers_.push_back(make_linear("denoiser.in_proj", cfg.image_size() + cfg.cond_dim, cfg.hidden, 1.0, rng));
  d.layers_.push_back(make_linear("denoiser.time_proj", cfg.time_dim, cfg.hidden, 1.0, rng));
  for (std::size_t b = 0; b < cfg.blocks; ++b) {
    d.layers_.push_back(make_linear("denoiser.block" + std::to_string(b), cfg.hidden, cfg.hidden, 0.5, rng));
  }
  d.layers_.push_back(make_linear("denoiser.out_proj", cfg.hidden, cfg.image_size(), 0.5, rng));
  d.skip_ = LinearLayer{ad::Parameter("denoiser.skip.weight", Tensor({cfg.time_dim, 1}, 0.0)),
                        ad::Parameter("denoiser.skip.bias", Tensor({1}, 1.0))};
  return d;
}

std::vector<ad::Parameter*> Denoiser::parameters() {
  std::vector<ad::Parameter*> out;
  for (auto& l : layers_) {
    out.push_back(&l.weight);
    out.push_back(&l.bias);
  }
  out.push_back(&skip_.weight);
  out.push_back(&skip_.bias);
  return out;
}

bool Denoiser::in_output_half(std::size_t layer) const {
  if (layer == out_layer()) return true;
  if (layer < 2) return false;
  return layer - 2 >= cfg_.blocks / 2;
}

std::string Denoiser::layer_name(std::size_t layer) const {
  if (layer == kInProj) return "in_proj";
  if (layer == kTimeProj) return "time_proj";
  if (layer == out_layer()) return "out_proj";
  return "block" + std::to_string(layer - 2);
}

Tensor Denoiser::time_features(std::span<const int> t) const {
  const std::size_t half = cfg_.time_dim / 2;
  Tensor f({t.size(), cfg_.time_dim}, 0.0);
  const double scale = 1000.0 / static_cast<double>(cfg_.timesteps);
  for (std::size_t r = 0; r < t.size(); ++r) {
    const double ts = scale * static_cast<double>(t[r]);
    for (std::size_t i = 0; i < half; ++i) {
      const double freq = std::exp(-std::log(10000.0) * static_cast<double>(i) / static_cast<double>(half));
      f.at(r, i) = std::sin(ts * freq);
      f.at(r, half + i) = std::cos(ts * freq);
    }
  }
  return f;
}

ad::Var Denoiser::forward(ad::Graph& g, ad::Var x, std::span<const int> t, ad::Var cond, const Bind& bind) {
  const std::size_t rows = x.shape().at(0);
  if (x.size() != rows * cfg_.image_size()) {
    throw ShapeError("Denoiser::forward: input " + to_string(x.shape()) + " does not hold images of shape " +
                     to_string(cfg_.image_shape()));
  }
  if (t.size() != rows) throw ShapeError("Denoiser::forward: need one timestep per row");
  if (cond.shape() != Shape{rows, cfg_.cond_dim}) {
    throw ShapeError("Denoiser::forward: condition " + to_string(cond.shape()) + ", expected [" +
                     std::to_string(rows) + "," + std::to_string(cfg_.cond_dim) + "]");
  }
  const Shape in_shape = x.shape();
  const LowRankAdapter* adapter = bind.train_adapter ? bind.train_adapter : bind.adapter;
  if (adapter && adapter->layers.size() != layers_.size()) {
    throw ShapeError("Denoiser::forward: adapter covers " + std::to_string(adapter->layers.size()) + " layers, model has " +
                     std::to_string(layers_.size()));
  }
  std::vector<double> gate;
  bool adapter_on = false;
  if (adapter) {
    gate = gate_rows(t, adapter->t_lo, adapter->t_hi, adapter->weight);
    adapter_on = any_nonzero(gate);
  }

  auto apply = [&](std::size_t li, ad::Var in) {
    auto& layer = layers_[li];
    ad::Var y = ad::linear(in, bind_param(g, layer.weight, bind.train_weights), bind_param(g, layer.bias, bind.train_weights));
    if (!adapter_on) return y;
    if (adapter->active_blocks == BlockScope::kOutputHalf && !in_output_half(li)) return y;
    const bool train = bind.train_adapter != nullptr &&
                       (bind.train_scope == BlockScope::kAll || in_output_half(li));
    auto& al = const_cast<AdapterLayer&>(adapter->layers[li]);
    ad::Var delta = ad::matmul(ad::matmul(in, bind_param(g, al.down, train)), bind_param(g, al.up, train));
    return ad::add(y, ad::row_scale(delta, gate));
  };

  ad::Var flat = ad::reshape(x, {rows, cfg_.image_size()});
  ad::Var tf = g.constant(time_features(t));
  ad::Var temb = ad::silu(apply(kTimeProj, tf));
  ad::Var h = ad::add(apply(kInProj, ad::concat({flat, cond})), temb);
  for (std::size_t b = 0; b < cfg_.blocks; ++b) {
    ad::Var u = ad::add(h, temb);
    h = ad::add(h, ad::silu(apply(block_layer(b), u)));
    if (bind.block_outputs) bind.block_outputs->push_back(h.value());
  }
  ad::Var s = ad::linear(tf, bind_param(g, skip_.weight, bind.train_weights), bind_param(g, skip_.bias, bind.train_weights));
  ad::Var spread = ad::matmul(s, g.constant(Tensor({1, cfg_.image_size()}, 1.0)));
  ad::Var out = ad::add(apply(out_layer(), h), ad::mul(spread, flat));
  return ad::reshape(out, in_shape);
}

ad::Var Denoiser::forward(ad::Graph& g, ad::Var x, std::span<const int> t, ad::Var cond, const LowRankAdapter* adapter,
                          std::vector<Tensor>* block_outputs) const {
  Bind bind;
  bind.adapter = adapter;
  bind.block_outputs = block_outputs;
  // With no trainable bindings the parameters are only read.
  return const_cast<Denoiser*>(this)->forward(g, x, t, cond, bind);
}

Denoiser merge_adapter(const Denoiser& model, const LowRankAdapter& adapter, double w) {
  if (adapter.layers.size() != model.layers().size()) {
    throw ShapeError("merge_adapter: adapter covers " + std::to_string(adapter.layers.size()) + " layers, model has " +
                     std::to_string(model.layers().size()));
  }
  Denoiser merged = model;
  for (std::size_t i = 0; i < merged.layers().size(); ++i) {
    if (adapter.active_blocks == BlockScope::kOutputHalf && !model.in_output_half(i)) continue;
    auto& layer = merged.layers()[i];
    const auto& al = adapter.layers[i];
    const std::size_t in = layer.in(), out = layer.out(), r = al.down.value.dim(1);
    if (al.down.value.shape() != Shape{in, r} || al.up.value.shape() != Shape{r, out}) {
      throw ShapeError("merge_adapter: layer " + model.layer_name(i) + " factors " + to_string(al.down.value.shape()) +
                       " x " + to_string(al.up.value.shape()) + " do not fit weight " + to_string(layer.weight.value.shape()));
    }
    if (w == 0.0) continue;
    Tensor delta({in, out});
    kernels::serial::gemm_nn(al.down.value.data(), al.up.value.data(), delta.data(), in, r, out);
    for (std::size_t j = 0; j < delta.size(); ++j) layer.weight.value[j] += w * delta[j];
  }
  return merged;
}

Tensor predict_noise(const NoiseModel& model, const Tensor& x, std::span<const int> t, std::span<const int> prompts) {
  ad::Graph g(ad::GradMode::kInference);
  ad::Var cond = model.conditioner->embed(g, prompts, t, model.conditioner_adapter);
  ad::Var xv = g.external(x);
  return model.denoiser->forward(g, xv, t, cond, model.adapter).value();
}

}  // namespace hgdpo
