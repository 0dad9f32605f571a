// Copyright 2026 The hgdpo Authors
// SPDX-License-Identifier: Apache-2.0

#include "hgdpo/trainer.hpp"

#include <cmath>
#include <map>

#include "hgdpo/adam.hpp"
#include "hgdpo/errors.hpp"
#include "hgdpo/losses.hpp"
#include "hgdpo/rng.hpp"

namespace hgdpo {

namespace {

// Divergence: loss above 10x the first step's for this many steps in a row.
constexpr int kDivergencePatience = 100;

class DivergenceGuard {
 public:
  explicit DivergenceGuard(std::string stage) : stage_(std::move(stage)) {}
  void observe(double loss, std::size_t step) {
    if (!std::isfinite(loss)) throw NumericError(stage_ + ": non-finite loss at step " + std::to_string(step));
    if (step == 0) {
      initial_ = loss;
      return;
    }
    run_ = loss > 10.0 * initial_ ? run_ + 1 : 0;
    if (run_ >= kDivergencePatience) {
      throw NumericError(stage_ + ": diverged (loss above 10x initial for " + std::to_string(kDivergencePatience) +
                         " steps, at step " + std::to_string(step) + ")");
    }
  }

 private:
  std::string stage_;
  double initial_ = 0.0;
  int run_ = 0;
};

Tensor normal_batch(const Shape& shape, RngStream& rng) {
  Tensor t(shape);
  rng.fill_normal(t.data());
  return t;
}

StageSettings settings_for(Stage stage, const Config& cfg) {
  switch (stage) {
    case Stage::kSft: return cfg.sft;
    case Stage::kEasy: return cfg.easy;
    case Stage::kNormal: return cfg.normal;
    case Stage::kHard:
    case Stage::kSftAdapter: return cfg.hard;
    case Stage::kConditioner: return cfg.conditioner;
    case Stage::kNaive:
    case Stage::kE2e: {
      // Single-stage baselines get the whole curriculum's step budget.
      StageSettings st = cfg.easy;
      st.steps = cfg.easy.steps + cfg.normal.steps + cfg.hard.steps;
      return st;
    }
  }
  return cfg.easy;
}

void check_tags(const TripletDataset& data, Stage stage) {
  std::optional<StageTag> want;
  switch (stage) {
    case Stage::kEasy:
    case Stage::kConditioner: want = StageTag::kEasy; break;
    case Stage::kNormal: want = StageTag::kNormal; break;
    case Stage::kHard: want = StageTag::kHard; break;
    case Stage::kNaive: want = StageTag::kNaive; break;
    default: break;
  }
  if (!want) return;
  for (const auto& t : data) {
    if (t.tag != *want) {
      throw ValidationError(to_string(stage) + " stage got a " + to_string(t.tag) + " triplet");
    }
  }
}

// Index sampler; e2e picks a source dataset uniformly, then an item in it.
class ItemSampler {
 public:
  ItemSampler(const TripletDataset& data, bool by_source) {
    if (by_source) {
      std::map<StageTag, std::vector<std::size_t>> groups;
      for (std::size_t i = 0; i < data.size(); ++i) groups[data[i].tag].push_back(i);
      for (auto& [tag, idx] : groups) groups_.push_back(std::move(idx));
    } else {
      std::vector<std::size_t> all(data.size());
      for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
      groups_.push_back(std::move(all));
    }
  }
  std::size_t draw(RngStream& rng) const {
    const auto& g = groups_.size() == 1 ? groups_.front() : groups_[rng.uniform_int(0, groups_.size())];
    return g[rng.uniform_int(0, g.size())];
  }

 private:
  std::vector<std::vector<std::size_t>> groups_;
};

struct Minibatch {
  std::vector<int> prompts;
  std::vector<int> t;
  Tensor x_w;
  Tensor x_l;
};

Minibatch draw_triplets(const TripletDataset& data, const ItemSampler& sampler, int batch, int t_lo, int t_hi,
                        RngStream& rng) {
  Minibatch mb;
  std::vector<Tensor> w, l;
  for (int i = 0; i < batch; ++i) {
    const auto& trip = data[sampler.draw(rng)];
    mb.prompts.push_back(trip.prompt);
    mb.t.push_back(static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(t_lo), static_cast<std::uint64_t>(t_hi))));
    w.push_back(trip.winner);
    l.push_back(trip.loser);
  }
  mb.x_w = stack(w);
  mb.x_l = stack(l);
  return mb;
}

}  // namespace

std::string to_string(Stage stage) {
  switch (stage) {
    case Stage::kSft: return "sft";
    case Stage::kEasy: return "easy";
    case Stage::kNormal: return "normal";
    case Stage::kHard: return "hard";
    case Stage::kConditioner: return "conditioner";
    case Stage::kNaive: return "naive";
    case Stage::kE2e: return "e2e";
    case Stage::kSftAdapter: return "sft-adapter";
  }
  return "unknown";
}

ModelState init_model(const Config& cfg, std::uint64_t seed) {
  cfg.validate();
  ModelState s;
  s.denoiser = Denoiser::create(cfg.denoiser(), derive_seed(seed, 1));
  s.conditioner = Conditioner::create(static_cast<std::size_t>(cfg.world.prompts), cfg.cond_dim, cfg.conditioner_rank,
                                      derive_seed(seed, 2));
  s.conditioner.adapter_t_lo = cfg.conditioner_gate_lo();
  s.conditioner.adapter_t_hi = cfg.timesteps;
  s.adapter = make_adapter(s.denoiser, cfg.denoiser_rank, derive_seed(seed, 3));
  s.has_adapter = false;
  return s;
}

ModelState inference_state(const ModelState& state, const Config& cfg) {
  ModelState s = state;
  s.adapter.weight = cfg.merge_weight;
  s.conditioner.adapter_weight = cfg.merge_weight;
  return s;
}

TrainingRun train_sft(ModelState& state, const std::vector<RealImage>& data, const Config& cfg, std::uint64_t seed) {
  if (data.empty()) throw ValidationError("train_sft: empty dataset");
  const StageSettings st = cfg.sft;
  const NoiseSchedule sched = cfg.schedule();
  TrainingRun run{Stage::kSft, {}};
  std::vector<ad::Parameter*> params = state.denoiser.parameters();
  for (auto* p : state.conditioner.base_parameters()) params.push_back(p);
  Adam opt(params, cfg.adam(st.lr));
  RngStream rng(seed);
  DivergenceGuard guard("sft");
  const Shape img = cfg.denoiser().image_shape();
  for (int step = 0; step < st.steps; ++step) {
    std::vector<int> prompts, t;
    std::vector<Tensor> xs;
    for (int i = 0; i < st.batch; ++i) {
      const auto& item = data[rng.uniform_int(0, data.size())];
      prompts.push_back(rng.uniform() < kConditionDropout ? kNullPrompt : item.prompt_id);
      t.push_back(static_cast<int>(rng.uniform_int(0, static_cast<std::uint64_t>(cfg.timesteps))));
      xs.push_back(item.pixels);
    }
    const Tensor x0 = stack(xs);
    Shape bshape{static_cast<std::size_t>(st.batch)};
    bshape.insert(bshape.end(), img.begin(), img.end());
    const Tensor eps = normal_batch(bshape, rng);

    opt.zero_grad();
    ad::Graph g;
    Predictor model = [&state](ad::Graph& gr, ad::Var x, std::span<const int> tt, std::span<const int> pp) {
      Conditioner::Bind cb;
      cb.train_table = true;
      ad::Var cond = state.conditioner.embed(gr, pp, tt, cb);
      Denoiser::Bind db;
      db.train_weights = true;
      return state.denoiser.forward(gr, x, tt, cond, db);
    };
    ad::Var loss = sft_loss(g, model, x0, prompts, t, eps, sched);
    g.backward(loss);
    guard.observe(loss.value().item(), static_cast<std::size_t>(step));
    run.loss_trace.push_back(loss.value().item());
    opt.step();
  }
  return run;
}

TrainingRun train_stage(ModelState& state, const TripletDataset& data, Stage stage, const Config& cfg,
                        std::uint64_t seed) {
  if (stage == Stage::kSft || stage == Stage::kConditioner || stage == Stage::kSftAdapter) {
    throw ValidationError("train_stage: " + to_string(stage) + " is not a DPO stage");
  }
  check_tags(data, stage);
  const StageSettings st = settings_for(stage, cfg);
  TrainingRun run{stage, {}};
  state.has_adapter = true;
  if (st.steps == 0) return run;
  if (data.empty()) throw ValidationError(to_string(stage) + " stage: empty dataset");

  const NoiseSchedule sched = cfg.schedule();
  // Frozen reference and base, both deep copies.
  ModelState ref_state = snapshot(state);
  if (cfg.reference == ReferenceKind::kBase) ref_state.has_adapter = false;
  const NoiseModel ref = ref_state.view();
  const NoiseModel base{&ref_state.denoiser, nullptr, &ref_state.conditioner, false};

  const bool output_half = stage == Stage::kHard && cfg.hard_scope == AdapterScope::kOutputHalf;
  const BlockScope scope = output_half ? BlockScope::kOutputHalf : BlockScope::kAll;
  std::vector<ad::Parameter*> params;
  for (std::size_t i = 0; i < state.adapter.layers.size(); ++i) {
    if (scope == BlockScope::kOutputHalf && !state.denoiser.in_output_half(i)) continue;
    params.push_back(&state.adapter.layers[i].down);
    params.push_back(&state.adapter.layers[i].up);
  }
  Adam opt(params, cfg.adam(st.lr));

  StatConfig stat = cfg.stat;
  if (stage != Stage::kEasy) stat.lambda_stat = 0.0;

  Predictor model = [&state, scope](ad::Graph& g, ad::Var x, std::span<const int> t, std::span<const int> p) {
    ad::Var cond = std::as_const(state.conditioner).embed(g, p, t, false);
    Denoiser::Bind b;
    b.train_adapter = &state.adapter;
    b.train_scope = scope;
    return state.denoiser.forward(g, x, t, cond, b);
  };

  RngStream rng(seed);
  ItemSampler sampler(data, stage == Stage::kE2e);
  DivergenceGuard guard(to_string(stage));
  for (int step = 0; step < st.steps; ++step) {
    const Minibatch mb = draw_triplets(data, sampler, st.batch, 1, cfg.timesteps, rng);
    const Tensor eps_w = normal_batch(mb.x_w.shape(), rng);
    const Tensor eps_l = normal_batch(mb.x_l.shape(), rng);
    const Tensor z = normal_batch(mb.x_w.shape(), rng);
    const Tensor z_base = stat.share_noise ? z : normal_batch(mb.x_w.shape(), rng);

    opt.zero_grad();
    ad::Graph g;
    ad::Var loss = easy_objective(g, model, ref, base, mb.x_w, mb.x_l, mb.prompts, mb.t, eps_w, eps_l, z, z_base,
                                  cfg.dpo, stat, sched);
    g.backward(loss);
    guard.observe(loss.value().item(), static_cast<std::size_t>(step));
    run.loss_trace.push_back(loss.value().item());
    opt.step();
  }
  return run;
}

TrainingRun train_conditioner(ModelState& state, const TripletDataset& easy, const Config& cfg, std::uint64_t seed) {
  check_tags(easy, Stage::kConditioner);
  const StageSettings st = cfg.conditioner;
  TrainingRun run{Stage::kConditioner, {}};
  if (st.steps == 0) return run;
  if (easy.empty()) throw ValidationError("conditioner stage: empty dataset");
  const NoiseSchedule sched = cfg.schedule();
  const ModelState ref_state = snapshot(state);
  const NoiseModel ref = ref_state.view(false);

  Adam opt(state.conditioner.adapter_parameters(), cfg.adam(st.lr));
  // The gate applies at inference only; training sees every timestep.
  const int gate_lo = state.conditioner.adapter_t_lo, gate_hi = state.conditioner.adapter_t_hi;
  state.conditioner.adapter_t_lo = 0;
  state.conditioner.adapter_t_hi = cfg.timesteps;
  const bool has_adapter = state.has_adapter;
  Predictor model = [&state, has_adapter](ad::Graph& g, ad::Var x, std::span<const int> t, std::span<const int> p) {
    Conditioner::Bind cb;
    cb.train_adapter = true;
    cb.use_adapter = true;
    ad::Var cond = state.conditioner.embed(g, p, t, cb);
    return std::as_const(state.denoiser).forward(g, x, t, cond, has_adapter ? &state.adapter : nullptr);
  };

  RngStream rng(seed);
  ItemSampler sampler(easy, false);
  DivergenceGuard guard("conditioner");
  try {
    for (int step = 0; step < st.steps; ++step) {
      const Minibatch mb = draw_triplets(easy, sampler, st.batch, 1, cfg.timesteps, rng);
      const Tensor eps_w = normal_batch(mb.x_w.shape(), rng);
      const Tensor eps_l = normal_batch(mb.x_l.shape(), rng);
      opt.zero_grad();
      ad::Graph g;
      ad::Var loss = dpo_loss(g, model, ref, mb.x_w, mb.x_l, mb.prompts, mb.t, eps_w, eps_l, cfg.dpo, sched);
      g.backward(loss);
      guard.observe(loss.value().item(), static_cast<std::size_t>(step));
      run.loss_trace.push_back(loss.value().item());
      opt.step();
    }
  } catch (...) {
    state.conditioner.adapter_t_lo = gate_lo;
    state.conditioner.adapter_t_hi = gate_hi;
    throw;
  }
  state.conditioner.adapter_t_lo = gate_lo;
  state.conditioner.adapter_t_hi = gate_hi;
  return run;
}

TrainingRun train_sft_adapter(ModelState& state, const TripletDataset& data, const Config& cfg, std::uint64_t seed) {
  const StageSettings st = cfg.hard;
  TrainingRun run{Stage::kSftAdapter, {}};
  state.has_adapter = true;
  if (st.steps == 0) return run;
  if (data.empty()) throw ValidationError("sft-from-stage: empty dataset");
  const NoiseSchedule sched = cfg.schedule();
  std::vector<ad::Parameter*> params;
  for (auto& l : state.adapter.layers) {
    params.push_back(&l.down);
    params.push_back(&l.up);
  }
  Adam opt(params, cfg.adam(st.lr));
  Predictor model = [&state](ad::Graph& g, ad::Var x, std::span<const int> t, std::span<const int> p) {
    ad::Var cond = std::as_const(state.conditioner).embed(g, p, t, false);
    Denoiser::Bind b;
    b.train_adapter = &state.adapter;
    return state.denoiser.forward(g, x, t, cond, b);
  };
  RngStream rng(seed);
  ItemSampler sampler(data, false);
  DivergenceGuard guard("sft-adapter");
  for (int step = 0; step < st.steps; ++step) {
    std::vector<int> prompts, t;
    std::vector<Tensor> xs;
    for (int i = 0; i < st.batch; ++i) {
      const auto& trip = data[sampler.draw(rng)];
      prompts.push_back(trip.prompt);
      t.push_back(static_cast<int>(rng.uniform_int(0, static_cast<std::uint64_t>(cfg.timesteps))));
      xs.push_back(trip.winner);
    }
    const Tensor x0 = stack(xs);
    const Tensor eps = normal_batch(x0.shape(), rng);
    opt.zero_grad();
    ad::Graph g;
    ad::Var loss = sft_loss(g, model, x0, prompts, t, eps, sched);
    g.backward(loss);
    guard.observe(loss.value().item(), static_cast<std::size_t>(step));
    run.loss_trace.push_back(loss.value().item());
    opt.step();
  }
  return run;
}

}  // namespace hgdpo
