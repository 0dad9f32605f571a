// Copyright 2026 The hgdpo Authors
// SPDX-License-Identifier: Apache-2.0

#include "hgdpo/forge.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "hgdpo/errors.hpp"
#include "hgdpo/rng.hpp"

namespace hgdpo {

std::string to_string(StageTag tag) {
  switch (tag) {
    case StageTag::kEasy: return "easy";
    case StageTag::kNormal: return "normal";
    case StageTag::kHard: return "hard";
    case StageTag::kNaive: return "naive";
  }
  return "unknown";
}

std::optional<StageTag> parse_stage_tag(std::uint8_t raw) {
  if (raw > static_cast<std::uint8_t>(StageTag::kNaive)) return std::nullopt;
  return static_cast<StageTag>(raw);
}

std::vector<double> ImagePool::totals() const {
  std::vector<double> out;
  for (const auto& s : scores) out.push_back(s.total);
  return out;
}

WindowConfig WindowConfig::scaled(int timesteps, int count, std::size_t r_index, std::size_t g_index) {
  if (count < 2) throw ValidationError("intermediate level count must be at least 2");
  WindowConfig w;
  for (int k = 1; k <= count; ++k) {
    w.levels.push_back(static_cast<int>(std::lround(static_cast<double>(k) * timesteps / count)));
  }
  w.r_index = r_index;
  w.g_index = g_index;
  w.validate();
  return w;
}

void WindowConfig::validate() const {
  if (levels.size() < 2) throw ValidationError("window: need at least two levels");
  for (std::size_t i = 1; i < levels.size(); ++i) {
    if (levels[i] <= levels[i - 1]) throw ValidationError("window: levels must be strictly increasing");
  }
  if (levels.front() < 1) throw ValidationError("window: first level must be at least 1");
  if (r_index > g_index || g_index >= levels.size()) throw ValidationError("window: empty or out-of-range [t_r, t_g]");
  if (r_index == 0 || g_index + 1 == levels.size()) throw ValidationError("window: need t_1 < t_r and t_g < t_T");
}

ImagePool build_pool(const NoiseModel& base, int prompt, int n, std::uint64_t seed, const SamplerConfig& sampler,
                     const NoiseSchedule& sched) {
  const int p[1] = {prompt};
  return build_pools(base, p, n, seed, sampler, sched).front();
}

std::vector<ImagePool> build_pools(const NoiseModel& base, std::span<const int> prompts, int n, std::uint64_t seed,
                                   const SamplerConfig& sampler, const NoiseSchedule& sched) {
  if (n < 2) throw ValidationError("pool size must be at least 2, got " + std::to_string(n));
  std::vector<int> ids;
  std::vector<RngStream> rngs;
  std::vector<ImagePool> pools(prompts.size());
  for (std::size_t p = 0; p < prompts.size(); ++p) {
    pools[p].prompt = prompts[p];
    const std::uint64_t root = derive_seed(seed, static_cast<std::uint64_t>(prompts[p]));
    std::set<std::uint64_t> seen;
    for (int i = 0; i < n; ++i) {
      const std::uint64_t s = derive_seed(root, static_cast<std::uint64_t>(i));
      if (!seen.insert(s).second) throw ValidationError("pool seeds collide");
      pools[p].seeds.push_back(s);
      ids.push_back(prompts[p]);
      rngs.emplace_back(s);
    }
  }
  const Tensor batch = sample(base, ids, rngs, sampler, sched);
  const Shape shape = base.denoiser->config().image_shape();
  std::size_t row = 0;
  for (auto& pool : pools) {
    for (int i = 0; i < n; ++i, ++row) pool.images.push_back(batch.slice_rows(row, row + 1).reshaped(shape));
  }
  return pools;
}

void score_pool(ImagePool& pool, const PromptSpec& spec, const WorldConfig& world) {
  pool.scores.clear();
  for (const Tensor& img : pool.images) pool.scores.push_back(oracle_score(img, spec, world));
}

std::optional<std::pair<std::size_t, std::size_t>> select_easy_indices(std::span<const double> scores) {
  if (scores.empty()) throw ValidationError("select_easy_pair: empty pool");
  std::size_t hi = 0, lo = 0;
  for (std::size_t i = 1; i < scores.size(); ++i) {
    if (scores[i] > scores[hi]) hi = i;
    if (scores[i] < scores[lo]) lo = i;
  }
  if (scores[hi] == scores[lo]) return std::nullopt;
  return std::pair{hi, lo};
}

std::optional<PreferenceTriplet> select_easy_pair(const ImagePool& pool) {
  if (!pool.scored()) throw ValidationError("select_easy_pair: pool for prompt " + std::to_string(pool.prompt) + " is not scored");
  const std::vector<double> s = pool.totals();
  const auto idx = select_easy_indices(s);
  if (!idx) return std::nullopt;
  return PreferenceTriplet{pool.prompt, StageTag::kEasy, pool.images[idx->first], pool.images[idx->second],
                           s[idx->first], s[idx->second]};
}

EasyDataset build_easy_dataset(const std::vector<ImagePool>& pools) {
  EasyDataset out;
  for (const auto& pool : pools) {
    if (auto t = select_easy_pair(pool)) {
      out.triplets.push_back(std::move(*t));
    } else {
      ++out.dropped;
    }
  }
  return out;
}

std::vector<IntermediateSet> build_intermediates(const NoiseModel& base, std::span<const int> prompts,
                                                 const std::vector<Tensor>& reals, const WindowConfig& window,
                                                 std::uint64_t seed, const SamplerConfig& sampler,
                                                 const NoiseSchedule& sched) {
  window.validate();
  if (reals.size() != prompts.size()) throw ValidationError("build_intermediates: one real image per prompt required");
  if (window.levels.back() > sched.timesteps()) throw ValidationError("window: levels exceed the schedule length");
  std::vector<IntermediateSet> out(prompts.size());
  Tensor batch = stack(reals);
  for (std::size_t p = 0; p < prompts.size(); ++p) {
    out[p].prompt = prompts[p];
    out[p].levels = window.levels;
  }
  const Shape shape = reals.front().shape();
  for (std::size_t k = 0; k < window.levels.size(); ++k) {
    std::vector<RngStream> rngs;
    for (int p : prompts) rngs.emplace_back(derive_seed(derive_seed(seed, static_cast<std::uint64_t>(p)), k));
    const Tensor rec = sdrecon(base, prompts, batch, window.levels[k], rngs, sampler, sched);
    for (std::size_t p = 0; p < prompts.size(); ++p) out[p].images.push_back(rec.slice_rows(p, p + 1).reshaped(shape));
  }
  return out;
}

void score_intermediates(IntermediateSet& set, const PromptSpec& spec, const WorldConfig& world) {
  set.scores.clear();
  for (const Tensor& img : set.images) set.scores.push_back(oracle_score(img, spec, world));
}

std::size_t select_normal_index(std::span<const double> level_scores, const WindowConfig& window) {
  window.validate();
  if (level_scores.size() != window.levels.size()) throw ValidationError("select_normal_pair: score count does not match the level grid");
  std::size_t best = window.r_index;
  for (std::size_t k = window.r_index + 1; k <= window.g_index; ++k) {
    if (level_scores[k] > level_scores[best]) best = k;
  }
  return best;
}

PreferenceTriplet select_normal_pair(const IntermediateSet& inter, const ImagePool& pool, const WindowConfig& window) {
  if (inter.scores.size() != inter.images.size() || inter.images.empty()) {
    throw ValidationError("select_normal_pair: intermediates for prompt " + std::to_string(inter.prompt) + " are not scored");
  }
  if (!pool.scored()) throw ValidationError("select_normal_pair: pool for prompt " + std::to_string(pool.prompt) + " is not scored");
  if (inter.prompt != pool.prompt) throw ValidationError("select_normal_pair: prompt mismatch");
  std::vector<double> s;
  for (const auto& sc : inter.scores) s.push_back(sc.total);
  const std::size_t k = select_normal_index(s, window);
  const std::vector<double> ps = pool.totals();
  const auto best = static_cast<std::size_t>(std::max_element(ps.begin(), ps.end()) - ps.begin());
  return PreferenceTriplet{inter.prompt, StageTag::kNormal, inter.images[k], pool.images[best], s[k], ps[best]};
}

bool keep_normal(const PreferenceTriplet& candidate) { return candidate.winner_score >= candidate.loser_score; }

NormalDataset filter_triplets(const TripletDataset& candidates) {
  NormalDataset out;
  for (const auto& c : candidates) {
    if (!keep_normal(c)) continue;
    out.triplets.push_back(c);
    out.kept.push_back(c.prompt);
  }
  return out;
}

TripletDataset build_hard_pairs(const std::vector<IntermediateSet>& inters, const NormalDataset& normal, HardWinner mode,
                                const std::vector<RealImage>* reals, const std::vector<PromptSpec>* specs,
                                const WorldConfig* world) {
  if (normal.kept.size() != normal.triplets.size()) throw ValidationError("build_hard_pairs: index set does not match the normal dataset");
  if (mode == HardWinner::kReal && (!reals || !specs || !world)) throw ValidationError("build_hard_pairs: real-winner mode needs the real images");
  TripletDataset out;
  for (std::size_t j = 0; j < normal.kept.size(); ++j) {
    const int p = normal.kept[j];
    const auto it = std::find_if(inters.begin(), inters.end(), [p](const IntermediateSet& s) { return s.prompt == p; });
    if (it == inters.end() || it->images.empty()) throw ValidationError("build_hard_pairs: missing level t_1 for prompt " + std::to_string(p));
    PreferenceTriplet t;
    t.prompt = p;
    t.tag = StageTag::kHard;
    t.loser = normal.triplets[j].winner;
    t.loser_score = normal.triplets[j].winner_score;
    if (mode == HardWinner::kIntermediateT1) {
      if (it->scores.empty()) throw ValidationError("build_hard_pairs: intermediates are not scored");
      t.winner = it->images.front();
      t.winner_score = it->scores.front().total;
    } else {
      const auto& real = reals->at(static_cast<std::size_t>(p));
      t.winner = real.pixels;
      t.winner_score = oracle_score(real.pixels, specs->at(static_cast<std::size_t>(p)), *world).total;
    }
    out.push_back(std::move(t));
  }
  return out;
}

TripletDataset build_naive_pairs(const std::vector<RealImage>& reals, const std::vector<ImagePool>& pools,
                                 const std::vector<PromptSpec>& specs, const WorldConfig& world, NaiveLoser mode,
                                 std::uint64_t seed) {
  TripletDataset out;
  for (const auto& pool : pools) {
    if (!pool.scored()) throw ValidationError("build_naive_pairs: pool for prompt " + std::to_string(pool.prompt) + " is not scored");
    const auto p = static_cast<std::size_t>(pool.prompt);
    const std::vector<double> s = pool.totals();
    std::size_t pick;
    if (mode == NaiveLoser::kBestOfPool) {
      pick = static_cast<std::size_t>(std::max_element(s.begin(), s.end()) - s.begin());
    } else {
      RngStream rng(derive_seed(seed, p));
      pick = static_cast<std::size_t>(rng.uniform_int(0, s.size()));
    }
    const Tensor& real = reals.at(p).pixels;
    out.push_back(PreferenceTriplet{pool.prompt, StageTag::kNaive, real, pool.images[pick],
                                    oracle_score(real, specs.at(p), world).total, s[pick]});
  }
  return out;
}

}  // namespace hgdpo
