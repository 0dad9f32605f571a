// Copyright 2026 The hgdpo Authors
// SPDX-License-Identifier: Apache-2.0

#include "hgdpo/pipeline.hpp"

#include <algorithm>
#include <map>
#include <ostream>
#include <sstream>

#include "hgdpo/errors.hpp"
#include "hgdpo/io.hpp"
#include "hgdpo/losses.hpp"
#include "hgdpo/rng.hpp"

namespace hgdpo {

namespace {

// Step seeds: each pipeline step draws from its own derived stream.
enum SeedSlot : std::uint64_t {
  kSeedReal = 1,
  kSeedEvalReal = 2,
  kSeedInit = 3,
  kSeedSft = 4,
  kSeedPool = 5,
  kSeedIntermediate = 6,
  kSeedEasy = 7,
  kSeedNormal = 8,
  kSeedHard = 9,
  kSeedConditioner = 10,
  kSeedEval = 11,
  kSeedAblation = 100,
};

constexpr std::size_t kScoreFields = 4;
constexpr int kPpmPerReport = 4;

std::string fmt(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

Tensor score_tensor(const std::vector<std::vector<OracleScore>>& rows) {
  const std::size_t n = rows.size(), m = rows.empty() ? 0 : rows.front().size();
  Tensor t({n, m, kScoreFields});
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < m; ++j) {
      const auto& s = rows[i][j];
      const std::size_t o = (i * m + j) * kScoreFields;
      t[o] = s.total;
      t[o + 1] = s.alignment;
      t[o + 2] = s.quality;
      t[o + 3] = s.sharpness;
    }
  }
  return t;
}

OracleScore score_at(const Tensor& t, std::size_t i, std::size_t j) {
  const std::size_t o = (i * t.dim(1) + j) * kScoreFields;
  return OracleScore{t[o], t[o + 1], t[o + 2], t[o + 3]};
}

Tensor image_at(const Tensor& t, std::size_t i, std::size_t j, const Shape& shape) {
  const std::size_t sz = shape_size(shape);
  const std::size_t o = (i * t.dim(1) + j) * sz;
  return Tensor(shape, std::vector<double>(t.values().begin() + static_cast<std::ptrdiff_t>(o),
                                           t.values().begin() + static_cast<std::ptrdiff_t>(o + sz)));
}

const Tensor& need(const io::Checkpoint& ck, const std::string& name, const fs::path& path) {
  const Tensor* t = ck.find(name);
  if (!t) throw FormatError(path.string() + ": missing tensor " + name);
  return *t;
}

}  // namespace

struct Pipeline::EvalResources {
  std::vector<PromptSpec> prompts;
  std::vector<Tensor> real;
  NoiseSchedule sched;
  EvalSet base;
  EvalContext ctx;
};

Pipeline::Pipeline(Config cfg, std::uint64_t seed, fs::path out, bool force, std::ostream* log)
    : cfg_(std::move(cfg)), seed_(seed), out_(std::move(out)), force_(force), log_(log) {
  cfg_.validate();
  const fs::path manifest = out_ / "manifest.txt";
  std::ostringstream m;
  m << "format=hgdpo-artifacts\n"
    << "checkpoint_version=" << io::kCheckpointVersion << "\n"
    << "config_hash=" << cfg_.hash() << "\n"
    << "seed=" << seed_ << "\n";
  if (fs::exists(manifest)) {
    const std::string existing = io::read_file(manifest);
    if (existing != m.str() && !force_) {
      throw ValidationError(out_.string() + " holds artifacts from a different config or seed (use --force to override)");
    }
    if (existing == m.str()) return;
  }
  io::write_atomic(manifest, m.str());
  io::write_atomic(out_ / "config.cfg", cfg_.to_text());
}

bool Pipeline::done(const std::string& step) const { return fs::exists(out_ / "done" / step); }

void Pipeline::mark(const std::string& step) { io::write_atomic(out_ / "done" / step, "ok\n"); }

void Pipeline::require(const std::string& step, const std::string& producer) const {
  if (!done(step)) throw ValidationError("missing artifacts of step " + step + "; run `" + producer + "` first");
}

void Pipeline::log(const std::string& msg) const {
  if (log_) *log_ << msg << std::endl;
}

std::uint64_t Pipeline::step_seed(std::uint64_t step) const { return derive_seed(seed_, step); }

std::vector<PromptSpec> Pipeline::prompts() const { return make_prompts(cfg_.world); }

ModelState Pipeline::load_model(const fs::path& path) const {
  const io::Checkpoint ck = io::load_checkpoint(path);
  if (ck.config_hash != cfg_.hash() && !force_) {
    throw ValidationError(path.string() + " was written under a different config (use --force to override)");
  }
  ModelState state = init_model(cfg_, step_seed(kSeedInit));
  state.has_adapter = false;
  for (const auto& t : ck.tensors) {
    if (t.name.rfind("adapter.", 0) == 0) state.has_adapter = true;
  }
  io::from_checkpoint(ck, state);
  return state;
}

void Pipeline::save_model(const fs::path& path, const ModelState& state) const {
  io::save_checkpoint(path, io::to_checkpoint(state, cfg_.hash()));
}

void Pipeline::save_trace(const std::string& name, const TrainingRun& run) const {
  std::ostringstream os;
  os << "stage=" << to_string(run.stage) << "\nsteps=" << run.loss_trace.size() << "\n";
  for (std::size_t i = 0; i < run.loss_trace.size(); ++i) os << i << " " << fmt(run.loss_trace[i]) << "\n";
  io::write_atomic(out_ / "traces" / (name + ".txt"), os.str());
}

std::vector<RealImage> Pipeline::load_reals() const {
  const fs::path path = out_ / "data" / "real.hgck";
  const io::Checkpoint ck = io::load_checkpoint(path);
  const Tensor& imgs = need(ck, "images", path);
  const Tensor& ids = need(ck, "prompts", path);
  std::vector<RealImage> out;
  const Shape shape = cfg_.world.image_shape();
  for (std::size_t i = 0; i < ids.size(); ++i) {
    out.push_back(RealImage{imgs.slice_rows(i, i + 1).reshaped(shape), static_cast<int>(ids[i]),
                            derive_seed(step_seed(kSeedReal), i)});
  }
  return out;
}

std::vector<Tensor> Pipeline::load_eval_reals() const {
  const fs::path path = out_ / "data" / "eval_real.hgck";
  const io::Checkpoint ck = io::load_checkpoint(path);
  const Tensor& imgs = need(ck, "images", path);
  std::vector<Tensor> out;
  for (std::size_t i = 0; i < imgs.dim(0); ++i) out.push_back(imgs.slice_rows(i, i + 1).reshaped(cfg_.world.image_shape()));
  return out;
}

std::vector<ImagePool> Pipeline::load_pools() const {
  const fs::path path = out_ / "data" / "pools.hgck";
  const io::Checkpoint ck = io::load_checkpoint(path);
  const Tensor& imgs = need(ck, "images", path);
  const Tensor& scores = need(ck, "scores", path);
  std::vector<ImagePool> pools(imgs.dim(0));
  for (std::size_t p = 0; p < pools.size(); ++p) {
    pools[p].prompt = static_cast<int>(p);
    const std::uint64_t root = derive_seed(step_seed(kSeedPool), p);
    for (std::size_t j = 0; j < imgs.dim(1); ++j) {
      pools[p].images.push_back(image_at(imgs, p, j, cfg_.world.image_shape()));
      pools[p].seeds.push_back(derive_seed(root, j));
      pools[p].scores.push_back(score_at(scores, p, j));
    }
  }
  return pools;
}

std::vector<IntermediateSet> Pipeline::load_intermediates() const {
  const fs::path path = out_ / "data" / "intermediates.hgck";
  const io::Checkpoint ck = io::load_checkpoint(path);
  const Tensor& imgs = need(ck, "images", path);
  const Tensor& scores = need(ck, "scores", path);
  const WindowConfig window = cfg_.window();
  std::vector<IntermediateSet> out(imgs.dim(0));
  for (std::size_t p = 0; p < out.size(); ++p) {
    out[p].prompt = static_cast<int>(p);
    out[p].levels = window.levels;
    for (std::size_t k = 0; k < imgs.dim(1); ++k) {
      out[p].images.push_back(image_at(imgs, p, k, cfg_.world.image_shape()));
      out[p].scores.push_back(score_at(scores, p, k));
    }
  }
  return out;
}

void Pipeline::gen_data() {
  if (done("gen-data")) return;
  log("[gen-data] rendering real images");
  const auto specs = prompts();
  const auto reals = gen_real_set(specs, cfg_.world, step_seed(kSeedReal));
  std::vector<Tensor> imgs;
  Tensor ids({reals.size()});
  for (std::size_t i = 0; i < reals.size(); ++i) {
    imgs.push_back(reals[i].pixels);
    ids[i] = reals[i].prompt_id;
  }
  io::save_checkpoint(out_ / "data" / "real.hgck", io::Checkpoint{cfg_.hash(), {{"images", stack(imgs)}, {"prompts", ids}}});

  // Held-out reference set for toy-FID, prompts cycling like the eval items.
  const std::size_t n = static_cast<std::size_t>(cfg_.eval_samples);
  std::vector<double> floors(specs.size());
  for (std::size_t p = 0; p < specs.size(); ++p) {
    floors[p] = quality_floor(specs[p], cfg_.world, derive_seed(derive_seed(step_seed(kSeedReal), p), 1));
  }
  std::vector<Tensor> eval(n);
#pragma omp parallel for schedule(static)
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t p = i % specs.size();
    eval[i] = gen_real(specs[p], RngStream(derive_seed(step_seed(kSeedEvalReal), i)), cfg_.world, floors[p]).pixels;
  }
  io::save_checkpoint(out_ / "data" / "eval_real.hgck", io::Checkpoint{cfg_.hash(), {{"images", stack(eval)}}});
  for (std::size_t i = 0; i < std::min<std::size_t>(reals.size(), kPpmPerReport); ++i) {
    io::save_ppm(out_ / "samples" / ("real_" + std::to_string(i) + ".ppm"), reals[i].pixels);
  }
  mark("gen-data");
}

void Pipeline::train_sft() {
  if (done("train-sft")) return;
  require("gen-data", "gen-data");
  log("[train-sft] " + std::to_string(cfg_.sft.steps) + " steps");
  ModelState state = init_model(cfg_, step_seed(kSeedInit));
  const TrainingRun run = hgdpo::train_sft(state, load_reals(), cfg_, step_seed(kSeedSft));
  save_model(out_ / "models" / "base.hgck", state);
  save_trace("sft", run);
  mark("train-sft");
}

void Pipeline::build_pool() {
  if (done("build-pool")) return;
  require("train-sft", "train-sft");
  log("[build-pool] " + std::to_string(cfg_.pool_size) + " images per prompt");
  const ModelState base = load_model(out_ / "models" / "base.hgck");
  const auto specs = prompts();
  std::vector<int> ids;
  for (const auto& s : specs) ids.push_back(s.id);
  auto pools = build_pools(base.view(), ids, cfg_.pool_size, step_seed(kSeedPool), cfg_.sampler(), cfg_.schedule());
  std::vector<Tensor> imgs;
  std::vector<std::vector<OracleScore>> scores;
  for (auto& pool : pools) {
    score_pool(pool, specs[static_cast<std::size_t>(pool.prompt)], cfg_.world);
    imgs.push_back(stack(pool.images));
    scores.push_back(pool.scores);
  }
  io::save_checkpoint(out_ / "data" / "pools.hgck",
                      io::Checkpoint{cfg_.hash(), {{"images", stack(imgs)}, {"scores", score_tensor(scores)}}});
  mark("build-pool");
}

void Pipeline::build_easy() {
  if (done("build-easy")) return;
  require("build-pool", "build-pool");
  const EasyDataset easy = build_easy_dataset(load_pools());
  io::save_dataset(out_ / "data" / "d_easy.hgd1", easy.triplets);
  std::ostringstream os;
  os << "triplets=" << easy.triplets.size() << "\ndropped_degenerate=" << easy.dropped << "\n";
  if (!easy.triplets.empty()) {
    std::vector<Tensor> w, l;
    for (const auto& t : easy.triplets) {
      w.push_back(t.winner);
      l.push_back(t.loser);
    }
    const auto [dm, ds] = latent_stat_cosine(w, l);
    os << "winner_loser_mean_cosine_distance=" << fmt(dm) << "\nwinner_loser_std_cosine_distance=" << fmt(ds) << "\n";
  }
  io::write_atomic(out_ / "data" / "d_easy_stats.txt", os.str());
  log("[build-easy] " + std::to_string(easy.triplets.size()) + " triplets, " + std::to_string(easy.dropped) + " dropped");
  mark("build-easy");
}

void Pipeline::train_dpo_step(const std::string& step, const std::string& from, const std::string& dataset, Stage stage,
                              const std::string& to) {
  log("[" + step + "] " + to_string(stage) + " stage from " + from);
  ModelState state = load_model(out_ / "models" / (from + ".hgck"));
  const TripletDataset data = io::load_dataset(out_ / "data" / (dataset + ".hgd1"));
  const std::uint64_t s = stage == Stage::kEasy ? kSeedEasy : stage == Stage::kNormal ? kSeedNormal : kSeedHard;
  const TrainingRun run = train_stage(state, data, stage, cfg_, step_seed(s));
  save_model(out_ / "models" / (to + ".hgck"), state);
  save_trace(to, run);
  mark(step);
}

void Pipeline::train_easy() {
  if (done("train-easy")) return;
  require("build-easy", "build-easy");
  train_dpo_step("train-easy", "base", "d_easy", Stage::kEasy, "easy");
}

void Pipeline::build_normal() {
  if (done("build-normal")) return;
  require("build-pool", "build-pool");
  log("[build-normal] SDRecon over " + std::to_string(cfg_.levels) + " levels");
  const ModelState base = load_model(out_ / "models" / "base.hgck");
  const auto specs = prompts();
  const auto reals = load_reals();
  std::vector<int> ids;
  std::vector<Tensor> real_imgs;
  for (const auto& r : reals) {
    ids.push_back(r.prompt_id);
    real_imgs.push_back(r.pixels);
  }
  const WindowConfig window = cfg_.window();
  auto inters = build_intermediates(base.view(), ids, real_imgs, window, step_seed(kSeedIntermediate), cfg_.sampler(),
                                    cfg_.schedule());
  std::vector<Tensor> imgs;
  std::vector<std::vector<OracleScore>> scores;
  for (auto& s : inters) {
    score_intermediates(s, specs[static_cast<std::size_t>(s.prompt)], cfg_.world);
    imgs.push_back(stack(s.images));
    scores.push_back(s.scores);
  }
  io::save_checkpoint(out_ / "data" / "intermediates.hgck",
                      io::Checkpoint{cfg_.hash(), {{"images", stack(imgs)}, {"scores", score_tensor(scores)}}});

  const auto pools = load_pools();
  TripletDataset candidates;
  for (std::size_t p = 0; p < inters.size(); ++p) candidates.push_back(select_normal_pair(inters[p], pools[p], window));
  const NormalDataset normal = filter_triplets(candidates);
  io::save_dataset(out_ / "data" / "d_normal.hgd1", normal.triplets);
  std::ostringstream k;
  k << "candidates=" << candidates.size() << "\nkept=" << normal.kept.size() << "\nindices=";
  for (std::size_t i = 0; i < normal.kept.size(); ++i) k << (i ? "," : "") << normal.kept[i];
  k << "\n";
  io::write_atomic(out_ / "data" / "k_index.txt", k.str());
  log("[build-normal] kept " + std::to_string(normal.kept.size()) + " of " + std::to_string(candidates.size()));
  mark("build-normal");
}

void Pipeline::build_hard() {
  if (done("build-hard")) return;
  require("build-normal", "build-normal");
  NormalDataset normal;
  normal.triplets = io::load_dataset(out_ / "data" / "d_normal.hgd1");
  for (const auto& t : normal.triplets) normal.kept.push_back(t.prompt);
  const auto specs = prompts();
  const auto reals = load_reals();
  const TripletDataset hard = build_hard_pairs(load_intermediates(), normal, cfg_.hard_winner, &reals, &specs, &cfg_.world);
  io::save_dataset(out_ / "data" / "d_hard.hgd1", hard);
  mark("build-hard");
}

void Pipeline::train_normal() {
  if (done("train-normal")) return;
  require("train-easy", "train-easy");
  require("build-normal", "build-normal");
  train_dpo_step("train-normal", "easy", "d_normal", Stage::kNormal, "normal");
}

void Pipeline::train_hard() {
  if (done("train-hard")) return;
  require("train-normal", "train-normal");
  require("build-hard", "build-hard");
  train_dpo_step("train-hard", "normal", "d_hard", Stage::kHard, "hard");
}

void Pipeline::train_conditioner() {
  if (done("train-conditioner")) return;
  require("train-hard", "train-hard");
  require("build-easy", "build-easy");
  log("[train-conditioner] " + std::to_string(cfg_.conditioner.steps) + " steps");
  ModelState state = load_model(out_ / "models" / "hard.hgck");
  const TrainingRun run =
      hgdpo::train_conditioner(state, io::load_dataset(out_ / "data" / "d_easy.hgd1"), cfg_, step_seed(kSeedConditioner));
  save_model(out_ / "models" / "conditioner.hgck", state);
  save_trace("conditioner", run);
  mark("train-conditioner");
}

Pipeline::EvalResources Pipeline::eval_resources() {
  require("gen-data", "gen-data");
  require("train-sft", "train-sft");
  EvalResources res;
  res.prompts = prompts();
  res.real = load_eval_reals();
  res.sched = cfg_.schedule();
  res.ctx.prompts = &res.prompts;
  res.ctx.world = &cfg_.world;
  res.ctx.sched = &res.sched;
  res.ctx.sampler = cfg_.sampler();
  res.ctx.n = cfg_.eval_samples;
  res.ctx.seed = step_seed(kSeedEval);
  res.ctx.fid_dim = cfg_.fid_dim;
  res.ctx.fid_seed = cfg_.fid_seed;
  res.ctx.real = &res.real;

  const fs::path cache = out_ / "eval" / "base_samples.hgck";
  const Shape shape = cfg_.world.image_shape();
  if (fs::exists(cache)) {
    const io::Checkpoint ck = io::load_checkpoint(cache);
    if (ck.config_hash != cfg_.hash() && !force_) throw ValidationError(cache.string() + " was written under a different config");
    const Tensor& imgs = need(ck, "images", cache);
    const Tensor& ids = need(ck, "prompts", cache);
    const Tensor& scores = need(ck, "scores", cache);
    for (std::size_t i = 0; i < ids.size(); ++i) {
      res.base.images.push_back(imgs.slice_rows(i, i + 1).reshaped(shape));
      res.base.prompts.push_back(static_cast<int>(ids[i]));
      res.base.scores.push_back(score_at(scores, 0, i));
    }
  } else {
    log("[eval] sampling base-model cache");
    const ModelState base = load_model(out_ / "models" / "base.hgck");
    res.base = sample_eval_set(base.view(), res.ctx);
    Tensor ids({res.base.prompts.size()});
    for (std::size_t i = 0; i < ids.size(); ++i) ids[i] = res.base.prompts[i];
    io::save_checkpoint(cache, io::Checkpoint{cfg_.hash(),
                                              {{"images", stack(res.base.images)},
                                               {"prompts", ids},
                                               {"scores", score_tensor({res.base.scores})}}});
  }
  return res;
}

StageReport Pipeline::evaluate(const std::string& label, const ModelState& state, bool conditioner_adapter,
                               EvalResources& res, const fs::path& report_dir, const ModelState* lan_base) {
  res.ctx.base = &res.base;
  const ModelState inf = inference_state(state, cfg_);
  const NoiseModel base_view = lan_base ? lan_base->view() : NoiseModel{};
  const EvalSet set = label == "base" ? res.base : sample_eval_set(inf.view(conditioner_adapter), res.ctx, lan_base ? &base_view : nullptr);
  const StageReport r = report_for(set, res.ctx, label);
  io::write_atomic(report_dir / (label + ".txt"), io::report_text(r));
  io::write_atomic(report_dir / (label + ".json"), io::report_json(r));
  for (int i = 0; i < std::min<int>(kPpmPerReport, static_cast<int>(set.images.size())); ++i) {
    io::save_ppm(out_ / "samples" / (label + "_" + std::to_string(i) + ".ppm"), set.images[static_cast<std::size_t>(i)]);
  }
  log("[eval] " + label + ": oracle " + fmt(r.mean_oracle) + ", fid " + fmt(r.toy_fid) + ", hue " +
      fmt(r.hue_distance_vs_base) + ", sharpness " + fmt(r.sharpness) + ", win " + fmt(r.win_rate_vs_base));
  return r;
}

std::vector<StageReport> Pipeline::eval() {
  EvalResources res = eval_resources();
  std::vector<StageReport> out;
  const fs::path dir = out_ / "reports";
  static const char* kModels[] = {"base", "easy", "normal", "hard", "conditioner"};
  for (const char* name : kModels) {
    const fs::path path = out_ / "models" / (std::string(name) + ".hgck");
    if (!fs::exists(path)) continue;
    const ModelState state = load_model(path);
    out.push_back(evaluate(name, state, std::string(name) == "conditioner", res, dir));
  }
  return out;
}

std::vector<StageReport> Pipeline::run_all() {
  gen_data();
  train_sft();
  build_pool();
  build_easy();
  train_easy();
  build_normal();
  build_hard();
  train_normal();
  train_hard();
  train_conditioner();
  return eval();
}

std::vector<std::string> Pipeline::ablation_modes() {
  return {"naive", "e2e", "skip-easy", "skip-normal", "sft-from-base", "sft-from-easy", "sft-from-normal",
          "nostat", "beta-up", "n2", "lan", "hard-real"};
}

std::vector<StageReport> Pipeline::ablate(const std::string& mode) {
  const auto modes = ablation_modes();
  const auto mode_it = std::find(modes.begin(), modes.end(), mode);
  if (mode_it == modes.end()) {
    std::string all;
    for (const auto& m : modes) all += " " + m;
    throw ValidationError("unknown ablation mode '" + mode + "'; known:" + all);
  }
  // Shared prerequisites: every dataset is built from the base model.
  gen_data();
  train_sft();
  build_pool();
  build_easy();
  build_normal();
  build_hard();

  const fs::path dir = out_ / "ablations" / mode;
  const std::uint64_t seed = derive_seed(step_seed(kSeedAblation), static_cast<std::uint64_t>(mode_it - modes.begin()));
  const auto model_path = [&](const std::string& name) { return dir / (name + ".hgck"); };
  const auto dataset = [&](const std::string& name) { return io::load_dataset(out_ / "data" / (name + ".hgd1")); };
  // Trains (or reloads) one ablation model.
  const auto stage_model = [&](const std::string& name, const ModelState& from, const TripletDataset& data, Stage stage,
                               const Config& cfg, std::uint64_t s) {
    const std::string step = "ablate." + mode + "." + name;
    if (done(step)) return load_model(model_path(name));
    log("[ablate " + mode + "] " + name);
    ModelState state = from;
    const TrainingRun run = stage == Stage::kSftAdapter ? train_sft_adapter(state, data, cfg, s)
                                                        : train_stage(state, data, stage, cfg, s);
    save_model(model_path(name), state);
    std::ostringstream os;
    os << "stage=" << to_string(run.stage) << "\nsteps=" << run.loss_trace.size() << "\n";
    for (std::size_t i = 0; i < run.loss_trace.size(); ++i) os << i << " " << fmt(run.loss_trace[i]) << "\n";
    io::write_atomic(dir / (name + "_trace.txt"), os.str());
    mark(step);
    return state;
  };
  const auto need_model = [&](const std::string& name) {
    if (name == "easy") train_easy();
    if (name == "normal") {
      train_easy();
      train_normal();
    }
    return load_model(out_ / "models" / (name + ".hgck"));
  };

  const ModelState base = load_model(out_ / "models" / "base.hgck");
  EvalResources res = eval_resources();
  std::vector<StageReport> reports;
  const auto report = [&](const std::string& label, const ModelState& s, const ModelState* lan = nullptr) {
    reports.push_back(evaluate(mode + "." + label, s, false, res, dir, lan));
  };

  Config no_stat = cfg_;
  no_stat.stat.lambda_stat = 0.0;

  if (mode == "naive") {
    const TripletDataset naive =
        build_naive_pairs(load_reals(), load_pools(), prompts(), cfg_.world, cfg_.naive_loser, seed);
    io::save_dataset(dir / "d_naive.hgd1", naive);
    report("model", stage_model("model", base, naive, Stage::kNaive, cfg_, seed));
  } else if (mode == "e2e") {
    TripletDataset all = dataset("d_easy");
    for (auto& t : dataset("d_normal")) all.push_back(t);
    for (auto& t : dataset("d_hard")) all.push_back(t);
    report("model", stage_model("model", base, all, Stage::kE2e, cfg_, seed));
  } else if (mode == "skip-easy") {
    const ModelState n = stage_model("normal", base, dataset("d_normal"), Stage::kNormal, cfg_, derive_seed(seed, 1));
    report("normal", n);
    report("hard", stage_model("hard", n, dataset("d_hard"), Stage::kHard, cfg_, derive_seed(seed, 2)));
  } else if (mode == "skip-normal") {
    report("hard", stage_model("hard", need_model("easy"), dataset("d_hard"), Stage::kHard, cfg_, seed));
  } else if (mode.rfind("sft-from-", 0) == 0) {
    const std::string from = mode.substr(9);
    report("model", stage_model("model", need_model(from), dataset("d_hard"), Stage::kSftAdapter, cfg_, seed));
  } else if (mode == "nostat") {
    report("easy", stage_model("easy", base, dataset("d_easy"), Stage::kEasy, no_stat, step_seed(kSeedEasy)));
  } else if (mode == "beta-up") {
    Config c = no_stat;
    c.dpo.beta *= 4.0;
    report("easy", stage_model("easy", base, dataset("d_easy"), Stage::kEasy, c, step_seed(kSeedEasy)));
  } else if (mode == "n2") {
    auto pools = load_pools();
    for (auto& p : pools) {
      p.images.resize(2);
      p.seeds.resize(2);
      p.scores.resize(2);
    }
    const TripletDataset d2 = build_easy_dataset(pools).triplets;
    io::save_dataset(dir / "d_easy_n2.hgd1", d2);
    report("easy", stage_model("easy", base, d2, Stage::kEasy, no_stat, step_seed(kSeedEasy)));
  } else if (mode == "lan") {
    const ModelState e = stage_model("easy-nostat", base, dataset("d_easy"), Stage::kEasy, no_stat, step_seed(kSeedEasy));
    report("easy-nostat", e);
    report("easy-nostat-lan", e, &base);
  } else if (mode == "hard-real") {
    NormalDataset normal;
    normal.triplets = dataset("d_normal");
    for (const auto& t : normal.triplets) normal.kept.push_back(t.prompt);
    const auto specs = prompts();
    const auto reals = load_reals();
    const TripletDataset hard = build_hard_pairs(load_intermediates(), normal, HardWinner::kReal, &reals, &specs, &cfg_.world);
    io::save_dataset(dir / "d_hard_real.hgd1", hard);
    report("hard", stage_model("hard", need_model("normal"), hard, Stage::kHard, cfg_, step_seed(kSeedHard)));
  }
  return reports;
}

std::vector<fs::path> Pipeline::sample(const std::string& model, int prompt, int count) {
  static const std::map<std::string, std::string> kSteps = {{"base", "train-sft"},     {"easy", "train-easy"},
                                                            {"normal", "train-normal"}, {"hard", "train-hard"},
                                                            {"conditioner", "train-conditioner"}};
  const auto it = kSteps.find(model);
  if (it == kSteps.end()) throw ValidationError("unknown model '" + model + "'");
  require(it->second, it->second);
  if (prompt < 0 || prompt >= cfg_.world.prompts) throw ValidationError("prompt id out of range");
  if (count < 1) throw ValidationError("sample count must be positive");
  const ModelState state = inference_state(load_model(out_ / "models" / (model + ".hgck")), cfg_);
  std::vector<int> ids(static_cast<std::size_t>(count), prompt);
  std::vector<RngStream> rngs;
  for (int i = 0; i < count; ++i) rngs.emplace_back(derive_seed(derive_seed(seed_, 0x5a), static_cast<std::uint64_t>(i)));
  const Tensor batch = hgdpo::sample(state.view(model == "conditioner"), ids, rngs, cfg_.sampler(), cfg_.schedule());
  std::vector<fs::path> paths;
  for (int i = 0; i < count; ++i) {
    const fs::path p = out_ / "samples" / ("sample_" + model + "_p" + std::to_string(prompt) + "_" + std::to_string(i) + ".ppm");
    io::save_ppm(p, batch.slice_rows(static_cast<std::size_t>(i), static_cast<std::size_t>(i) + 1).reshaped(cfg_.world.image_shape()));
    paths.push_back(p);
  }
  return paths;
}

}  // namespace hgdpo
