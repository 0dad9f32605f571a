// Copyright 2026 The hgdpo Authors
// SPDX-License-Identifier: Apache-2.0

#include "hgdpo/config.hpp"

#include <charconv>
#include <cmath>
#include <functional>
#include <map>
#include <set>
#include <sstream>
#include <vector>

#include "hgdpo/errors.hpp"
#include "hgdpo/io.hpp"

namespace hgdpo {

namespace {

struct Entry {
  std::string section;
  std::string key;
  std::function<std::string(const Config&)> get;
  std::function<void(Config&, const std::string&)> set;
  std::string full() const { return section + "." + key; }
};

std::string fmt_double(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

[[noreturn]] void bad_value(const std::string& key, const std::string& value, const char* want) {
  throw ValidationError("config key " + key + ": expected " + want + ", got '" + value + "'");
}

double parse_double(const std::string& key, const std::string& s) {
  try {
    std::size_t n = 0;
    const double v = std::stod(s, &n);
    if (n != s.size() || !std::isfinite(v)) bad_value(key, s, "a finite number");
    return v;
  } catch (const std::logic_error&) {
    bad_value(key, s, "a number");
  }
}

template <typename T>
T parse_int(const std::string& key, const std::string& s) {
  T v{};
  int base = 10;
  std::string_view body = s;
  if (body.starts_with("0x")) {
    base = 16;
    body.remove_prefix(2);
  }
  const auto [ptr, ec] = std::from_chars(body.data(), body.data() + body.size(), v, base);
  if (ec != std::errc() || ptr != body.data() + body.size() || body.empty()) bad_value(key, s, "an integer");
  return v;
}

bool parse_bool(const std::string& key, const std::string& s) {
  if (s == "true") return true;
  if (s == "false") return false;
  bad_value(key, s, "true or false");
}

template <typename E>
E parse_enum(const std::string& key, const std::string& s, const std::vector<std::pair<std::string, E>>& names) {
  for (const auto& [n, v] : names) {
    if (n == s) return v;
  }
  std::string want = "one of";
  for (const auto& [n, v] : names) want += " " + n;
  bad_value(key, s, want.c_str());
}

template <typename E>
std::string enum_name(E v, const std::vector<std::pair<std::string, E>>& names) {
  for (const auto& [n, e] : names) {
    if (e == v) return n;
  }
  return "?";
}

const std::vector<std::pair<std::string, SamplerKind>> kSamplerNames = {{"ancestral", SamplerKind::kAncestral},
                                                                        {"ddim", SamplerKind::kDdim}};
const std::vector<std::pair<std::string, ReferenceKind>> kReferenceNames = {{"stage-start", ReferenceKind::kStageStart},
                                                                            {"base", ReferenceKind::kBase}};
const std::vector<std::pair<std::string, HardWinner>> kHardWinnerNames = {{"intermediate-t1", HardWinner::kIntermediateT1},
                                                                          {"real", HardWinner::kReal}};
const std::vector<std::pair<std::string, NaiveLoser>> kNaiveLoserNames = {{"best-of-pool", NaiveLoser::kBestOfPool},
                                                                          {"random", NaiveLoser::kRandom}};
const std::vector<std::pair<std::string, AdapterScope>> kScopeNames = {{"all-blocks", AdapterScope::kAllBlocks},
                                                                       {"output-half", AdapterScope::kOutputHalf}};

template <typename T>
Entry int_entry(std::string section, std::string key, T Config::*field) {
  Entry e{section, key, nullptr, nullptr};
  const std::string full = section + "." + key;
  e.get = [field](const Config& c) { return std::to_string(c.*field); };
  e.set = [field, full](Config& c, const std::string& s) { c.*field = parse_int<T>(full, s); };
  return e;
}

Entry double_entry(std::string section, std::string key, std::function<double&(Config&)> ref) {
  Entry e{section, key, nullptr, nullptr};
  const std::string full = section + "." + key;
  e.get = [ref](const Config& c) { return fmt_double(ref(const_cast<Config&>(c))); };
  e.set = [ref, full](Config& c, const std::string& s) { ref(c) = parse_double(full, s); };
  return e;
}

template <typename T>
Entry sub_int_entry(std::string section, std::string key, std::function<T&(Config&)> ref) {
  Entry e{section, key, nullptr, nullptr};
  const std::string full = section + "." + key;
  e.get = [ref](const Config& c) { return std::to_string(ref(const_cast<Config&>(c))); };
  e.set = [ref, full](Config& c, const std::string& s) { ref(c) = parse_int<T>(full, s); };
  return e;
}

template <typename E>
Entry enum_entry(std::string section, std::string key, E Config::*field, const std::vector<std::pair<std::string, E>>& names) {
  Entry e{section, key, nullptr, nullptr};
  const std::string full = section + "." + key;
  e.get = [field, &names](const Config& c) { return enum_name(c.*field, names); };
  e.set = [field, full, &names](Config& c, const std::string& s) { c.*field = parse_enum(full, s, names); };
  return e;
}

void stage_entries(std::vector<Entry>& out, const std::string& name, StageSettings Config::*stage) {
  const std::string sec = "stages." + name;
  out.push_back(sub_int_entry<int>(sec, "steps", [stage](Config& c) -> int& { return (c.*stage).steps; }));
  out.push_back(sub_int_entry<int>(sec, "batch", [stage](Config& c) -> int& { return (c.*stage).batch; }));
  out.push_back(double_entry(sec, "lr", [stage](Config& c) -> double& { return (c.*stage).lr; }));
}

const std::vector<Entry>& entries() {
  static const std::vector<Entry> table = [] {
    std::vector<Entry> t;
    t.push_back(sub_int_entry<int>("world", "prompts", [](Config& c) -> int& { return c.world.prompts; }));
    t.push_back(double_entry("world", "blob_sigma", [](Config& c) -> double& { return c.world.blob_sigma; }));
    t.push_back(double_entry("world", "texture_amplitude", [](Config& c) -> double& { return c.world.texture_amplitude; }));
    t.push_back(double_entry("world", "noise_amplitude", [](Config& c) -> double& { return c.world.noise_amplitude; }));
    t.push_back(double_entry("world", "quality_percentile", [](Config& c) -> double& { return c.world.quality_percentile; }));
    t.push_back(sub_int_entry<int>("world", "pilot_renders", [](Config& c) -> int& { return c.world.pilot_renders; }));

    t.push_back(int_entry("schedule", "timesteps", &Config::timesteps));
    t.push_back(double_entry("schedule", "beta_min", [](Config& c) -> double& { return c.beta_min; }));
    t.push_back(double_entry("schedule", "beta_max", [](Config& c) -> double& { return c.beta_max; }));

    t.push_back(int_entry("model", "hidden", &Config::hidden));
    t.push_back(int_entry("model", "blocks", &Config::blocks));
    t.push_back(int_entry("model", "time_dim", &Config::time_dim));
    t.push_back(int_entry("model", "cond_dim", &Config::cond_dim));
    t.push_back(int_entry("model", "denoiser_rank", &Config::denoiser_rank));
    t.push_back(int_entry("model", "conditioner_rank", &Config::conditioner_rank));
    t.push_back(double_entry("model", "merge_weight", [](Config& c) -> double& { return c.merge_weight; }));
    t.push_back(double_entry("model", "conditioner_gate", [](Config& c) -> double& { return c.conditioner_gate; }));

    t.push_back(int_entry("sampler", "steps", &Config::sampler_steps));
    t.push_back(double_entry("sampler", "guidance", [](Config& c) -> double& { return c.guidance; }));
    t.push_back(enum_entry("sampler", "kind", &Config::sampler_kind, kSamplerNames));
    t.push_back(double_entry("sampler", "eta", [](Config& c) -> double& { return c.eta; }));

    t.push_back(double_entry("dpo", "beta", [](Config& c) -> double& { return c.dpo.beta; }));
    t.push_back(enum_entry("dpo", "reference", &Config::reference, kReferenceNames));
    t.push_back(double_entry("dpo", "adam_beta1", [](Config& c) -> double& { return c.adam_beta1; }));
    t.push_back(double_entry("dpo", "adam_beta2", [](Config& c) -> double& { return c.adam_beta2; }));
    t.push_back(double_entry("dpo", "adam_eps", [](Config& c) -> double& { return c.adam_eps; }));

    t.push_back(int_entry("forge", "pool_size", &Config::pool_size));
    t.push_back(int_entry("forge", "levels", &Config::levels));
    t.push_back(int_entry("forge", "window_lo", &Config::window_lo));
    t.push_back(int_entry("forge", "window_hi", &Config::window_hi));
    t.push_back(enum_entry("forge", "hard_winner", &Config::hard_winner, kHardWinnerNames));
    t.push_back(enum_entry("forge", "naive_loser", &Config::naive_loser, kNaiveLoserNames));

    stage_entries(t, "sft", &Config::sft);
    stage_entries(t, "easy", &Config::easy);
    t.push_back(double_entry("stages.easy", "lambda_stat", [](Config& c) -> double& { return c.stat.lambda_stat; }));
    {
      Entry e{"stages.easy", "share_noise", nullptr, nullptr};
      e.get = [](const Config& c) { return std::string(c.stat.share_noise ? "true" : "false"); };
      e.set = [](Config& c, const std::string& s) { c.stat.share_noise = parse_bool("stages.easy.share_noise", s); };
      t.push_back(e);
    }
    stage_entries(t, "normal", &Config::normal);
    stage_entries(t, "hard", &Config::hard);
    t.push_back(enum_entry("stages.hard", "scope", &Config::hard_scope, kScopeNames));
    stage_entries(t, "conditioner", &Config::conditioner);

    t.push_back(int_entry("eval", "samples", &Config::eval_samples));
    t.push_back(int_entry("eval", "fid_dim", &Config::fid_dim));
    t.push_back(int_entry("eval", "fid_seed", &Config::fid_seed));
    return t;
  }();
  return table;
}

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

void check_stage(const std::string& name, const StageSettings& s) {
  if (s.steps < 0) throw ValidationError("config key stages." + name + ".steps must be non-negative");
  if (s.batch < 1) throw ValidationError("config key stages." + name + ".batch must be positive");
  if (!(s.lr > 0.0)) throw ValidationError("config key stages." + name + ".lr must be positive");
}

}  // namespace

NoiseSchedule Config::schedule() const { return NoiseSchedule::linear(timesteps, beta_min, beta_max); }

SamplerConfig Config::sampler() const { return SamplerConfig{sampler_steps, guidance, sampler_kind, eta}; }

DenoiserConfig Config::denoiser() const {
  DenoiserConfig d;
  d.hidden = hidden;
  d.blocks = blocks;
  d.time_dim = time_dim;
  d.cond_dim = cond_dim;
  d.timesteps = static_cast<std::size_t>(timesteps);
  return d;
}

WindowConfig Config::window() const {
  return WindowConfig::scaled(timesteps, levels, static_cast<std::size_t>(window_lo - 1),
                              static_cast<std::size_t>(window_hi - 1));
}

AdamConfig Config::adam(double lr) const { return AdamConfig{lr, adam_beta1, adam_beta2, adam_eps}; }

int Config::conditioner_gate_lo() const { return static_cast<int>(std::lround(conditioner_gate * timesteps)); }

void Config::validate() const {
  if (world.prompts < 2) throw ValidationError("config key world.prompts must be at least 2");
  if (!(world.blob_sigma > 0.0)) throw ValidationError("config key world.blob_sigma must be positive");
  if (world.texture_amplitude < 0.0) throw ValidationError("config key world.texture_amplitude must be non-negative");
  if (world.noise_amplitude < 0.0 || world.noise_amplitude > 0.02) {
    throw ValidationError("config key world.noise_amplitude must lie in [0, 0.02]");
  }
  if (world.quality_percentile < 0.0 || world.quality_percentile > 100.0) {
    throw ValidationError("config key world.quality_percentile must lie in [0, 100]");
  }
  if (world.pilot_renders < 1) throw ValidationError("config key world.pilot_renders must be positive");
  if (timesteps < 2) throw ValidationError("config key schedule.timesteps must be at least 2");
  if (!(beta_min > 0.0 && beta_min <= beta_max && beta_max < 1.0)) {
    throw ValidationError("config keys schedule.beta_min/beta_max need 0 < beta_min <= beta_max < 1");
  }
  if (hidden < 1 || time_dim < 2 || time_dim % 2 != 0 || cond_dim < 1) {
    throw ValidationError("config section model: hidden, cond_dim must be positive and time_dim even");
  }
  if (blocks < 2) throw ValidationError("config key model.blocks must be at least 2");
  if (denoiser_rank < 1 || conditioner_rank < 1) throw ValidationError("config section model: adapter ranks must be positive");
  if (merge_weight < 0.0) throw ValidationError("config key model.merge_weight must be non-negative");
  if (conditioner_gate < 0.0 || conditioner_gate >= 1.0) throw ValidationError("config key model.conditioner_gate must lie in [0, 1)");
  if (sampler_steps < 1 || sampler_steps > timesteps) throw ValidationError("config key sampler.steps must lie in [1, schedule.timesteps]");
  if (guidance < 0.0) throw ValidationError("config key sampler.guidance must be non-negative");
  if (eta < 0.0 || eta > 1.0) throw ValidationError("config key sampler.eta must lie in [0, 1]");
  if (!(dpo.beta > 0.0)) throw ValidationError("config key dpo.beta must be positive");
  if (!(adam_beta1 >= 0.0 && adam_beta1 < 1.0 && adam_beta2 >= 0.0 && adam_beta2 < 1.0 && adam_eps > 0.0)) {
    throw ValidationError("config section dpo: Adam betas must lie in [0, 1) and adam_eps must be positive");
  }
  if (pool_size < 2) throw ValidationError("config key forge.pool_size must be at least 2");
  if (levels < 3) throw ValidationError("config key forge.levels must be at least 3");
  if (window_lo < 2 || window_lo > window_hi || window_hi >= levels) {
    throw ValidationError("config keys forge.window_lo/window_hi need 1 < window_lo <= window_hi < levels");
  }
  if (levels > timesteps) throw ValidationError("config key forge.levels must not exceed schedule.timesteps");
  check_stage("sft", sft);
  check_stage("easy", easy);
  check_stage("normal", normal);
  check_stage("hard", hard);
  check_stage("conditioner", conditioner);
  if (stat.lambda_stat < 0.0) throw ValidationError("config key stages.easy.lambda_stat must be non-negative");
  if (eval_samples < static_cast<int>(fid_dim) + 1) throw ValidationError("config key eval.samples must exceed eval.fid_dim");
  if (fid_dim < 1 || fid_dim > 3 * world.height * world.width) throw ValidationError("config key eval.fid_dim out of range");
}

std::string Config::to_text() const {
  std::ostringstream os;
  std::string section;
  for (const auto& e : entries()) {
    if (e.section != section) {
      if (!section.empty()) os << "\n";
      section = e.section;
      os << "[" << section << "]\n";
    }
    os << e.key << " = " << e.get(*this) << "\n";
  }
  return os.str();
}

std::uint64_t Config::hash() const {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : to_text()) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

Config Config::parse(std::string_view text) {
  std::map<std::string, const Entry*> known;
  for (const auto& e : entries()) known[e.full()] = &e;
  Config cfg;
  std::set<std::string> seen;
  std::string section;
  std::istringstream is{std::string(text)};
  std::string raw;
  int lineno = 0;
  while (std::getline(is, raw)) {
    ++lineno;
    const auto hash = raw.find('#');
    const std::string line = trim(hash == std::string::npos ? raw : raw.substr(0, hash));
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') throw ValidationError("config line " + std::to_string(lineno) + ": malformed section header");
      section = trim(line.substr(1, line.size() - 2));
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ValidationError("config line " + std::to_string(lineno) + ": expected key = value");
    const std::string key = section + "." + trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    const auto it = known.find(key);
    if (it == known.end()) throw ValidationError("unknown config key " + key);
    if (!seen.insert(key).second) throw ValidationError("duplicate config key " + key);
    it->second->set(cfg, value);
  }
  for (const auto& e : entries()) {
    if (!seen.count(e.full())) throw ValidationError("missing config key " + e.full());
  }
  cfg.validate();
  return cfg;
}

Config Config::load(const std::filesystem::path& path) {
  std::string text;
  try {
    text = io::read_file(path);
  } catch (const Error& e) {
    throw ValidationError(std::string("cannot read config: ") + e.what());
  }
  return parse(text);
}

}  // namespace hgdpo
