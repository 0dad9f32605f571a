// Copyright 2026 The hgdpo Authors
// SPDX-License-Identifier: Apache-2.0

#include "hgdpo/io.hpp"

#include <zlib.h>

#include <algorithm>
#include <bit>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <nlohmann/json.hpp>
#include <sstream>

#include "hgdpo/errors.hpp"

namespace hgdpo::io {

namespace {

constexpr std::string_view kCheckpointMagic = "HGCK";
constexpr std::string_view kDatasetMagic = "HGD1";

class Writer {
 public:
  void bytes(std::string_view s) { out_.append(s); }
  void u8(std::uint8_t v) { out_.push_back(static_cast<char>(v)); }
  void u16(std::uint16_t v) { le(v, 2); }
  void u32(std::uint32_t v) { le(v, 4); }
  void u64(std::uint64_t v) { le(v, 8); }
  void f64(double v) { le(std::bit_cast<std::uint64_t>(v), 8); }
  void tensor(const Tensor& t) {
    u32(static_cast<std::uint32_t>(t.rank()));
    for (std::size_t d : t.shape()) u32(static_cast<std::uint32_t>(d));
    for (double v : t.data()) f64(v);
  }
  std::string& str() { return out_; }

 private:
  void le(std::uint64_t v, int n) {
    for (int i = 0; i < n; ++i) out_.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
  }
  std::string out_;
};

class Reader {
 public:
  Reader(std::string_view data, std::string what) : data_(data), what_(std::move(what)) {}
  std::string_view bytes(std::size_t n) {
    need(n);
    auto s = data_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  std::uint8_t u8() { return static_cast<std::uint8_t>(le(1)); }
  std::uint16_t u16() { return static_cast<std::uint16_t>(le(2)); }
  std::uint32_t u32() { return static_cast<std::uint32_t>(le(4)); }
  std::uint64_t u64() { return le(8); }
  double f64() { return std::bit_cast<double>(le(8)); }
  Tensor tensor() {
    const std::uint32_t nd = u32();
    if (nd == 0 || nd > 8) throw FormatError(what_ + ": bad tensor rank " + std::to_string(nd));
    Shape shape;
    std::size_t n = 1;
    for (std::uint32_t i = 0; i < nd; ++i) {
      const std::uint32_t d = u32();
      if (d == 0) throw FormatError(what_ + ": zero tensor dimension");
      shape.push_back(d);
      n *= d;
    }
    if (n > remaining() / 8) throw TruncatedError(what_ + ": truncated tensor payload");
    std::vector<double> v(n);
    for (auto& x : v) x = f64();
    return Tensor(std::move(shape), std::move(v));
  }
  std::size_t remaining() const { return data_.size() - pos_; }
  std::size_t pos() const { return pos_; }

 private:
  void need(std::size_t n) const {
    if (remaining() < n) throw TruncatedError(what_ + ": unexpected end of data");
  }
  std::uint64_t le(int n) {
    need(static_cast<std::size_t>(n));
    std::uint64_t v = 0;
    for (int i = 0; i < n; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(data_[pos_ + i])) << (8 * i);
    pos_ += static_cast<std::size_t>(n);
    return v;
  }
  std::string_view data_;
  std::string what_;
  std::size_t pos_ = 0;
};

std::string fmt(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

std::vector<ad::Parameter*> state_parameters(ModelState& state) {
  std::vector<ad::Parameter*> out = state.denoiser.parameters();
  for (auto* p : state.conditioner.base_parameters()) out.push_back(p);
  for (auto* p : state.conditioner.adapter_parameters()) out.push_back(p);
  if (state.has_adapter) {
    for (auto& l : state.adapter.layers) {
      out.push_back(&l.down);
      out.push_back(&l.up);
    }
  }
  return out;
}

}  // namespace

const Tensor* Checkpoint::find(std::string_view name) const {
  for (const auto& t : tensors) {
    if (t.name == name) return &t.value;
  }
  return nullptr;
}

std::uint32_t crc32(std::string_view bytes) {
  uLong c = ::crc32(0L, Z_NULL, 0);
  c = ::crc32(c, reinterpret_cast<const Bytef*>(bytes.data()), static_cast<uInt>(bytes.size()));
  return static_cast<std::uint32_t>(c);
}

std::string encode_checkpoint(const Checkpoint& ck) {
  Writer w;
  w.bytes(kCheckpointMagic);
  w.u16(kCheckpointVersion);
  w.u64(ck.config_hash);
  w.u32(static_cast<std::uint32_t>(ck.tensors.size()));
  for (const auto& t : ck.tensors) {
    w.u32(static_cast<std::uint32_t>(t.name.size()));
    w.bytes(t.name);
    w.tensor(t.value);
  }
  const std::uint32_t crc = crc32(w.str());
  w.u32(crc);
  return std::move(w.str());
}

Checkpoint decode_checkpoint(std::string_view bytes) {
  if (bytes.size() < kCheckpointMagic.size() + 2 + 8 + 4 + 4) throw TruncatedError("checkpoint: file too short");
  if (bytes.substr(0, 4) != kCheckpointMagic) throw FormatError("checkpoint: bad magic");
  Reader r(bytes, "checkpoint");
  r.bytes(4);
  const std::uint16_t version = r.u16();
  if (version != kCheckpointVersion) {
    throw VersionError("checkpoint: version " + std::to_string(version) + ", expected " + std::to_string(kCheckpointVersion));
  }
  const std::string_view body = bytes.substr(0, bytes.size() - 4);
  Reader tail(bytes.substr(bytes.size() - 4), "checkpoint");
  const std::uint32_t stored = tail.u32();
  Checkpoint ck;
  try {
    Reader b(body, "checkpoint");
    b.bytes(6);
    ck.config_hash = b.u64();
    const std::uint32_t count = b.u32();
    for (std::uint32_t i = 0; i < count; ++i) {
      NamedTensor t;
      const std::uint32_t len = b.u32();
      t.name = std::string(b.bytes(len));
      t.value = b.tensor();
      ck.tensors.push_back(std::move(t));
    }
    if (b.remaining() != 0) throw FormatError("checkpoint: trailing bytes before checksum");
  } catch (const FormatError&) {
    // A damaged record usually means a damaged file: report the checksum
    // first when it disagrees, so corruption and truncation stay distinct.
    if (crc32(body) != stored) throw CrcError("checkpoint: CRC mismatch");
    throw;
  }
  if (crc32(body) != stored) throw CrcError("checkpoint: CRC mismatch");
  return ck;
}

void save_checkpoint(const fs::path& path, const Checkpoint& ck) { write_atomic(path, encode_checkpoint(ck)); }

Checkpoint load_checkpoint(const fs::path& path) { return decode_checkpoint(read_file(path)); }

std::string encode_dataset(const TripletDataset& data) {
  Writer w;
  w.bytes(kDatasetMagic);
  w.u32(static_cast<std::uint32_t>(data.size()));
  for (const auto& t : data) {
    if (t.prompt < 0) throw ValidationError("dataset: negative prompt id");
    w.u32(static_cast<std::uint32_t>(t.prompt));
    w.u8(static_cast<std::uint8_t>(t.tag));
    w.tensor(t.winner);
    w.tensor(t.loser);
    w.f64(t.winner_score);
    w.f64(t.loser_score);
  }
  return std::move(w.str());
}

TripletDataset decode_dataset(std::string_view bytes) {
  if (bytes.size() < 8) throw TruncatedError("dataset: file too short");
  if (bytes.substr(0, 4) != kDatasetMagic) throw FormatError("dataset: bad magic");
  Reader r(bytes, "dataset");
  r.bytes(4);
  const std::uint32_t count = r.u32();
  TripletDataset out;
  for (std::uint32_t i = 0; i < count; ++i) {
    PreferenceTriplet t;
    t.prompt = static_cast<int>(r.u32());
    const auto tag = parse_stage_tag(r.u8());
    if (!tag) throw FormatError("dataset: unknown stage tag in record " + std::to_string(i));
    t.tag = *tag;
    t.winner = r.tensor();
    t.loser = r.tensor();
    t.winner_score = r.f64();
    t.loser_score = r.f64();
    out.push_back(std::move(t));
  }
  if (r.remaining() != 0) throw FormatError("dataset: trailing bytes");
  return out;
}

void save_dataset(const fs::path& path, const TripletDataset& data) { write_atomic(path, encode_dataset(data)); }

TripletDataset load_dataset(const fs::path& path) { return decode_dataset(read_file(path)); }

std::string encode_ppm(const Tensor& img) {
  if (img.rank() != 3 || img.dim(0) != 3) throw ShapeError("encode_ppm: expected [3,H,W], got " + to_string(img.shape()));
  const std::size_t h = img.dim(1), w = img.dim(2), plane = h * w;
  std::string out = "P6\n" + std::to_string(w) + " " + std::to_string(h) + "\n255\n";
  for (std::size_t i = 0; i < plane; ++i) {
    for (std::size_t c = 0; c < 3; ++c) {
      const double v = std::round((img[c * plane + i] + 1.0) / 2.0 * 255.0);
      out.push_back(static_cast<char>(static_cast<unsigned char>(std::clamp(v, 0.0, 255.0))));
    }
  }
  return out;
}

void save_ppm(const fs::path& path, const Tensor& img) { write_atomic(path, encode_ppm(img)); }

void write_atomic(const fs::path& path, std::string_view bytes) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) throw Error("cannot open " + tmp.string() + " for writing");
    f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!f) throw Error("write failed: " + tmp.string());
  }
  fs::rename(tmp, path);
}

std::string read_file(const fs::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw Error("cannot open " + path.string());
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

std::string report_text(const StageReport& r) {
  std::ostringstream os;
  os << "label=" << r.label << "\n"
     << "mean_oracle=" << fmt(r.mean_oracle) << "\n"
     << "mean_alignment=" << fmt(r.mean_alignment) << "\n"
     << "mean_quality=" << fmt(r.mean_quality) << "\n"
     << "mean_sharpness_term=" << fmt(r.mean_sharpness_term) << "\n"
     << "toy_fid=" << fmt(r.toy_fid) << "\n"
     << "hue_distance_vs_base=" << fmt(r.hue_distance_vs_base) << "\n"
     << "sharpness=" << fmt(r.sharpness) << "\n"
     << "win_rate_vs_base=" << fmt(r.win_rate_vs_base) << "\n"
     << "n_samples=" << r.n_samples << "\n"
     << "seed=" << r.seed << "\n";
  return os.str();
}

std::string report_json(const StageReport& r) {
  nlohmann::ordered_json j;
  j["label"] = r.label;
  j["mean_oracle"] = r.mean_oracle;
  j["mean_alignment"] = r.mean_alignment;
  j["mean_quality"] = r.mean_quality;
  j["mean_sharpness_term"] = r.mean_sharpness_term;
  j["toy_fid"] = r.toy_fid;
  j["hue_distance_vs_base"] = r.hue_distance_vs_base;
  j["sharpness"] = r.sharpness;
  j["win_rate_vs_base"] = r.win_rate_vs_base;
  j["n_samples"] = r.n_samples;
  j["seed"] = r.seed;
  return j.dump(2) + "\n";
}

StageReport parse_report_text(std::string_view text) {
  std::map<std::string, std::string> kv;
  std::istringstream is{std::string(text)};
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw FormatError("report: line without '=': " + line);
    kv[line.substr(0, eq)] = line.substr(eq + 1);
  }
  const auto get = [&](const std::string& k) -> const std::string& {
    const auto it = kv.find(k);
    if (it == kv.end()) throw FormatError("report: missing key " + k);
    return it->second;
  };
  const auto num = [&](const std::string& k) {
    const std::string& v = get(k);
    double out = 0.0;
    const auto res = std::from_chars(v.data(), v.data() + v.size(), out);
    if (res.ec != std::errc() || res.ptr != v.data() + v.size()) throw FormatError("report: bad value for " + k);
    return out;
  };
  const auto integer = [&](const std::string& k) {
    const std::string& v = get(k);
    std::uint64_t out = 0;
    const auto res = std::from_chars(v.data(), v.data() + v.size(), out);
    if (res.ec != std::errc() || res.ptr != v.data() + v.size()) throw FormatError("report: bad value for " + k);
    return out;
  };
  StageReport r;
  r.label = get("label");
  r.mean_oracle = num("mean_oracle");
  r.mean_alignment = num("mean_alignment");
  r.mean_quality = num("mean_quality");
  r.mean_sharpness_term = num("mean_sharpness_term");
  r.toy_fid = num("toy_fid");
  r.hue_distance_vs_base = num("hue_distance_vs_base");
  r.sharpness = num("sharpness");
  r.win_rate_vs_base = num("win_rate_vs_base");
  r.n_samples = static_cast<int>(integer("n_samples"));
  r.seed = integer("seed");
  return r;
}

Checkpoint to_checkpoint(const ModelState& state, std::uint64_t config_hash) {
  Checkpoint ck;
  ck.config_hash = config_hash;
  for (auto* p : state_parameters(const_cast<ModelState&>(state))) ck.tensors.push_back({p->name, p->value});
  return ck;
}

void from_checkpoint(const Checkpoint& ck, ModelState& state) {
  state.has_adapter = !state.adapter.layers.empty() && ck.find(state.adapter.layers.front().down.name) != nullptr;
  auto params = state_parameters(state);
  if (params.size() != ck.tensors.size()) {
    throw FormatError("checkpoint: " + std::to_string(ck.tensors.size()) + " tensors, model expects " +
                      std::to_string(params.size()));
  }
  for (auto* p : params) {
    const Tensor* t = ck.find(p->name);
    if (!t) throw FormatError("checkpoint: missing tensor " + p->name);
    if (t->shape() != p->value.shape()) {
      throw FormatError("checkpoint: tensor " + p->name + " has shape " + to_string(t->shape()) + ", expected " +
                        to_string(p->value.shape()));
    }
    p->value = *t;
    p->zero_grad();
  }
}

}  // namespace hgdpo::io
