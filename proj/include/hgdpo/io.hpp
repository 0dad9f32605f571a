// Copyright 2026 The hgdpo Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "hgdpo/forge.hpp"
#include "hgdpo/metrics.hpp"
#include "hgdpo/model.hpp"
#include "hgdpo/tensor.hpp"

namespace hgdpo::io {

namespace fs = std::filesystem;

inline constexpr std::uint16_t kCheckpointVersion = 1;

struct NamedTensor {
  std::string name;
  Tensor value;
  bool operator==(const NamedTensor&) const = default;
};

/// HGCK layout (little-endian): "HGCK", u16 version, u64 config hash,
/// u32 tensor count, then per tensor u32 name length, name bytes, u32 ndim,
/// u32 dims, f64 payload; finally a CRC32 over every preceding byte.
struct Checkpoint {
  std::uint64_t config_hash = 0;
  std::vector<NamedTensor> tensors;

  const Tensor* find(std::string_view name) const;
  bool operator==(const Checkpoint&) const = default;
};

std::uint32_t crc32(std::string_view bytes);

std::string encode_checkpoint(const Checkpoint& ck);
/// Throws CrcError, TruncatedError, VersionError or FormatError (bad magic).
Checkpoint decode_checkpoint(std::string_view bytes);
void save_checkpoint(const fs::path& path, const Checkpoint& ck);
Checkpoint load_checkpoint(const fs::path& path);

/// HGD1 layout: "HGD1", u32 count, then per record u32 prompt, u8 tag, two
/// tensors (u32 ndim, u32 dims, f64 payload), winner and loser f64 scores.
std::string encode_dataset(const TripletDataset& data);
TripletDataset decode_dataset(std::string_view bytes);
void save_dataset(const fs::path& path, const TripletDataset& data);
TripletDataset load_dataset(const fs::path& path);

/// Binary P6 with 8-bit channels, v -> round((v + 1) / 2 * 255) clamped.
std::string encode_ppm(const Tensor& img);
void save_ppm(const fs::path& path, const Tensor& img);

/// Writes to a sibling temporary file, then renames over `path`.
void write_atomic(const fs::path& path, std::string_view bytes);
std::string read_file(const fs::path& path);

/// Line-oriented key=value text and the same fields as JSON.
std::string report_text(const StageReport& r);
std::string report_json(const StageReport& r);
StageReport parse_report_text(std::string_view text);

/// Flattened state: base denoiser, conditioner, and (when present) the
/// denoiser adapter.
Checkpoint to_checkpoint(const ModelState& state, std::uint64_t config_hash);
/// Copies tensors into `state`, whose layout (layer shapes, adapter rank)
/// must already match; errors name the first mismatching tensor.
void from_checkpoint(const Checkpoint& ck, ModelState& state);

}  // namespace hgdpo::io
