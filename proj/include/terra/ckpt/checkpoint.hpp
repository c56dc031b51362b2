#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "terra/autodiff/optim.hpp"
#include "terra/autodiff/params.hpp"

namespace terra::ckpt {

inline constexpr uint32_t kFormatVersion = 2;

/// Model weights plus what is needed to rebuild and resume the model.
///
/// File layout (little-endian):
///   "TFCK" | u32 version | u32 header_len | header JSON | u64 FNV-1a(header) | f32 payload
/// The header lists tensors in payload order with name, shape, dtype,
/// trainable flag and group ("param", "adam_m", "adam_v").
struct Checkpoint {
  std::string kind;         // "vae", "denoiser", "control", ...
  nlohmann::json config;    // architecture config
  nlohmann::json metadata;  // training metadata: seed, step, modality, ...
  ad::ParameterSet params;
  std::optional<ad::OptimizerState<float>> optimizer;

  std::string config_hash() const;
};

/// Hex FNV-1a over parameter names, shapes and values; identifies a weight set.
std::string params_hash(const ad::ParameterSet& params);

std::vector<uint8_t> serialize(const Checkpoint& ck);
/// Reads any version in the migration table; throws FormatError on bad magic,
/// unknown version, header hash mismatch or payload length mismatch.
Checkpoint deserialize(std::span<const uint8_t> bytes);

void save(const std::filesystem::path& path, const Checkpoint& ck);
Checkpoint load(const std::filesystem::path& path);

/// Hex FNV-1a of the file bytes.
std::string file_hash(const std::filesystem::path& path);
std::string bytes_hash(std::span<const uint8_t> bytes);

}  // namespace terra::ckpt
