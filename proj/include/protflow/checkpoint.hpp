#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "protflow/flow.hpp"
#include "protflow/latent.hpp"
#include "protflow/nn.hpp"
#include "protflow/numeric.hpp"
#include "protflow/seqio.hpp"

namespace protflow {

inline constexpr std::uint32_t kCheckpointVersion = 1;

/// File layout: "PFLW", u32 LE version, u64 LE header length, UTF-8 JSON
/// header, then every tensor as LE f32 in header order. Header offsets are
/// relative to the start of the payload.
struct Checkpoint {
  nlohmann::json config = nlohmann::json::object();
  nlohmann::json metadata = nlohmann::json::object();
  Rng::State rng;
  std::uint64_t step = 0;
  std::string parent_hash;  // empty for a root checkpoint
  std::vector<std::pair<std::string, Matrix>> tensors;

  /// Replaces an existing tensor of the same name.
  void put(const std::string& name, const Matrix& value);
  const Matrix* find(const std::string& name) const;
  bool has_prefix(const std::string& prefix) const;
};

/// Throws NonFiniteValue for non-finite tensors.
std::vector<std::uint8_t> serialize_checkpoint(const Checkpoint& ckpt);
/// Throws BadMagic, VersionUnsupported or CorruptOffset.
Checkpoint parse_checkpoint(const std::vector<std::uint8_t>& bytes);

/// Atomic: writes a temporary file next to `path` and renames it.
void save_checkpoint(const Checkpoint& ckpt, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

/// FNV-1a 64-bit hash of a byte string / file contents, 16 hex digits.
std::string fnv1a_hex(const std::vector<std::uint8_t>& bytes);
std::string file_hash(const std::string& path);

/// Writes bytes to path atomically (temp + rename).
void write_file_atomic(const std::string& path, const std::string& contents);

// ---------------------------------------------------------------------------
// Model packing. Tensor names are "<prefix><param name>".

/// Rounds the live parameters to f32 first, so a reload is bitwise identical.
void put_params(Checkpoint& ckpt, const std::string& prefix, const nn::ParamList& params);
/// Throws IncompatibleCheckpoint when a tensor is missing or misshapen.
void get_params(const Checkpoint& ckpt, const std::string& prefix, const nn::ParamList& params);

/// Rounds smoothing statistics to the f32 storage precision.
void round_stats_to_float(SmoothingStats& stats);

void put_encoder(Checkpoint& ckpt, const std::string& prefix, Encoder& encoder);
Encoder get_encoder(const Checkpoint& ckpt, const std::string& prefix);
void put_decoder(Checkpoint& ckpt, const std::string& prefix, Decoder& decoder);
Decoder get_decoder(const Checkpoint& ckpt, const std::string& prefix, std::size_t dim);
void put_stats(Checkpoint& ckpt, const std::string& prefix, const SmoothingStats& stats);
SmoothingStats get_stats(const Checkpoint& ckpt, const std::string& prefix);
void put_compressor(Checkpoint& ckpt, const std::string& prefix, Compressor& compressor);
Compressor get_compressor(const Checkpoint& ckpt, const std::string& prefix);
void put_field(Checkpoint& ckpt, const std::string& prefix, VectorField& field);
VectorField get_field(const Checkpoint& ckpt, const std::string& prefix);

nlohmann::json lengths_to_json(const LengthDistribution& dist);
LengthDistribution lengths_from_json(const nlohmann::json& j);

}  // namespace protflow
