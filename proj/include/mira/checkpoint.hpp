#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mira/model.hpp"

// Binary model persistence. Layout: magic "MIRA-CKPT", format version, a
// textual config block, named parameter records (name, shape, element width
// 32 or 64 bits, little-endian payload), and a trailing CRC-32 over all
// preceding bytes. Saving at 64 bits round-trips byte-identically.

namespace mira::checkpoint {

inline constexpr char kMagic[] = "MIRA-CKPT";
inline constexpr std::uint32_t kVersion = 1;

void save(const std::string& path, const model::Model& m, int bits = 64);
model::Model load(const std::string& path);

// Config (de)serialization shared with the checkpoint body; text lines of
// `key = value`.
std::string serialize_config(const model::ModelConfig& cfg);
model::ModelConfig deserialize_config(const std::string& text);

std::uint32_t crc32(const unsigned char* data, std::size_t n);

}  // namespace mira::checkpoint
