#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "colornorm/model.hpp"

namespace colornorm {

// Weight file layout (all integers little-endian):
//   "CNRM" | u32 version (=1) | u32 header length | header: UTF-8 JSON ArchSpec
//   | f32 tensors in canonical order | u32 CRC-32 (IEEE) of every preceding byte
// Per dense layer: conv weight (O,I,k,k), conv bias, gamma, beta,
// running_mean, running_var; then head weight and head bias.

inline constexpr std::uint32_t kWeightsVersion = 1;

std::string arch_to_json(const ArchSpec& spec);
ArchSpec arch_from_json(const std::string& text);

std::vector<std::uint8_t> encode_weights(const Model& model);

/// Throws BadMagic, UnsupportedVersion, ChecksumMismatch or MalformedFile.
/// The returned model is in infer mode.
Model decode_weights(const std::vector<std::uint8_t>& bytes);

void save_weights(const Model& model, std::ostream& out);
void save_weights(const Model& model, const std::filesystem::path& path);
Model load_weights(std::istream& in);
Model load_weights(const std::filesystem::path& path);

std::uint32_t crc32(const std::uint8_t* data, std::size_t size);

}  // namespace colornorm
