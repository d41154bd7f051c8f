#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "colornorm/image.hpp"
#include "colornorm/rng.hpp"

namespace colornorm {

/// Unit OD directions used by the generator: hematoxylin, eosin.
std::array<std::array<double, 3>, 2> synthetic_stains();

/// Two-stain texture: od = H * c_h + E * c_e with smooth random
/// concentration fields, regions of pure hematoxylin and pure eosin, and
/// white background blobs. Pixels are quantized to 8-bit levels so the image
/// survives a PPM round trip unchanged.
ImageRGB synthesize_image(std::size_t width, std::size_t height, Rng& rng);

/// Image i is drawn from the i-th split of Rng(seed).
std::vector<ImageRGB> synthesize_corpus(std::size_t count, std::size_t width, std::size_t height,
                                        std::uint64_t seed);

std::string corpus_file_name(std::size_t index);

/// Writes synth_00000.ppm, synth_00001.ppm, ... into `dir` (created if
/// missing) and returns the paths.
std::vector<std::filesystem::path> write_corpus(const std::filesystem::path& dir, std::size_t count,
                                                std::size_t width, std::size_t height, std::uint64_t seed);

}  // namespace colornorm
