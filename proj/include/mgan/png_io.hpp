#pragma once
#include <cstdint>
#include <filesystem>
#include <vector>

#include "mgan/image.hpp"

namespace mgan {

enum class ImageKind { Label, Ct, Pet };

// Lossless 16-bit grayscale PNG. Values in [0,1] are quantized to
// uint16 with round(v * 65535), so a save/read round trip is exact to
// 0.5/65535 per pixel and the endpoints 0 and 1 are exact.

void save_image(const ImageGrid& grid, const std::filesystem::path& path);
ImageGrid read_image(const std::filesystem::path& path, ImageKind kind);

// In-memory variants (used by round-trip property tests and hashing).
std::vector<uint8_t> encode_png(const ImageGrid& grid);
ImageGrid decode_png(const std::vector<uint8_t>& bytes, ImageKind kind);

inline uint16_t quantize16(double v) {
    if (v <= 0.0) return 0;
    if (v >= 1.0) return 65535;
    return uint16_t(v * 65535.0 + 0.5);
}

inline double dequantize16(uint16_t q) { return double(q) / 65535.0; }

}  // namespace mgan
