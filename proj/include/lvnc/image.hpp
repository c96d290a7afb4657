#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <random>
#include <vector>

#include "lvnc/mask.hpp"

namespace lvnc::data {

/// Single-channel image, row-major.
struct Image {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<double> pixels;

  double at(std::size_t row, std::size_t col) const { return pixels[row * width + col]; }
  bool operator==(const Image&) const = default;
};

Image rotate90(const Image& img, int quarter_turns);

/// (x - mean) / std over the whole slice (population std). Throws
/// DegenerateInputError for a constant image.
Image normalize(const Image& img);

struct Augmented {
  Image image;
  mask::SegMask mask;
  int quarter_turns = 0;  // 0 when no rotation was applied
};

inline constexpr double kRotationProbability = 0.25;

/// With probability 0.25 rotates image and mask together by one of 90, 180
/// or 270 degrees (uniform); otherwise returns them unchanged.
Augmented augment(const Image& img, const mask::SegMask& m, std::mt19937_64& rng);

// Rasters. Images are 16-bit binary PGM (P5, maxval 65535, samples
// big-endian as Netpbm defines); 8-bit PGM is accepted on read. Masks are
// 8-bit P5 with the label values 0..3 stored verbatim.

Image read_pgm_image(const std::filesystem::path& path);
void write_pgm_image(const std::filesystem::path& path, const Image& img);
mask::SegMask read_pgm_mask(const std::filesystem::path& path);
void write_pgm_mask(const std::filesystem::path& path, const mask::SegMask& m);

struct Slice {
  Image image;
  mask::SegMask mask;
};

/// Loads an image/mask pair and checks that their sizes agree.
Slice load_slice(const std::filesystem::path& image_path, const std::filesystem::path& mask_path);
/// Image pixels must be integers in [0, 65535].
void save_slice(const std::filesystem::path& image_path, const std::filesystem::path& mask_path,
                const Slice& slice);

// Overlay: 8-bit RGB PPM (P6). With v = gray / 2 (gray = input scaled to
// 0..255), background is (v, v, v), EL (v, v+128, v), IC (v, v, v+128) and
// T (v+128, v+128, v). decode_overlay inverts this exactly.

struct RgbImage {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<std::uint8_t> rgb;  // interleaved
};

RgbImage make_overlay(const Image& img, const mask::SegMask& m);
mask::SegMask decode_overlay(const RgbImage& overlay);
void write_ppm(const std::filesystem::path& path, const RgbImage& img);
RgbImage read_ppm(const std::filesystem::path& path);

}  // namespace lvnc::data
