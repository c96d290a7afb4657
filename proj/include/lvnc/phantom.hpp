#pragma once

#include <cstddef>
#include <cstdint>
#include <string>

#include "lvnc/image.hpp"
#include "lvnc/mask.hpp"

namespace lvnc::data {

struct TissueIntensity {
  double mean = 0.0;
  double noise_sd = 0.0;
};

/// Geometry and appearance of one synthetic short-axis slice. Lengths are
/// in pixels; intensities are in arbitrary units before 16-bit quantisation.
struct PhantomParams {
  std::size_t size = 64;
  double center_x = 32.0;
  double center_y = 32.0;
  double inner_radius = 12.5;
  double outer_radius = 17.0;
  /// Trabeculation intensity in [0, 1]: 0 gives no trabeculae, larger values
  /// give more and thicker, longer protrusions.
  double theta = 0.5;
  /// Pixel scale of trabecular thickness (1 at 64 x 64).
  double detail_scale = 1.0;
  TissueIntensity background{0.15, 0.05};
  TissueIntensity external_layer{0.40, 0.05};
  TissueIntensity internal_cavity{0.85, 0.05};
  TissueIntensity trabeculae{0.60, 0.05};
  /// Peak relative amplitude of the smooth multiplicative bias field.
  double bias_amplitude = 0.15;
  /// Scanner-like linear mapping onto the 16-bit range.
  double intensity_scale = 4000.0;
  double intensity_offset = 500.0;
  std::uint64_t seed = 0;

  /// Throws ContractError unless 0 < inner < outer < size / 2, the annulus
  /// fits inside the image and theta is in [0, 1].
  void validate() const;
};

struct Phantom {
  Image image;  // integer-valued, 0..65535
  mask::SegMask mask;
  mask::PtaResult pta;
};

Phantom generate_phantom(const PhantomParams& params);

/// The two halves of generate_phantom: exact label geometry, and an image
/// rendered from any mask with the params' appearance settings.
mask::SegMask rasterize_phantom(const PhantomParams& params);
Image render_phantom_image(const mask::SegMask& m, const PhantomParams& params);

/// Maps a slice position to the radius scale used by the patient-level
/// generator (apical slices are smaller, basal larger).
enum class SlicePosition { Apical, Mid, Basal };
const char* slice_position_name(SlicePosition p);
SlicePosition parse_slice_position(const std::string& name);

}  // namespace lvnc::data
