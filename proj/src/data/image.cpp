#include "lvnc/image.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "lvnc/errors.hpp"

namespace lvnc::data {

Image rotate90(const Image& img, int quarter_turns) {
  const int q = ((quarter_turns % 4) + 4) % 4;
  Image cur = img;
  for (int i = 0; i < q; ++i) {
    Image next{cur.height, cur.width, std::vector<double>(cur.pixels.size())};
    // Same convention as mask::rotate90: (r, c) -> (w - 1 - c, r).
    for (std::size_t r = 0; r < cur.height; ++r) {
      for (std::size_t c = 0; c < cur.width; ++c) {
        next.pixels[(cur.width - 1 - c) * next.width + r] = cur.pixels[r * cur.width + c];
      }
    }
    cur = std::move(next);
  }
  return cur;
}

Image normalize(const Image& img) {
  const auto n = static_cast<double>(img.pixels.size());
  if (img.pixels.size() < 2) throw DegenerateInputError("normalize needs at least two pixels");
  double mean = 0.0;
  for (double v : img.pixels) mean += v;
  mean /= n;
  double var = 0.0;
  for (double v : img.pixels) var += (v - mean) * (v - mean);
  var /= n;
  if (!(var > 0.0)) throw DegenerateInputError("normalize on a constant image");
  const double inv = 1.0 / std::sqrt(var);
  Image out{img.width, img.height, std::vector<double>(img.pixels.size())};
  for (std::size_t i = 0; i < out.pixels.size(); ++i) out.pixels[i] = (img.pixels[i] - mean) * inv;
  return out;
}

Augmented augment(const Image& img, const mask::SegMask& m, std::mt19937_64& rng) {
  if (img.width != img.height || m.width() != m.height()) throw ContractError("augment needs square inputs");
  if (img.width != m.width()) throw DimensionError("augment image and mask sizes differ");
  const double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
  const auto pick = static_cast<int>(rng() % 3);
  if (u >= kRotationProbability) return {img, m, 0};
  const int q = pick + 1;
  return {rotate90(img, q), mask::rotate90(m, q), q};
}

namespace {

struct PnmHeader {
  std::string magic;
  std::size_t width = 0, height = 0, maxval = 0;
};

PnmHeader read_header(std::istream& is, const std::filesystem::path& path) {
  PnmHeader h;
  auto next_token = [&]() {
    std::string tok;
    int ch;
    while ((ch = is.get()) != EOF) {
      if (ch == '#') {
        while ((ch = is.get()) != EOF && ch != '\n') {
        }
        continue;
      }
      if (std::isspace(ch)) {
        if (!tok.empty()) break;
        continue;
      }
      tok.push_back(static_cast<char>(ch));
    }
    if (tok.empty()) throw FormatError("truncated raster header: " + path.string());
    return tok;
  };
  auto number = [&]() {
    const auto tok = next_token();
    std::size_t pos = 0;
    unsigned long v = 0;
    try {
      v = std::stoul(tok, &pos);
    } catch (const std::exception&) {
      pos = 0;
    }
    if (pos != tok.size()) throw FormatError("bad number '" + tok + "' in raster header: " + path.string());
    return static_cast<std::size_t>(v);
  };
  h.magic = next_token();
  h.width = number();
  h.height = number();
  h.maxval = number();
  if (h.width == 0 || h.height == 0) throw FormatError("raster has zero size: " + path.string());
  if (h.maxval == 0 || h.maxval > 65535) throw FormatError("raster maxval out of range: " + path.string());
  return h;
}

std::vector<std::uint16_t> read_samples(std::istream& is, std::size_t count, std::size_t maxval,
                                        const std::filesystem::path& path) {
  std::vector<std::uint16_t> out(count);
  const std::size_t bytes = maxval > 255 ? 2 : 1;
  std::vector<unsigned char> raw(count * bytes);
  if (!is.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()))) {
    throw FormatError("raster data truncated: " + path.string());
  }
  for (std::size_t i = 0; i < count; ++i) {
    out[i] = bytes == 2 ? static_cast<std::uint16_t>((raw[2 * i] << 8) | raw[2 * i + 1]) : raw[i];
    if (out[i] > maxval) throw FormatError("raster sample exceeds maxval: " + path.string());
  }
  if (is.peek() != EOF) throw FormatError("trailing bytes after raster data: " + path.string());
  return out;
}

std::ifstream open_in(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw FormatError("cannot open " + path.string());
  return is;
}

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw FormatError("cannot write " + path.string());
  return os;
}

}  // namespace

Image read_pgm_image(const std::filesystem::path& path) {
  auto is = open_in(path);
  const auto h = read_header(is, path);
  if (h.magic != "P5") throw FormatError("image is not a binary PGM (P5): " + path.string());
  const auto samples = read_samples(is, h.width * h.height, h.maxval, path);
  Image img{h.width, h.height, std::vector<double>(samples.begin(), samples.end())};
  return img;
}

void write_pgm_image(const std::filesystem::path& path, const Image& img) {
  std::vector<unsigned char> raw(img.pixels.size() * 2);
  for (std::size_t i = 0; i < img.pixels.size(); ++i) {
    const double v = img.pixels[i];
    if (!(v >= 0.0 && v <= 65535.0) || v != std::floor(v)) {
      throw ContractError("16-bit image pixels must be integers in [0, 65535]");
    }
    const auto s = static_cast<std::uint16_t>(v);
    raw[2 * i] = static_cast<unsigned char>(s >> 8);
    raw[2 * i + 1] = static_cast<unsigned char>(s & 0xff);
  }
  auto os = open_out(path);
  os << "P5\n" << img.width << ' ' << img.height << "\n65535\n";
  os.write(reinterpret_cast<const char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
  if (!os) throw FormatError("failed writing " + path.string());
}

mask::SegMask read_pgm_mask(const std::filesystem::path& path) {
  auto is = open_in(path);
  const auto h = read_header(is, path);
  if (h.magic != "P5" || h.maxval > 255) throw FormatError("mask is not an 8-bit binary PGM: " + path.string());
  const auto samples = read_samples(is, h.width * h.height, h.maxval, path);
  std::vector<std::uint8_t> labels(samples.size());
  for (std::size_t i = 0; i < samples.size(); ++i) {
    if (samples[i] >= mask::kNumLabels) {
      throw FormatError("mask holds label " + std::to_string(samples[i]) + ": " + path.string());
    }
    labels[i] = static_cast<std::uint8_t>(samples[i]);
  }
  return mask::SegMask(h.width, h.height, std::move(labels));
}

void write_pgm_mask(const std::filesystem::path& path, const mask::SegMask& m) {
  auto os = open_out(path);
  os << "P5\n" << m.width() << ' ' << m.height() << "\n255\n";
  os.write(reinterpret_cast<const char*>(m.labels().data()), static_cast<std::streamsize>(m.size()));
  if (!os) throw FormatError("failed writing " + path.string());
}

Slice load_slice(const std::filesystem::path& image_path, const std::filesystem::path& mask_path) {
  Slice s{read_pgm_image(image_path), read_pgm_mask(mask_path)};
  if (s.image.width != s.mask.width() || s.image.height != s.mask.height()) {
    throw DimensionError("image " + image_path.string() + " and mask " + mask_path.string() +
                         " differ in size");
  }
  return s;
}

void save_slice(const std::filesystem::path& image_path, const std::filesystem::path& mask_path,
                const Slice& slice) {
  if (slice.image.width != slice.mask.width() || slice.image.height != slice.mask.height()) {
    throw DimensionError("image and mask differ in size");
  }
  write_pgm_image(image_path, slice.image);
  write_pgm_mask(mask_path, slice.mask);
}

RgbImage make_overlay(const Image& img, const mask::SegMask& m) {
  if (img.width != m.width() || img.height != m.height()) throw DimensionError("overlay image and mask differ in size");
  double lo = img.pixels.empty() ? 0.0 : img.pixels[0], hi = lo;
  for (double v : img.pixels) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  const double span = hi > lo ? hi - lo : 1.0;
  RgbImage out{img.width, img.height, std::vector<std::uint8_t>(img.pixels.size() * 3)};
  for (std::size_t i = 0; i < img.pixels.size(); ++i) {
    const auto gray = static_cast<int>(std::lround(255.0 * (img.pixels[i] - lo) / span));
    const auto v = static_cast<std::uint8_t>(gray / 2);
    const auto hiv = static_cast<std::uint8_t>(v + 128);
    std::uint8_t* px = out.rgb.data() + 3 * i;
    px[0] = px[1] = px[2] = v;
    switch (static_cast<mask::Tissue>(m.labels()[i])) {
      case mask::Tissue::ExternalLayer: px[1] = hiv; break;
      case mask::Tissue::InternalCavity: px[2] = hiv; break;
      case mask::Tissue::Trabeculae: px[0] = px[1] = hiv; break;
      case mask::Tissue::Background: break;
    }
  }
  return out;
}

mask::SegMask decode_overlay(const RgbImage& overlay) {
  std::vector<std::uint8_t> labels(overlay.width * overlay.height);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const std::uint8_t* px = overlay.rgb.data() + 3 * i;
    const bool r = px[0] >= 128, g = px[1] >= 128, b = px[2] >= 128;
    mask::Tissue t;
    if (!r && !g && !b) t = mask::Tissue::Background;
    else if (!r && g && !b) t = mask::Tissue::ExternalLayer;
    else if (!r && !g && b) t = mask::Tissue::InternalCavity;
    else if (r && g && !b) t = mask::Tissue::Trabeculae;
    else throw FormatError("overlay pixel " + std::to_string(i) + " does not encode a label");
    labels[i] = static_cast<std::uint8_t>(t);
  }
  return mask::SegMask(overlay.width, overlay.height, std::move(labels));
}

void write_ppm(const std::filesystem::path& path, const RgbImage& img) {
  auto os = open_out(path);
  os << "P6\n" << img.width << ' ' << img.height << "\n255\n";
  os.write(reinterpret_cast<const char*>(img.rgb.data()), static_cast<std::streamsize>(img.rgb.size()));
  if (!os) throw FormatError("failed writing " + path.string());
}

RgbImage read_ppm(const std::filesystem::path& path) {
  auto is = open_in(path);
  const auto h = read_header(is, path);
  if (h.magic != "P6" || h.maxval != 255) throw FormatError("not an 8-bit binary PPM: " + path.string());
  RgbImage img{h.width, h.height, std::vector<std::uint8_t>(h.width * h.height * 3)};
  if (!is.read(reinterpret_cast<char*>(img.rgb.data()), static_cast<std::streamsize>(img.rgb.size()))) {
    throw FormatError("PPM data truncated: " + path.string());
  }
  return img;
}

}  // namespace lvnc::data
