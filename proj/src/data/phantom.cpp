#include "lvnc/phantom.hpp"

#include <cmath>
#include <numbers>
#include <random>

#include "lvnc/errors.hpp"

namespace lvnc::data {

namespace {

constexpr int kMaxProtrusions = 12;
constexpr double kBoundaryWobble = 0.03;  // per harmonic, relative to radius

double uniform(std::mt19937_64& rng, double lo, double hi) {
  return lo + (hi - lo) * (static_cast<double>(rng() >> 11) * 0x1.0p-53);
}

// Radius that varies smoothly with angle: r * (1 + sum_k a_k cos(k phi + p_k)).
struct WobblyRadius {
  double base = 0.0;
  double amp[3]{};
  double phase[3]{};

  double at(double phi) const {
    double f = 1.0;
    for (int k = 0; k < 3; ++k) f += amp[k] * std::cos((k + 2) * phi + phase[k]);
    return base * f;
  }
};

WobblyRadius make_radius(double base, std::mt19937_64& rng) {
  WobblyRadius r;
  r.base = base;
  for (int k = 0; k < 3; ++k) {
    r.amp[k] = uniform(rng, -kBoundaryWobble, kBoundaryWobble);
    r.phase[k] = uniform(rng, 0.0, 2.0 * std::numbers::pi);
  }
  return r;
}

struct Protrusion {
  double ux = 0.0, uy = 0.0;  // unit direction from the centre
  double wall = 0.0;          // inner-wall radius along the direction
  double length = 0.0;
  double half_width = 0.0;    // at the wall; tapers towards the tip
};

}  // namespace

void PhantomParams::validate() const {
  if (!(inner_radius > 0.0 && inner_radius < outer_radius)) {
    throw ContractError("phantom needs 0 < inner radius < outer radius");
  }
  const double s = static_cast<double>(size);
  if (!(outer_radius < s / 2.0)) throw ContractError("phantom outer radius must be below size / 2");
  const double reach = outer_radius * (1.0 + 3.0 * kBoundaryWobble) + 1.0;
  if (center_x - reach < 0.0 || center_x + reach > s || center_y - reach < 0.0 || center_y + reach > s) {
    throw ContractError("phantom myocardium does not fit inside the image");
  }
  if (!(theta >= 0.0 && theta <= 1.0)) throw ContractError("phantom theta must lie in [0, 1]");
}

mask::SegMask rasterize_phantom(const PhantomParams& params) {
  params.validate();
  std::mt19937_64 rng(params.seed);
  const auto outer = make_radius(params.outer_radius, rng);
  const auto inner = make_radius(params.inner_radius, rng);

  const int count = static_cast<int>(std::ceil(params.theta * kMaxProtrusions));
  std::vector<Protrusion> trab;
  for (int j = 0; j < count; ++j) {
    const double phi = uniform(rng, 0.0, 2.0 * std::numbers::pi);
    Protrusion p;
    p.ux = std::cos(phi);
    p.uy = std::sin(phi);
    p.wall = inner.at(phi);
    p.length = p.wall * (0.25 + 0.55 * params.theta) * uniform(rng, 0.7, 1.2);
    p.half_width = params.detail_scale * (0.9 + 1.6 * params.theta) * uniform(rng, 0.8, 1.2);
    trab.push_back(p);
  }

  const std::size_t n = params.size;
  mask::SegMask m(n, n);
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t c = 0; c < n; ++c) {
      const double dx = static_cast<double>(c) + 0.5 - params.center_x;
      const double dy = static_cast<double>(r) + 0.5 - params.center_y;
      const double rad = std::hypot(dx, dy);
      const double phi = std::atan2(dy, dx);
      if (rad > outer.at(phi)) continue;
      if (rad > inner.at(phi)) {
        m.set(r, c, mask::Tissue::ExternalLayer);
        continue;
      }
      auto tissue = mask::Tissue::InternalCavity;
      for (const auto& p : trab) {
        const double along = dx * p.ux + dy * p.uy;
        const double depth = p.wall - along;
        if (along <= 0.0 || depth < -1.0 || depth > p.length) continue;
        const double across = std::abs(dx * p.uy - dy * p.ux);
        const double taper = 1.0 - 0.6 * std::max(depth, 0.0) / p.length;
        if (across <= p.half_width * taper) {
          tissue = mask::Tissue::Trabeculae;
          break;
        }
      }
      m.set(r, c, tissue);
    }
  }
  return m;
}

Image render_phantom_image(const mask::SegMask& m, const PhantomParams& params) {
  // Separate stream from the geometry so both halves can be reproduced alone.
  std::mt19937_64 rng(params.seed ^ 0x9e3779b97f4a7c15ULL);
  const std::size_t n = m.width();
  if (m.height() != n) throw ContractError("phantom masks are square");

  // Appearance: tissue mean times a smooth bias field plus Gaussian noise.
  const double b1 = uniform(rng, -1.0, 1.0), b2 = uniform(rng, -1.0, 1.0), b3 = uniform(rng, -1.0, 1.0);
  std::normal_distribution<double> gauss(0.0, 1.0);
  Image img{n, n, std::vector<double>(n * n)};
  const double half = static_cast<double>(n) / 2.0;
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t c = 0; c < n; ++c) {
      const double nx = (static_cast<double>(c) + 0.5 - half) / half;
      const double ny = (static_cast<double>(r) + 0.5 - half) / half;
      const double bias = 1.0 + params.bias_amplitude * (b1 * nx + b2 * ny + b3 * (nx * nx + ny * ny - 1.0)) / 3.0;
      const TissueIntensity* t = &params.background;
      switch (m.at(r, c)) {
        case mask::Tissue::ExternalLayer: t = &params.external_layer; break;
        case mask::Tissue::InternalCavity: t = &params.internal_cavity; break;
        case mask::Tissue::Trabeculae: t = &params.trabeculae; break;
        case mask::Tissue::Background: break;
      }
      const double v = t->mean * bias + t->noise_sd * gauss(rng);
      const double q = std::round(v * params.intensity_scale + params.intensity_offset);
      img.pixels[r * n + c] = std::clamp(q, 0.0, 65535.0);
    }
  }

  return img;
}

Phantom generate_phantom(const PhantomParams& params) {
  auto m = rasterize_phantom(params);
  auto img = render_phantom_image(m, params);
  Phantom out{std::move(img), std::move(m), {}};
  out.pta = mask::pta(mask::region_areas(out.mask));
  return out;
}

const char* slice_position_name(SlicePosition p) {
  switch (p) {
    case SlicePosition::Apical: return "apical";
    case SlicePosition::Mid: return "mid";
    case SlicePosition::Basal: return "basal";
  }
  return "mid";
}

SlicePosition parse_slice_position(const std::string& name) {
  if (name == "apical") return SlicePosition::Apical;
  if (name == "mid") return SlicePosition::Mid;
  if (name == "basal") return SlicePosition::Basal;
  throw FormatError("unknown slice position '" + name + "'");
}

}  // namespace lvnc::data
