#include <cmath>
#include <limits>

#include "lvnc/losses.hpp"

namespace lvnc::losses {

namespace {

// Stands in for +infinity inside the lower-envelope arithmetic so that
// differences stay finite.
constexpr double kFar = 1e30;

// Lower envelope of parabolas (q - p)^2 + f[p] over one line.
void edt_1d(const double* f, std::size_t n, double* out, std::vector<std::size_t>& v,
            std::vector<double>& z) {
  v.assign(n, 0);
  z.assign(n + 1, 0.0);
  std::size_t k = 0;
  v[0] = 0;
  z[0] = -std::numeric_limits<double>::infinity();
  z[1] = std::numeric_limits<double>::infinity();
  for (std::size_t q = 1; q < n; ++q) {
    const auto qd = static_cast<double>(q);
    double s;
    while (true) {
      const auto pd = static_cast<double>(v[k]);
      s = ((f[q] + qd * qd) - (f[v[k]] + pd * pd)) / (2.0 * (qd - pd));
      if (s > z[k]) break;
      --k;  // z[0] = -inf stops this at k = 0
    }
    ++k;
    v[k] = q;
    z[k] = s;
    z[k + 1] = std::numeric_limits<double>::infinity();
  }
  k = 0;
  for (std::size_t q = 0; q < n; ++q) {
    while (z[k + 1] < static_cast<double>(q)) ++k;
    const double d = static_cast<double>(q) - static_cast<double>(v[k]);
    out[q] = d * d + f[v[k]];
  }
}

}  // namespace

std::vector<double> squared_distance_transform(const std::vector<bool>& seeds, std::size_t width,
                                               std::size_t height) {
  const std::size_t n = width * height;
  std::vector<double> grid(n);
  for (std::size_t i = 0; i < n; ++i) grid[i] = seeds[i] ? 0.0 : kFar;

  std::vector<std::size_t> v;
  std::vector<double> z;
  std::vector<double> line(std::max(width, height)), res(std::max(width, height));
  // Columns first, then rows.
  for (std::size_t c = 0; c < width; ++c) {
    for (std::size_t r = 0; r < height; ++r) line[r] = grid[r * width + c];
    edt_1d(line.data(), height, res.data(), v, z);
    for (std::size_t r = 0; r < height; ++r) grid[r * width + c] = res[r];
  }
  for (std::size_t r = 0; r < height; ++r) {
    edt_1d(grid.data() + r * width, width, res.data(), v, z);
    std::copy_n(res.data(), width, grid.data() + r * width);
  }
  for (auto& g : grid) {
    if (g >= kFar * 0.5) g = std::numeric_limits<double>::infinity();
  }
  return grid;
}

DistanceMap signed_distance_map(const mask::SegMask& labels, mask::Tissue target) {
  const std::size_t w = labels.width(), h = labels.height(), n = w * h;
  const auto t = static_cast<std::uint8_t>(target);
  std::vector<bool> inside(n), outside(n);
  std::size_t count = 0;
  for (std::size_t i = 0; i < n; ++i) {
    inside[i] = labels.labels()[i] == t;
    outside[i] = !inside[i];
    count += inside[i] ? 1 : 0;
  }
  DistanceMap dm{w, h, std::vector<double>(n)};
  const double diag = std::sqrt(static_cast<double>(w * w + h * h));
  if (count == 0) {
    std::fill(dm.values.begin(), dm.values.end(), diag);
    return dm;
  }
  if (count == n) {
    std::fill(dm.values.begin(), dm.values.end(), -diag);
    return dm;
  }
  const auto to_region = squared_distance_transform(inside, w, h);
  const auto to_complement = squared_distance_transform(outside, w, h);
  for (std::size_t i = 0; i < n; ++i) {
    dm.values[i] = inside[i] ? -std::sqrt(to_complement[i]) : std::sqrt(to_region[i]);
  }
  return dm;
}

}  // namespace lvnc::losses
