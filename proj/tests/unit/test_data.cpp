#include <doctest.h>

#include <array>
#include <cmath>
#include <filesystem>
#include <map>
#include <fstream>
#include <random>
#include <set>

#include "lvnc/dataset.hpp"
#include "lvnc/errors.hpp"
#include "lvnc/image.hpp"
#include "lvnc/phantom.hpp"

using namespace lvnc;
using namespace lvnc::data;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& tag) {
    path = fs::temp_directory_path() / ("lvnc_test_" + tag + "_" + std::to_string(std::random_device{}()));
    fs::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path, ec);
  }
};

Image random_image(std::size_t w, std::size_t h, std::mt19937_64& rng, int maxval = 65535) {
  Image img{w, h, std::vector<double>(w * h)};
  for (auto& v : img.pixels) v = static_cast<double>(rng() % (static_cast<unsigned>(maxval) + 1));
  return img;
}

mask::SegMask random_labels(std::size_t n, std::mt19937_64& rng) {
  mask::SegMask m(n, n);
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t c = 0; c < n; ++c) m.set(r, c, static_cast<mask::Tissue>(rng() % 4));
  return m;
}

void write_bytes(const fs::path& p, const std::string& bytes) {
  std::ofstream os(p, std::ios::binary);
  os << bytes;
}

std::string read_bytes(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  return std::string(std::istreambuf_iterator<char>(is), {});
}

double mean_of(const Image& img) {
  double s = 0.0;
  for (double v : img.pixels) s += v;
  return s / static_cast<double>(img.pixels.size());
}

double pop_std(const Image& img) {
  const double m = mean_of(img);
  double s = 0.0;
  for (double v : img.pixels) s += (v - m) * (v - m);
  return std::sqrt(s / static_cast<double>(img.pixels.size()));
}

SliceRecord rec(const std::string& sid, const std::string& pid, bool positive) {
  return SliceRecord{sid, pid, "images/" + sid + ".pgm", "masks/" + sid + ".pgm", positive, std::nullopt, std::nullopt};
}

}  // namespace

TEST_CASE("normalize standardizes, is affine invariant and idempotent") {
  const Image small{2, 2, {1, 2, 3, 4}};
  const auto n = normalize(small);
  const double s = std::sqrt(1.25);
  CHECK(n.pixels[0] == doctest::Approx(-1.5 / s).epsilon(1e-15));
  CHECK(n.pixels[3] == doctest::Approx(1.5 / s).epsilon(1e-15));

  std::mt19937_64 rng(11);
  for (int t = 0; t < 20; ++t) {
    const auto img = random_image(16, 12, rng);
    const auto z = normalize(img);
    CHECK(std::abs(mean_of(z)) < 1e-9);
    CHECK(std::abs(pop_std(z) - 1.0) < 1e-9);

    Image affine = img;
    for (auto& v : affine.pixels) v = 3.7 * v - 120.0;
    const auto za = normalize(affine);
    const auto zz = normalize(z);
    for (std::size_t i = 0; i < z.pixels.size(); ++i) {
      CHECK(std::abs(za.pixels[i] - z.pixels[i]) < 1e-9);
      CHECK(std::abs(zz.pixels[i] - z.pixels[i]) < 1e-12);
    }
  }
  CHECK_THROWS_AS(normalize(Image{3, 3, std::vector<double>(9, 7.0)}), DegenerateInputError);
  CHECK_THROWS_AS(normalize(Image{1, 1, {1.0}}), DegenerateInputError);
}

TEST_CASE("augment rotates image and mask together") {
  Image img{5, 5, std::vector<double>(25, 0.0)};
  img.pixels[0] = 9.0;  // marked corner
  mask::SegMask m(5, 5);
  m.set(0, 0, mask::Tissue::Trabeculae);
  std::mt19937_64 rng(3);
  std::array<int, 4> seen{};
  for (int i = 0; i < 400; ++i) {
    const auto a = augment(img, m, rng);
    ++seen[a.quarter_turns];
    // Corner pixel and corner label land at the same place.
    for (std::size_t r = 0; r < 5; ++r)
      for (std::size_t c = 0; c < 5; ++c)
        CHECK((a.image.at(r, c) == 9.0) == (a.mask.at(r, c) == mask::Tissue::Trabeculae));
    CHECK(a.image == rotate90(img, a.quarter_turns));
    CHECK(mask::region_areas(a.mask) == mask::region_areas(m));
  }
  for (int q = 1; q < 4; ++q) CHECK(seen[q] > 0);

  CHECK(rotate90(rotate90(img, 2), 2) == img);
  CHECK_THROWS_AS(augment(Image{4, 3, std::vector<double>(12)}, mask::SegMask(4, 3), rng), ContractError);
  CHECK_THROWS_AS(augment(img, mask::SegMask(4, 4), rng), DimensionError);
}

TEST_CASE("augment rotation frequency over 1e5 draws") {
  const Image img{2, 2, {1, 2, 3, 4}};
  const mask::SegMask m(2, 2);
  std::mt19937_64 rng(2024);
  const int draws = 100000;
  std::array<int, 4> count{};
  for (int i = 0; i < draws; ++i) ++count[augment(img, m, rng).quarter_turns];
  const double rotated = static_cast<double>(draws - count[0]) / draws;
  CHECK(std::abs(rotated - 0.25) <= 0.01);
  // Each angle takes about a third of the rotations.
  for (int q = 1; q < 4; ++q) CHECK(std::abs(count[q] / (draws * 0.25) - 1.0 / 3.0) < 0.02);
}

TEST_CASE("image and mask rasters round-trip losslessly") {
  TempDir dir("raster");
  std::mt19937_64 rng(8);
  auto img = random_image(13, 7, rng);
  img.pixels[0] = 65535;
  img.pixels[1] = 0;
  img.pixels[2] = 258;
  mask::SegMask m(13, 7);
  for (std::size_t r = 0; r < 7; ++r)
    for (std::size_t c = 0; c < 13; ++c) m.set(r, c, static_cast<mask::Tissue>((r * 13 + c) % 4));

  const auto ip = dir.path / "img.pgm", mp = dir.path / "mask.pgm";
  save_slice(ip, mp, Slice{img, m});
  const auto back = load_slice(ip, mp);
  CHECK(back.image == img);
  CHECK(back.mask == m);

  // Samples are two bytes, most significant first.
  const auto bytes = read_bytes(ip);
  const auto data_start = bytes.size() - 13 * 7 * 2;
  CHECK(static_cast<unsigned char>(bytes[data_start + 4]) == 0x01);
  CHECK(static_cast<unsigned char>(bytes[data_start + 5]) == 0x02);
  CHECK(bytes.rfind("P5", 0) == 0);

  // 8-bit images are accepted on read.
  write_bytes(dir.path / "eight.pgm", std::string("P5\n2 1\n255\n") + '\x07' + '\xff');
  const auto eight = read_pgm_image(dir.path / "eight.pgm");
  CHECK(eight.pixels == std::vector<double>{7.0, 255.0});
}

TEST_CASE("raster errors") {
  TempDir dir("raster_err");
  const auto p = dir.path / "x.pgm";
  write_bytes(p, std::string("P5\n2 1\n255\n") + '\x01' + '\x04');
  CHECK_THROWS_AS(read_pgm_mask(p), FormatError);  // label 4

  write_bytes(p, std::string("P5\n2 2\n255\n") + '\x01');
  CHECK_THROWS_AS(read_pgm_mask(p), FormatError);  // truncated
  CHECK_THROWS_AS(read_pgm_image(p), FormatError);

  write_bytes(p, std::string("P5\n1 1\n255\n") + '\x01' + '\x00');
  CHECK_THROWS_AS(read_pgm_mask(p), FormatError);  // trailing bytes

  write_bytes(p, "P2\n1 1\n255\n1\n");
  CHECK_THROWS_AS(read_pgm_image(p), FormatError);
  write_bytes(p, "P5\n0 1\n255\n");
  CHECK_THROWS_AS(read_pgm_image(p), FormatError);
  write_bytes(p, "P5\n1 1x\n255\n");
  CHECK_THROWS_AS(read_pgm_image(p), FormatError);
  CHECK_THROWS_AS(read_pgm_image(dir.path / "missing.pgm"), FormatError);

  // 16-bit masks are not masks.
  write_bytes(p, std::string("P5\n1 1\n65535\n") + '\x00' + '\x01');
  CHECK_THROWS_AS(read_pgm_mask(p), FormatError);

  CHECK_THROWS_AS(write_pgm_image(p, Image{1, 1, {1.5}}), ContractError);
  CHECK_THROWS_AS(write_pgm_image(p, Image{1, 1, {70000.0}}), ContractError);
  CHECK_THROWS_AS(write_pgm_image(p, Image{1, 1, {-1.0}}), ContractError);

  write_pgm_image(dir.path / "a.pgm", Image{3, 3, std::vector<double>(9, 1.0)});
  write_pgm_mask(dir.path / "b.pgm", mask::SegMask(3, 4));
  CHECK_THROWS_AS(load_slice(dir.path / "a.pgm", dir.path / "b.pgm"), DimensionError);
  CHECK_THROWS_AS(save_slice(dir.path / "c.pgm", dir.path / "d.pgm",
                             Slice{Image{3, 3, std::vector<double>(9, 1.0)}, mask::SegMask(3, 4)}),
                  DimensionError);
}

TEST_CASE("overlay encodes labels reversibly") {
  TempDir dir("overlay");
  std::mt19937_64 rng(4);
  for (int t = 0; t < 10; ++t) {
    const auto img = random_image(12, 12, rng, 4000 + t * 5000);
    const auto m = random_labels(12, rng);
    const auto ov = make_overlay(img, m);
    CHECK(ov.rgb.size() == 12u * 12u * 3u);
    CHECK(decode_overlay(ov) == m);
    write_ppm(dir.path / "o.ppm", ov);
    const auto back = read_ppm(dir.path / "o.ppm");
    CHECK(back.width == ov.width);
    CHECK(back.rgb == ov.rgb);
  }
  // Constant image still decodes.
  const auto m = random_labels(6, rng);
  CHECK(decode_overlay(make_overlay(Image{6, 6, std::vector<double>(36, 5.0)}, m)) == m);

  RgbImage bad{1, 1, {200, 10, 200}};
  CHECK_THROWS_AS(decode_overlay(bad), FormatError);
  CHECK_THROWS_AS(make_overlay(Image{2, 2, std::vector<double>(4)}, mask::SegMask(3, 3)), DimensionError);
}

TEST_CASE("phantom with theta 0 has no trabeculae") {
  PhantomParams p;
  p.theta = 0.0;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    p.seed = seed;
    const auto ph = generate_phantom(p);
    const auto a = mask::region_areas(ph.mask);
    CHECK(a.trabeculae == 0);
    CHECK(a.external_layer > 0);
    CHECK(a.internal_cavity > 0);
    CHECK(ph.pta.pta == 0.0);
    CHECK_FALSE(ph.pta.positive);
  }
}

TEST_CASE("phantom is deterministic, integer valued and PTA consistent") {
  PhantomParams p;
  p.theta = 0.7;
  p.seed = 99;
  const auto a = generate_phantom(p), b = generate_phantom(p);
  CHECK(a.image == b.image);
  CHECK(a.mask == b.mask);
  p.seed = 100;
  CHECK_FALSE(generate_phantom(p).mask == a.mask);

  std::mt19937_64 rng(6);
  for (int t = 0; t < 30; ++t) {
    PhantomParams q;
    q.theta = static_cast<double>(t) / 29.0;
    q.seed = rng();
    const auto ph = generate_phantom(q);
    CHECK(ph.pta == mask::pta(mask::region_areas(ph.mask)));
    CHECK(rasterize_phantom(q) == ph.mask);
    for (double v : ph.image.pixels) {
      CHECK(v == std::floor(v));
      CHECK(v >= 0.0);
      CHECK(v <= 65535.0);
    }
  }
}

TEST_CASE("phantom tissues have distinct mean intensities") {
  PhantomParams p;
  p.theta = 0.8;
  p.seed = 5;
  const auto ph = generate_phantom(p);
  std::array<double, 4> sum{};
  std::array<double, 4> cnt{};
  for (std::size_t i = 0; i < ph.mask.size(); ++i) {
    sum[ph.mask.labels()[i]] += ph.image.pixels[i];
    cnt[ph.mask.labels()[i]] += 1.0;
  }
  for (int l = 0; l < 4; ++l) REQUIRE(cnt[l] > 0);
  const double bg = sum[0] / cnt[0], el = sum[1] / cnt[1], ic = sum[2] / cnt[2], tr = sum[3] / cnt[3];
  CHECK(bg < el);
  CHECK(el < tr);
  CHECK(tr < ic);
}

TEST_CASE("phantom parameter validation") {
  PhantomParams p;
  p.inner_radius = 17.0;
  CHECK_THROWS_AS(p.validate(), ContractError);
  p = PhantomParams{};
  p.outer_radius = 32.0;
  CHECK_THROWS_AS(generate_phantom(p), ContractError);
  p = PhantomParams{};
  p.theta = 1.5;
  CHECK_THROWS_AS(generate_phantom(p), ContractError);
  p = PhantomParams{};
  p.center_x = 5.0;
  CHECK_THROWS_AS(p.validate(), ContractError);
  p = PhantomParams{};
  CHECK_NOTHROW(p.validate());
  CHECK(parse_slice_position("basal") == SlicePosition::Basal);
  CHECK(std::string(slice_position_name(SlicePosition::Apical)) == "apical");
  CHECK_THROWS_AS(parse_slice_position("middle"), FormatError);
}

TEST_CASE("generator calibration: both diagnosis classes over 500 phantoms") {
  std::mt19937_64 rng(2718);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  int positive = 0;
  double lo = 100.0, hi = 0.0;
  for (int i = 0; i < 500; ++i) {
    const auto params = phantom_slice_params(64, u(rng), static_cast<SlicePosition>(i % 3), rng());
    const auto r = mask::pta(mask::region_areas(rasterize_phantom(params)));
    positive += r.positive ? 1 : 0;
    lo = std::min(lo, r.pta);
    hi = std::max(hi, r.pta);
  }
  MESSAGE("positive " << positive << "/500, PTA range [" << lo << ", " << hi << "]");
  CHECK(positive >= 125);
  CHECK(lo < mask::kLvncThresholdPct);
  CHECK(hi >= mask::kLvncThresholdPct);
}

TEST_CASE("manifest round-trip and errors") {
  TempDir dir("manifest");
  DatasetManifest m;
  m.pixel_size_mm = 1.25;
  m.provenance = "unit \"test\"";
  m.records.push_back(rec("a", "p1", true));
  m.records.push_back(rec("b", "p1", false));
  m.records.back().slice_position = SlicePosition::Mid;
  m.records.back().source_mask_path = "source_masks/b.pgm";
  const auto path = dir.path / "manifest.jsonl";
  write_manifest(path, m);
  const auto back = read_manifest(path);
  CHECK(back == m);
  CHECK(back.root == dir.path);
  CHECK(back.resolve("images/a.pgm") == dir.path / "images/a.pgm");

  CHECK(record_from_json(record_to_json(m.records[1])) == m.records[1]);
  // Key order is fixed.
  const auto line = record_to_json(m.records[1]);
  CHECK(line.find("slice_id") < line.find("patient_id"));
  CHECK(line.find("lvnc_positive") < line.find("slice_position"));
  CHECK(line.find("slice_position") < line.find("source_mask_path"));

  auto dup = m;
  dup.records.push_back(rec("a", "p2", false));
  write_manifest(path, dup);
  CHECK_THROWS_AS(read_manifest(path), FormatError);

  write_bytes(path, "{\"manifest_version\":2,\"pixel_size_mm\":1,\"provenance\":\"\"}\n");
  CHECK_THROWS_AS(read_manifest(path), FormatError);
  write_bytes(path, "");
  CHECK_THROWS_AS(read_manifest(path), FormatError);
  write_bytes(path, "{\"manifest_version\":1,\"pixel_size_mm\":1,\"provenance\":\"\"}\n{\"slice_id\":\"x\"}\n");
  CHECK_THROWS_AS(read_manifest(path), FormatError);
  write_bytes(path, "{\"manifest_version\":1,\"pixel_size_mm\":1,\"provenance\":\"\"}\nnot json\n");
  CHECK_THROWS_AS(read_manifest(path), FormatError);
  CHECK_THROWS_AS(read_manifest(dir.path / "nope.jsonl"), FormatError);
}

TEST_CASE("folds: ten single-slice patients") {
  std::vector<SliceRecord> records;
  for (int i = 0; i < 10; ++i) records.push_back(rec("s" + std::to_string(i), "p" + std::to_string(i), i % 2 == 0));
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    const auto f = stratified_kfold(records, 5, seed);
    REQUIRE(f.folds.size() == 5);
    CHECK(f.warnings.empty());
    for (const auto& fold : f.folds) {
      REQUIRE(fold.size() == 2);
      CHECK(records[fold[0]].lvnc_positive != records[fold[1]].lvnc_positive);
    }
  }
  CHECK_THROWS_AS(stratified_kfold(records, 1, 0), ContractError);
  CHECK_THROWS_AS(stratified_kfold(records, 11, 0), ContractError);
}

TEST_CASE("folds partition, stay patient-disjoint and are seed-deterministic") {
  std::mt19937_64 rng(12);
  for (int t = 0; t < 20; ++t) {
    std::vector<SliceRecord> records;
    const int patients = 8 + static_cast<int>(rng() % 30);
    for (int p = 0; p < patients; ++p) {
      const int slices = 1 + static_cast<int>(rng() % 9);
      const bool sick = rng() % 3 == 0;
      for (int s = 0; s < slices; ++s) {
        const bool pos = sick ? rng() % 5 != 0 : rng() % 10 == 0;
        records.push_back(rec("p" + std::to_string(p) + "s" + std::to_string(s), "p" + std::to_string(p), pos));
      }
    }
    const auto seed = rng();
    const auto f = stratified_kfold(records, 5, seed);
    std::vector<int> owner(records.size(), -1);
    std::map<std::string, int> patient_fold;
    for (int k = 0; k < 5; ++k)
      for (auto i : f.folds[static_cast<std::size_t>(k)]) {
        CHECK(owner[i] == -1);
        owner[i] = k;
        auto [it, fresh] = patient_fold.try_emplace(records[i].patient_id, k);
        CHECK(it->second == k);
      }
    for (int o : owner) CHECK(o >= 0);
    const auto again = stratified_kfold(records, 5, seed);
    CHECK(again.folds == f.folds);
  }
}

TEST_CASE("impossible stratification warns instead of failing") {
  std::vector<SliceRecord> records;
  for (int s = 0; s < 10; ++s) records.push_back(rec("x" + std::to_string(s), "sick", true));
  for (int p = 0; p < 9; ++p) records.push_back(rec("h" + std::to_string(p), "h" + std::to_string(p), false));
  const auto f = stratified_kfold(records, 3, 1);
  CHECK_FALSE(f.warnings.empty());
  std::size_t total = 0;
  for (const auto& fold : f.folds) total += fold.size();
  CHECK(total == records.size());
}

TEST_CASE("train/validation split holds out about the requested fraction") {
  std::vector<SliceRecord> records;
  for (int p = 0; p < 40; ++p)
    for (int s = 0; s < 3; ++s)
      records.push_back(rec("p" + std::to_string(p) + "s" + std::to_string(s), "p" + std::to_string(p), p % 3 == 0));
  std::vector<std::size_t> indices;
  for (std::size_t i = 0; i < records.size(); i += 1)
    if (i % 15 >= 3) indices.push_back(i);  // drop some patients entirely
  const auto split = train_validation_split(records, indices, 0.2, 5);
  CHECK(split.train.size() + split.validation.size() == indices.size());
  CHECK(std::abs(static_cast<double>(split.validation.size()) / indices.size() - 0.2) < 0.05);
  std::set<std::string> train_patients;
  for (auto i : split.train) train_patients.insert(records[i].patient_id);
  for (auto i : split.validation) CHECK(train_patients.count(records[i].patient_id) == 0);
  CHECK_THROWS_AS(train_validation_split(records, indices, 0.0, 5), ContractError);
  CHECK_THROWS_AS(train_validation_split(records, indices, 1.0, 5), ContractError);
}

TEST_CASE("generate_phantom_dataset writes a consistent manifest") {
  TempDir dir("gen");
  PhantomDatasetSpec spec;
  spec.count = 11;
  spec.slices_per_patient = 3;
  spec.size = 32;
  spec.seed = 17;
  const auto m = generate_phantom_dataset(spec, dir.path);
  REQUIRE(m.records.size() == 11);
  CHECK(read_manifest(dir.path / "manifest.jsonl") == m);
  std::set<std::string> patients;
  for (const auto& r : m.records) {
    patients.insert(r.patient_id);
    const auto s = load_slice(m.resolve(r.image_path), m.resolve(r.mask_path));
    CHECK(s.image.width == 32);
    CHECK(r.lvnc_positive == mask::pta(mask::region_areas(s.mask)).positive);
    CHECK(r.slice_position.has_value());
    CHECK_FALSE(r.source_mask_path.has_value());
  }
  CHECK(patients.size() == 4);

  // Same settings, same bytes.
  TempDir dir2("gen2");
  generate_phantom_dataset(spec, dir2.path);
  CHECK(read_bytes(dir.path / "manifest.jsonl") == read_bytes(dir2.path / "manifest.jsonl"));
  CHECK(read_bytes(dir.path / m.records[5].image_path) == read_bytes(dir2.path / m.records[5].image_path));

  TempDir dir3("gen3");
  spec.count = 3;
  spec.source_size = 64;
  const auto ms = generate_phantom_dataset(spec, dir3.path);
  for (const auto& r : ms.records) {
    REQUIRE(r.source_mask_path.has_value());
    const auto src = read_pgm_mask(ms.resolve(*r.source_mask_path));
    CHECK(src.width() == 64);
    CHECK(mask::resample_mask(src, 32) == read_pgm_mask(ms.resolve(r.mask_path)));
  }

  spec.theta_min = 0.8;
  spec.theta_max = 0.2;
  CHECK_THROWS_AS(generate_phantom_dataset(spec, dir3.path), ContractError);
}
