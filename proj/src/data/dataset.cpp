#include "lvnc/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <json.hpp>
#include <map>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

#include "lvnc/errors.hpp"

namespace lvnc::data {

using ojson = nlohmann::ordered_json;

std::string record_to_json(const SliceRecord& r) {
  ojson j;
  j["slice_id"] = r.slice_id;
  j["patient_id"] = r.patient_id;
  j["image_path"] = r.image_path;
  j["mask_path"] = r.mask_path;
  j["lvnc_positive"] = r.lvnc_positive;
  if (r.slice_position) j["slice_position"] = slice_position_name(*r.slice_position);
  if (r.source_mask_path) j["source_mask_path"] = *r.source_mask_path;
  return j.dump();
}

SliceRecord record_from_json(const std::string& line) {
  SliceRecord r;
  try {
    const auto j = ojson::parse(line);
    r.slice_id = j.at("slice_id").get<std::string>();
    r.patient_id = j.at("patient_id").get<std::string>();
    r.image_path = j.at("image_path").get<std::string>();
    r.mask_path = j.at("mask_path").get<std::string>();
    r.lvnc_positive = j.at("lvnc_positive").get<bool>();
    if (j.contains("slice_position")) {
      r.slice_position = parse_slice_position(j["slice_position"].get<std::string>());
    }
    if (j.contains("source_mask_path")) r.source_mask_path = j["source_mask_path"].get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("bad manifest record: ") + e.what());
  }
  if (r.slice_id.empty() || r.patient_id.empty()) throw FormatError("manifest record needs slice_id and patient_id");
  return r;
}

void write_manifest(const std::filesystem::path& path, const DatasetManifest& manifest) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw FormatError("cannot write manifest " + path.string());
  ojson head;
  head["manifest_version"] = kManifestVersion;
  head["pixel_size_mm"] = manifest.pixel_size_mm;
  head["provenance"] = manifest.provenance;
  os << head.dump() << '\n';
  for (const auto& r : manifest.records) os << record_to_json(r) << '\n';
  if (!os) throw FormatError("failed writing manifest " + path.string());
}

DatasetManifest read_manifest(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw FormatError("cannot open manifest " + path.string());
  DatasetManifest m;
  m.root = path.parent_path();
  std::string line;
  if (!std::getline(is, line)) throw FormatError("empty manifest " + path.string());
  try {
    const auto head = ojson::parse(line);
    if (head.at("manifest_version").get<int>() != kManifestVersion) {
      throw FormatError("unsupported manifest version in " + path.string());
    }
    m.pixel_size_mm = head.value("pixel_size_mm", 1.0);
    m.provenance = head.value("provenance", std::string());
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("bad manifest header in " + path.string() + ": " + e.what());
  }
  std::set<std::string> seen;
  std::size_t lineno = 1;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    auto r = record_from_json(line);
    if (!seen.insert(r.slice_id).second) {
      throw FormatError("duplicate slice_id '" + r.slice_id + "' at line " + std::to_string(lineno));
    }
    m.records.push_back(std::move(r));
  }
  return m;
}

namespace {

struct Group {
  std::vector<std::size_t> members;
  long pos = 0;
  long neg = 0;
  long size() const { return pos + neg; }
};

// Sum of squared deviations of per-fold positive and negative counts from
// their even-split targets, scaled by k to stay in integers.
long imbalance(const std::vector<long>& pos, const std::vector<long>& neg, long total_pos, long total_neg) {
  const long k = static_cast<long>(pos.size());
  long j = 0;
  for (std::size_t f = 0; f < pos.size(); ++f) {
    const long dp = k * pos[f] - total_pos;
    const long dn = k * neg[f] - total_neg;
    j += dp * dp + dn * dn;
  }
  return j;
}

}  // namespace

FoldAssignment stratified_kfold(const std::vector<SliceRecord>& records, int k, std::uint64_t seed) {
  if (k < 2) throw ContractError("stratified_kfold needs k >= 2");
  std::vector<Group> groups;
  std::map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < records.size(); ++i) {
    auto [it, fresh] = index.try_emplace(records[i].patient_id, groups.size());
    if (fresh) groups.emplace_back();
    auto& g = groups[it->second];
    g.members.push_back(i);
    (records[i].lvnc_positive ? g.pos : g.neg) += 1;
  }
  const auto kk = static_cast<std::size_t>(k);
  if (groups.size() < kk) {
    throw ContractError("stratified_kfold needs at least k patients, got " + std::to_string(groups.size()));
  }
  long total_pos = 0, total_neg = 0;
  for (const auto& g : groups) {
    total_pos += g.pos;
    total_neg += g.neg;
  }

  // Largest patients first; seed decides the order among equals.
  std::vector<std::size_t> order(groups.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return groups[a].size() > groups[b].size(); });

  std::vector<long> pos(kk, 0), neg(kk, 0);
  std::vector<std::size_t> fold_of(groups.size());
  for (std::size_t gi : order) {
    const auto& g = groups[gi];
    std::size_t best = 0;
    long best_cost = 0;
    for (std::size_t f = 0; f < kk; ++f) {
      pos[f] += g.pos;
      neg[f] += g.neg;
      const long cost = imbalance(pos, neg, total_pos, total_neg);
      pos[f] -= g.pos;
      neg[f] -= g.neg;
      const bool better = f == 0 || cost < best_cost ||
                          (cost == best_cost && pos[f] + neg[f] < pos[best] + neg[best]);
      if (better) {
        best = f;
        best_cost = cost;
      }
    }
    fold_of[gi] = best;
    pos[best] += g.pos;
    neg[best] += g.neg;
  }

  // Local search: single moves and pairwise swaps, accepted on strict
  // improvement, never emptying a fold.
  std::vector<std::size_t> fold_groups(kk, 0);
  for (std::size_t gi = 0; gi < groups.size(); ++gi) ++fold_groups[fold_of[gi]];
  long current = imbalance(pos, neg, total_pos, total_neg);
  for (int pass = 0; pass < 100; ++pass) {
    bool improved = false;
    for (std::size_t a = 0; a < groups.size(); ++a) {
      const std::size_t fa = fold_of[a];
      for (std::size_t fb = 0; fb < kk && fold_groups[fa] > 1; ++fb) {
        if (fb == fa) continue;
        pos[fa] -= groups[a].pos, neg[fa] -= groups[a].neg;
        pos[fb] += groups[a].pos, neg[fb] += groups[a].neg;
        const long cost = imbalance(pos, neg, total_pos, total_neg);
        if (cost < current) {
          current = cost;
          fold_of[a] = fb;
          --fold_groups[fa];
          ++fold_groups[fb];
          improved = true;
          break;
        }
        pos[fa] += groups[a].pos, neg[fa] += groups[a].neg;
        pos[fb] -= groups[a].pos, neg[fb] -= groups[a].neg;
      }
    }
    for (std::size_t a = 0; a < groups.size(); ++a) {
      for (std::size_t b = a + 1; b < groups.size(); ++b) {
        const std::size_t fa = fold_of[a], fb = fold_of[b];
        if (fa == fb) continue;
        const long dp = groups[b].pos - groups[a].pos, dn = groups[b].neg - groups[a].neg;
        pos[fa] += dp, neg[fa] += dn;
        pos[fb] -= dp, neg[fb] -= dn;
        const long cost = imbalance(pos, neg, total_pos, total_neg);
        if (cost < current) {
          current = cost;
          std::swap(fold_of[a], fold_of[b]);
          improved = true;
          continue;
        }
        pos[fa] -= dp, neg[fa] -= dn;
        pos[fb] += dp, neg[fb] += dn;
      }
    }
    if (!improved) break;
  }

  FoldAssignment out;
  out.folds.assign(kk, {});
  for (std::size_t gi = 0; gi < groups.size(); ++gi) {
    auto& f = out.folds[fold_of[gi]];
    f.insert(f.end(), groups[gi].members.begin(), groups[gi].members.end());
  }
  for (auto& f : out.folds) std::sort(f.begin(), f.end());

  const double global = records.empty() ? 0.0 : static_cast<double>(total_pos) / static_cast<double>(records.size());
  long largest = 0;
  for (const auto& g : groups) largest = std::max(largest, g.size());
  std::size_t lo = records.size(), hi = 0;
  for (std::size_t f = 0; f < kk; ++f) {
    const auto n = out.folds[f].size();
    lo = std::min(lo, n);
    hi = std::max(hi, n);
    const double rate = n ? static_cast<double>(pos[f]) / static_cast<double>(n) : 0.0;
    if (std::abs(rate - global) > kMaxFoldRateDeviation) {
      std::ostringstream os;
      os << "fold " << f << " positive rate " << rate << " deviates from global " << global
         << " by more than " << kMaxFoldRateDeviation;
      out.warnings.push_back(os.str());
    }
  }
  if (static_cast<long>(hi - lo) > largest) {
    out.warnings.push_back("fold sizes differ by more than the largest patient's slice count");
  }
  return out;
}

TrainValSplit train_validation_split(const std::vector<SliceRecord>& records,
                                     const std::vector<std::size_t>& indices,
                                     double validation_fraction, std::uint64_t seed) {
  if (!(validation_fraction > 0.0 && validation_fraction < 1.0)) {
    throw ContractError("validation fraction must lie in (0, 1)");
  }
  std::vector<SliceRecord> subset;
  subset.reserve(indices.size());
  for (auto i : indices) subset.push_back(records.at(i));
  const int k = std::max(2, static_cast<int>(std::lround(1.0 / validation_fraction)));
  const auto folds = stratified_kfold(subset, k, seed);
  TrainValSplit out;
  for (std::size_t f = 0; f < folds.folds.size(); ++f) {
    auto& dst = f == 0 ? out.validation : out.train;
    for (auto local : folds.folds[f]) dst.push_back(indices[local]);
  }
  std::sort(out.train.begin(), out.train.end());
  std::sort(out.validation.begin(), out.validation.end());
  return out;
}

PhantomParams phantom_slice_params(std::size_t size, double theta, SlicePosition pos, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  auto uni = [&](double lo, double hi) { return lo + (hi - lo) * (static_cast<double>(rng() >> 11) * 0x1.0p-53); };
  const double s = static_cast<double>(size);
  double scale = 1.0;
  if (pos == SlicePosition::Apical) scale = 0.82;
  if (pos == SlicePosition::Basal) scale = 1.1;
  PhantomParams p;
  p.size = size;
  p.outer_radius = s * 0.27 * scale * uni(0.95, 1.05);
  p.inner_radius = p.outer_radius * uni(0.70, 0.76);
  p.center_x = s / 2.0 + uni(-0.04, 0.04) * s;
  p.center_y = s / 2.0 + uni(-0.04, 0.04) * s;
  p.theta = theta;
  p.detail_scale = s / 64.0;
  p.seed = rng();
  return p;
}

DatasetManifest generate_phantom_dataset(const PhantomDatasetSpec& spec, const std::filesystem::path& out_dir) {
  if (!(spec.theta_min >= 0.0 && spec.theta_min <= spec.theta_max && spec.theta_max <= 1.0)) {
    throw ContractError("theta range must satisfy 0 <= min <= max <= 1");
  }
  std::size_t patients = spec.patients;
  if (patients == 0) {
    if (spec.slices_per_patient == 0) throw ContractError("slices_per_patient must be positive");
    patients = (spec.count + spec.slices_per_patient - 1) / spec.slices_per_patient;
  }
  if (spec.count > 0 && patients == 0) throw ContractError("need at least one patient");

  std::error_code ec;
  std::filesystem::create_directories(out_dir / "images", ec);
  std::filesystem::create_directories(out_dir / "masks", ec);
  if (spec.source_size) std::filesystem::create_directories(out_dir / "source_masks", ec);
  if (ec) throw FormatError("cannot create output directory " + out_dir.string() + ": " + ec.message());

  DatasetManifest manifest;
  manifest.root = out_dir;
  manifest.pixel_size_mm = 1.5 * 256.0 / static_cast<double>(spec.size);
  manifest.provenance = "synthetic phantoms, seed " + std::to_string(spec.seed);

  std::mt19937_64 rng(spec.seed);
  std::size_t made = 0;
  for (std::size_t p = 0; p < patients && made < spec.count; ++p) {
    // First (count mod patients) patients take one extra slice.
    const std::size_t per = spec.count / patients + (p < spec.count % patients ? 1 : 0);
    const double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
    const double patient_theta = spec.theta_min + (spec.theta_max - spec.theta_min) * u;
    char pid[32];
    std::snprintf(pid, sizeof(pid), "P%04zu", p);
    for (std::size_t s = 0; s < per; ++s, ++made) {
      const auto pos = static_cast<SlicePosition>(s % 3);
      const double jitter = (static_cast<double>(rng() >> 11) * 0x1.0p-53 - 0.5) * 0.1;
      const double theta = std::clamp(patient_theta + jitter, spec.theta_min, spec.theta_max);
      const std::uint64_t slice_seed = rng();
      char sid[64];
      std::snprintf(sid, sizeof(sid), "%s_S%02zu", pid, s);

      SliceRecord rec;
      rec.slice_id = sid;
      rec.patient_id = pid;
      rec.image_path = std::string("images/") + sid + ".pgm";
      rec.mask_path = std::string("masks/") + sid + ".pgm";
      rec.slice_position = pos;

      auto params = phantom_slice_params(spec.size, theta, pos, slice_seed);
      mask::SegMask working;
      if (spec.source_size) {
        const double f = static_cast<double>(spec.source_size) / static_cast<double>(spec.size);
        auto src = params;
        src.size = spec.source_size;
        src.outer_radius *= f;
        src.inner_radius *= f;
        src.center_x *= f;
        src.center_y *= f;
        src.detail_scale *= f;
        const auto source_mask = rasterize_phantom(src);
        rec.source_mask_path = std::string("source_masks/") + sid + ".pgm";
        write_pgm_mask(out_dir / *rec.source_mask_path, source_mask);
        working = mask::resample_mask(source_mask, spec.size);
      } else {
        working = rasterize_phantom(params);
      }
      const auto image = render_phantom_image(working, params);
      rec.lvnc_positive = mask::pta(mask::region_areas(working)).positive;
      save_slice(out_dir / rec.image_path, out_dir / rec.mask_path, Slice{image, working});
      manifest.records.push_back(std::move(rec));
    }
  }
  write_manifest(out_dir / "manifest.jsonl", manifest);
  return manifest;
}

}  // namespace lvnc::data
