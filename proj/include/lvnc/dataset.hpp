#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "lvnc/phantom.hpp"

namespace lvnc::data {

/// One image/mask pair. Paths are stored relative to the manifest's directory.
struct SliceRecord {
  std::string slice_id;
  std::string patient_id;
  std::string image_path;
  std::string mask_path;
  bool lvnc_positive = false;
  std::optional<SlicePosition> slice_position;
  /// Optional source-resolution mask the working mask was resampled from.
  std::optional<std::string> source_mask_path;

  bool operator==(const SliceRecord&) const = default;
};

struct DatasetManifest {
  /// Manifest format version and dataset-level metadata; written as the
  /// first line of the file.
  double pixel_size_mm = 1.0;
  std::string provenance;
  std::vector<SliceRecord> records;
  /// Directory that relative record paths resolve against.
  std::filesystem::path root;

  std::filesystem::path resolve(const std::string& relative) const { return root / relative; }
  bool operator==(const DatasetManifest& o) const {
    return pixel_size_mm == o.pixel_size_mm && provenance == o.provenance && records == o.records;
  }
};

// Manifest file: JSON lines. Line 1 is
//   {"manifest_version":1,"pixel_size_mm":...,"provenance":"..."}
// and each following line is one record with keys, in order: slice_id,
// patient_id, image_path, mask_path, lvnc_positive, then optional
// slice_position ("apical" | "mid" | "basal") and source_mask_path.

inline constexpr int kManifestVersion = 1;

std::string record_to_json(const SliceRecord& r);
SliceRecord record_from_json(const std::string& line);
void write_manifest(const std::filesystem::path& path, const DatasetManifest& manifest);
/// Throws FormatError on malformed lines or duplicate slice ids.
DatasetManifest read_manifest(const std::filesystem::path& path);

struct FoldAssignment {
  /// Record indices per fold, each in manifest order.
  std::vector<std::vector<std::size_t>> folds;
  /// Non-empty when the balance targets could not all be met.
  std::vector<std::string> warnings;
};

inline constexpr double kMaxFoldRateDeviation = 0.05;

/// Patient-disjoint k-fold split balancing LVNC-positive and negative slice
/// counts across folds. Deterministic in seed. Throws ContractError when
/// k < 2 or there are fewer than k patients.
FoldAssignment stratified_kfold(const std::vector<SliceRecord>& records, int k, std::uint64_t seed);

/// Patient-disjoint train/validation split of `indices` (indices into
/// `records`) with about `validation_fraction` of the slices held out, using
/// one fold of a stratified split with k = round(1 / validation_fraction).
struct TrainValSplit {
  std::vector<std::size_t> train;
  std::vector<std::size_t> validation;
};
TrainValSplit train_validation_split(const std::vector<SliceRecord>& records,
                                     const std::vector<std::size_t>& indices,
                                     double validation_fraction, std::uint64_t seed);

/// Synthetic patients: each patient has a trabeculation level drawn
/// uniformly from [theta_min, theta_max]; its slices cycle through
/// apical/mid/basal with per-slice jitter.
struct PhantomDatasetSpec {
  std::size_t count = 200;
  /// Patients to spread `count` slices over; 0 means count / slices_per_patient.
  std::size_t patients = 0;
  std::size_t slices_per_patient = 5;
  double theta_min = 0.0;
  double theta_max = 1.0;
  std::size_t size = 64;
  /// When non-zero, geometry is rasterised at this size, stored as the
  /// source mask, and the working mask is its nearest-neighbour resampling.
  std::size_t source_size = 0;
  std::uint64_t seed = 1;
};

/// Writes rasters under out_dir and returns the manifest (also written to
/// out_dir / "manifest.jsonl").
DatasetManifest generate_phantom_dataset(const PhantomDatasetSpec& spec,
                                         const std::filesystem::path& out_dir);

/// Phantom parameters for one slice of the dataset generator; exposed so the
/// generator's calibration can be checked without touching disk.
PhantomParams phantom_slice_params(std::size_t size, double theta, SlicePosition pos, std::uint64_t seed);

}  // namespace lvnc::data
