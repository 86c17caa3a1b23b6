#pragma once

#include "osr/tensor.hpp"
#include "osr/training.hpp"

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace osr {

struct ManifestSample {
  std::string image_path;  // relative to the manifest's directory
  int label_id = 0;
  std::optional<std::string> mask_path;
  std::string partition;  // "train" or "test"
};

struct DatasetManifest {
  std::string version;
  std::vector<std::string> class_names;
  std::vector<ManifestSample> samples;
  std::filesystem::path base_dir;  // directory the manifest was loaded from

  int num_classes() const { return static_cast<int>(class_names.size()); }
};

/// Parses and validates a manifest. Validation gathers every violation
/// (schema, label range, dangling paths) before throwing.
DatasetManifest load_manifest(const std::string& path);
void save_manifest(const DatasetManifest& manifest, const std::string& path);

/// In-set / out-of-set assignment of class ids.
struct SplitConfig {
  std::string name;
  std::vector<int> in_set;
  std::vector<int> out_of_set;

  void validate() const;
  void validate_against(const DatasetManifest& manifest) const;
};

/// Named split schemes over the 19 editing types (G0..G9; G5..G9 swap the
/// first in-set and out-of-set type of G0..G4) and over the 5 generator
/// architectures (S1..S4). Throws ConfigError for unknown names.
SplitConfig preset_split(const std::string& name);
std::vector<std::string> preset_split_names();

struct SplitSample {
  int manifest_index;
  int label;  // remapped in-set label for closed sets; original id for open_test
};

struct SplitResult {
  std::string name;
  int num_classes = 0;             // N = |in_set|
  std::vector<int> in_set;         // original ids, ascending; position = remapped label
  std::vector<SplitSample> closed_train;
  std::vector<SplitSample> closed_test;
  std::vector<SplitSample> open_test;
  std::vector<std::string> warnings;
};

/// Partitions manifest samples into closed train/test and open test.
/// In-set labels are remapped to contiguous 0..N-1 preserving the original
/// id order; out-of-set samples never reach a training set.
SplitResult make_split(const DatasetManifest& manifest, const SplitConfig& cfg);

/// Loads the referenced images (and masks when requested) into memory.
/// Pixel values are scaled to [0, 1]; masks to {0, 1}.
LabeledSet load_samples(const DatasetManifest& manifest, const std::vector<SplitSample>& samples,
                        bool with_masks);

struct SyntheticGenConfig {
  int image_size = 64;
  int num_classes = 8;
  int samples_per_class = 50;
  double texture_noise = 0.04;
  double manipulation_strength = 0.85;
  std::uint64_t seed = 0;

  void validate() const;
};

/// Procedural manipulation sandbox. Class 0 is "none" (background texture
/// only, all-zero mask); every other class paints a distinct localized
/// pattern inside a class-specific region. Writes 8-bit RGB PNGs, single
/// channel {0,255} mask PNGs and manifest.json under out_dir; byte-identical
/// for equal seeds.
DatasetManifest generate_synthetic(const SyntheticGenConfig& cfg, const std::string& out_dir);

/// Area-average pooling of a ground-truth mask down to the feature grid.
Tensor prepare_mask(const Tensor& mask, int feature_height, int feature_width);

}  // namespace osr
