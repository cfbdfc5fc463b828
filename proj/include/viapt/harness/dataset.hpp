#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "viapt/training/dataset.hpp"

namespace viapt {

enum class DatasetVariant { class_template, instance_shift, pretext_rotation };

DatasetVariant parse_dataset_variant(std::string_view text);
std::string to_string(DatasetVariant v);

struct SyntheticDatasetSpec {
  DatasetVariant variant = DatasetVariant::instance_shift;
  std::uint32_t classes = 5;  // forced to 4 for pretext_rotation
  /// Total images; split 60/20/20 into train/val/test.
  std::uint32_t samples = 1000;
  std::uint32_t side = 16;
  std::uint32_t channels = 1;
  double noise = 0.3;
  std::uint64_t seed = 1;

  void validate() const;
};

struct DatasetSplits {
  Dataset train, val, test;
};

/// Zero-mean, unit-variance smooth pattern per class (sum of random
/// Gaussian blobs), shape classes x (channels * side * side).
std::vector<std::vector<float>> class_templates(const SyntheticDatasetSpec& spec);

/// class_template: template + noise.
/// instance_shift: a * template + b + noise with a per-image contrast a
///   whose sign also relabels the image (negative a maps class c to c+1 mod
///   C) and a per-image brightness b.
/// pretext_rotation: an oriented random pattern rotated by k * 90 degrees,
///   label k.
DatasetSplits generate_dataset(const SyntheticDatasetSpec& spec);

/// Nearest template by centred correlation, ignoring any per-image shift.
double template_only_oracle_accuracy(const SyntheticDatasetSpec& spec, const Dataset& data);
/// Uses the strongest absolute correlation and its sign to undo the shift.
double instance_aware_oracle_accuracy(const SyntheticDatasetSpec& spec, const Dataset& data);

/// "VIADATA\x01", u32 count, channels, side, classes, f32 pixels, u16 labels.
std::vector<std::uint8_t> serialize_dataset(const Dataset& d);
Dataset parse_dataset(const std::vector<std::uint8_t>& bytes);
void write_dataset(const Dataset& d, const std::filesystem::path& path);
Dataset read_dataset(const std::filesystem::path& path);

void write_splits(const DatasetSplits& s, const std::filesystem::path& dir);
DatasetSplits read_splits(const std::filesystem::path& dir);

}  // namespace viapt
