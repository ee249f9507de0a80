// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "cellgrade/imaging.hpp"
#include "cellgrade/labels.hpp"

namespace cellgrade::data {

inline constexpr const char* kParasitizedDir = "Parasitized";
inline constexpr const char* kUninfectedDir = "Uninfected";

struct Item {
  std::string id;              // path relative to the dataset root
  std::filesystem::path path;  // absolute or root-joined path
  ClassId label;
};

// Items ordered lexicographically by id.
struct LabeledDataset {
  std::filesystem::path root;
  std::vector<Item> items;

  std::size_t size() const { return items.size(); }
  std::array<std::size_t, kNumClasses> class_counts() const;
  std::vector<ClassId> labels() const;
  LabeledDataset subset(std::span<const std::size_t> indices) const;
};

// Expects root/Parasitized and root/Uninfected holding *.png files.
// DataError for a missing class directory or an empty corpus.
LabeledDataset load_dataset(const std::filesystem::path& root);

struct SkipRecord {
  std::string id;
  std::string reason;
};

// Decoded images for a dataset. Files that fail to decode are dropped from
// `dataset` and listed in `skipped`.
struct DecodedDataset {
  LabeledDataset dataset;
  std::vector<imaging::PixelImage> images;
  std::vector<SkipRecord> skipped;
};

DecodedDataset decode_dataset(const LabeledDataset& dataset);

struct FoldAssignment {
  std::size_t folds = 0;
  std::uint64_t seed = 0;
  std::vector<std::size_t> fold_of;  // per item

  std::vector<std::size_t> members(std::size_t fold) const;
  std::vector<std::size_t> complement(std::size_t fold) const;
  std::uint64_t hash() const;
};

// Each class is shuffled with the seeded generator and dealt round-robin; the
// deal position carries over from one class to the next, so per-class and
// total fold sizes both differ by at most one.
FoldAssignment stratified_folds(std::span<const ClassId> labels,
                                std::size_t folds, std::uint64_t seed);
FoldAssignment stratified_folds(const LabeledDataset& dataset,
                                std::size_t folds, std::uint64_t seed);

struct Split {
  std::vector<std::size_t> train;
  std::vector<std::size_t> val;
};

// Stratified: round(val_fraction * class size) of each class goes to val.
Split train_val_split(std::span<const ClassId> labels, double val_fraction,
                      std::uint64_t seed);

// Covers 0..n-1 exactly once; the last batch may be short.
std::vector<std::vector<std::size_t>> batch_iter(std::size_t n,
                                                 std::size_t batch_size,
                                                 bool shuffle,
                                                 std::uint64_t seed);

struct SynthConfig {
  std::size_t n = 200;
  double parasitized_fraction = 0.5;
  std::size_t side = 64;
  std::uint64_t seed = 0;
};

inline constexpr const char* kGeneratorVersion = "cellgrade-synth/1";

// Single synthetic cell image. Both classes get a pink elliptical cell on a
// dark background; parasitized cells also carry 1-3 purple stain blobs.
imaging::PixelImage synth_cell(std::size_t side, bool parasitized,
                               std::uint64_t seed);

// Writes out/Parasitized/*.png, out/Uninfected/*.png and out/manifest.json.
// The output is a pure function of the config.
void synth_generate(const std::filesystem::path& out, const SynthConfig& config);

}  // namespace cellgrade::data
