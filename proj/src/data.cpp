// SPDX-License-Identifier: Apache-2.0
#include "cellgrade/data.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <numeric>

#include "cellgrade/errors.hpp"
#include "cellgrade/prng.hpp"

namespace cellgrade::data {

namespace fs = std::filesystem;

std::array<std::size_t, kNumClasses> LabeledDataset::class_counts() const {
  std::array<std::size_t, kNumClasses> counts{};
  for (const auto& item : items) ++counts[static_cast<std::size_t>(item.label)];
  return counts;
}

std::vector<ClassId> LabeledDataset::labels() const {
  std::vector<ClassId> out;
  out.reserve(items.size());
  for (const auto& item : items) out.push_back(item.label);
  return out;
}

LabeledDataset LabeledDataset::subset(std::span<const std::size_t> indices) const {
  LabeledDataset out{root, {}};
  out.items.reserve(indices.size());
  for (auto i : indices) out.items.push_back(items.at(i));
  return out;
}

namespace {

bool is_png(const fs::path& p) {
  std::string ext = p.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return ext == ".png";
}

}  // namespace

LabeledDataset load_dataset(const fs::path& root) {
  LabeledDataset ds{root, {}};
  const std::pair<const char*, ClassId> classes[] = {
      {kParasitizedDir, kParasitized}, {kUninfectedDir, kUninfected}};
  for (const auto& [dir, label] : classes) {
    const fs::path class_dir = root / dir;
    if (!fs::is_directory(class_dir)) {
      throw DataError("dataset layout error: missing directory " + class_dir.string());
    }
    for (const auto& entry : fs::directory_iterator(class_dir)) {
      if (!entry.is_regular_file() || !is_png(entry.path())) continue;
      const std::string id =
          std::string(dir) + "/" + entry.path().filename().generic_string();
      ds.items.push_back({id, entry.path(), label});
    }
  }
  if (ds.items.empty()) {
    throw DataError("dataset at " + root.string() + " contains no PNG images");
  }
  std::sort(ds.items.begin(), ds.items.end(),
            [](const Item& a, const Item& b) { return a.id < b.id; });
  return ds;
}

DecodedDataset decode_dataset(const LabeledDataset& dataset) {
  DecodedDataset out;
  out.dataset.root = dataset.root;
  for (const auto& item : dataset.items) {
    try {
      out.images.push_back(imaging::decode_image_file(item.path.string()));
      out.dataset.items.push_back(item);
    } catch (const DataError& e) {
      out.skipped.push_back({item.id, e.what()});
    }
  }
  if (out.dataset.items.empty()) {
    throw DataError("no image in " + dataset.root.string() + " could be decoded");
  }
  return out;
}

std::vector<std::size_t> FoldAssignment::members(std::size_t fold) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < fold_of.size(); ++i) {
    if (fold_of[i] == fold) out.push_back(i);
  }
  return out;
}

std::vector<std::size_t> FoldAssignment::complement(std::size_t fold) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < fold_of.size(); ++i) {
    if (fold_of[i] != fold) out.push_back(i);
  }
  return out;
}

std::uint64_t FoldAssignment::hash() const {
  Fnv1a64 h;
  const auto put = [&h](std::uint64_t v) {
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
    h.update(b, 8);
  };
  put(folds);
  for (auto f : fold_of) put(f);
  return h.digest();
}

FoldAssignment stratified_folds(std::span<const ClassId> labels,
                                std::size_t folds, std::uint64_t seed) {
  if (folds < 2) throw ConfigError("need at least 2 folds, got " + std::to_string(folds));
  FoldAssignment out{folds, seed, std::vector<std::size_t>(labels.size(), 0)};
  SeededPrng rng(seed);
  std::size_t deal = 0;
  for (std::size_t c = 0; c < kNumClasses; ++c) {
    std::vector<std::size_t> members;
    for (std::size_t i = 0; i < labels.size(); ++i) {
      if (static_cast<std::size_t>(labels[i]) == c) members.push_back(i);
    }
    if (members.size() < folds) {
      throw ConfigError("class " + std::to_string(c) + " has " +
                        std::to_string(members.size()) + " items, fewer than " +
                        std::to_string(folds) + " folds");
    }
    rng.shuffle(std::span(members));
    for (auto i : members) out.fold_of[i] = deal++ % folds;
  }
  return out;
}

FoldAssignment stratified_folds(const LabeledDataset& dataset, std::size_t folds,
                                std::uint64_t seed) {
  const auto labels = dataset.labels();
  return stratified_folds(labels, folds, seed);
}

Split train_val_split(std::span<const ClassId> labels, double val_fraction,
                      std::uint64_t seed) {
  if (!(val_fraction > 0.0 && val_fraction < 1.0)) {
    throw ConfigError("validation fraction must lie in (0, 1), got " +
                      std::to_string(val_fraction));
  }
  Split out;
  SeededPrng rng(seed);
  for (std::size_t c = 0; c < kNumClasses; ++c) {
    std::vector<std::size_t> members;
    for (std::size_t i = 0; i < labels.size(); ++i) {
      if (static_cast<std::size_t>(labels[i]) == c) members.push_back(i);
    }
    rng.shuffle(std::span(members));
    const auto n_val = static_cast<std::size_t>(
        std::llround(val_fraction * static_cast<double>(members.size())));
    out.val.insert(out.val.end(), members.begin(),
                   members.begin() + static_cast<std::ptrdiff_t>(n_val));
    out.train.insert(out.train.end(),
                     members.begin() + static_cast<std::ptrdiff_t>(n_val),
                     members.end());
  }
  if (out.train.empty() || out.val.empty()) {
    throw ConfigError("validation fraction " + std::to_string(val_fraction) +
                      " leaves an empty " + (out.val.empty() ? "validation" : "training") +
                      " set");
  }
  std::sort(out.train.begin(), out.train.end());
  std::sort(out.val.begin(), out.val.end());
  return out;
}

std::vector<std::vector<std::size_t>> batch_iter(std::size_t n,
                                                 std::size_t batch_size,
                                                 bool shuffle,
                                                 std::uint64_t seed) {
  if (batch_size == 0) throw ConfigError("batch size must be >= 1");
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  if (shuffle) {
    SeededPrng rng(seed);
    rng.shuffle(std::span(order));
  }
  std::vector<std::vector<std::size_t>> batches;
  for (std::size_t start = 0; start < n; start += batch_size) {
    const std::size_t end = std::min(n, start + batch_size);
    batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(start),
                         order.begin() + static_cast<std::ptrdiff_t>(end));
  }
  return batches;
}

}  // namespace cellgrade::data
