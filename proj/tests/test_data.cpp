// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <algorithm>
#include <set>

#include "cellgrade/data.hpp"
#include "cellgrade/errors.hpp"
#include "cellgrade/prng.hpp"
#include "fixtures.hpp"
#include "oracles.hpp"

namespace cellgrade::data {
namespace {

using testing::TempDir;

void make_corpus(const TempDir& dir, std::size_t parasitized, std::size_t uninfected) {
  for (std::size_t i = 0; i < parasitized; ++i) {
    testing::write_png(dir / ("Parasitized/p" + std::to_string(i) + ".png"),
                       imaging::PixelImage(3, 3, 0.5));
  }
  for (std::size_t i = 0; i < uninfected; ++i) {
    testing::write_png(dir / ("Uninfected/u" + std::to_string(i) + ".png"),
                       imaging::PixelImage(3, 3, 0.25));
  }
}

std::vector<ClassId> balanced_labels(std::size_t per_class) {
  std::vector<ClassId> labels;
  for (std::size_t i = 0; i < per_class; ++i) {
    labels.push_back(kUninfected);
    labels.push_back(kParasitized);
  }
  return labels;
}

TEST(LoadDataset, EnumeratesBothClasses) {
  TempDir dir("load");
  make_corpus(dir, 3, 2);
  testing::write_bytes(dir / "Uninfected/notes.txt", {'x'});
  testing::write_png(dir / "Parasitized/UPPER.PNG", imaging::PixelImage(2, 2));
  const auto ds = load_dataset(dir.path());
  EXPECT_EQ(ds.size(), 6u);
  EXPECT_EQ(ds.class_counts()[kParasitized], 4u);
  EXPECT_EQ(ds.class_counts()[kUninfected], 2u);
  EXPECT_TRUE(std::is_sorted(ds.items.begin(), ds.items.end(),
                             [](const Item& a, const Item& b) { return a.id < b.id; }));
  EXPECT_EQ(ds.items.front().id, "Parasitized/UPPER.PNG");
}

TEST(LoadDataset, LayoutAndEmptyErrors) {
  TempDir missing("missing");
  std::filesystem::create_directories(missing / "Parasitized");
  EXPECT_THROW(load_dataset(missing.path()), DataError);

  TempDir empty("empty");
  std::filesystem::create_directories(empty / "Parasitized");
  std::filesystem::create_directories(empty / "Uninfected");
  EXPECT_THROW(load_dataset(empty.path()), DataError);
}

TEST(DecodeDataset, CorruptFilesAreSkippedAndReported) {
  TempDir dir("skip");
  make_corpus(dir, 2, 2);
  testing::write_bytes(dir / "Uninfected/broken.png", {0x89, 'P', 'N', 'G'});
  const auto decoded = decode_dataset(load_dataset(dir.path()));
  EXPECT_EQ(decoded.dataset.size(), 4u);
  EXPECT_EQ(decoded.images.size(), 4u);
  ASSERT_EQ(decoded.skipped.size(), 1u);
  EXPECT_EQ(decoded.skipped[0].id, "Uninfected/broken.png");
}

TEST(StratifiedFolds, ExactDivision) {
  const auto labels = balanced_labels(4);
  const auto folds = stratified_folds(labels, 4, 17);
  for (std::size_t f = 0; f < 4; ++f) {
    const auto m = folds.members(f);
    ASSERT_EQ(m.size(), 2u);
    EXPECT_NE(labels[m[0]], labels[m[1]]);
    EXPECT_EQ(folds.complement(f).size(), 6u);
  }
}

TEST(StratifiedFolds, DeterministicPerSeed) {
  const auto labels = balanced_labels(50);
  const auto a = stratified_folds(labels, 4, 3), b = stratified_folds(labels, 4, 3);
  EXPECT_EQ(a.fold_of, b.fold_of);
  EXPECT_EQ(a.hash(), b.hash());
  EXPECT_NE(a.hash(), stratified_folds(labels, 4, 4).hash());
}

TEST(StratifiedFolds, FullCorpusSizeArithmetic) {
  // 13,779 per class over 4 folds: 13779 = 4 * 3444 + 3.
  const auto labels = balanced_labels(13779);
  ASSERT_EQ(labels.size(), 27558u);
  const auto folds = stratified_folds(labels, 4, 0);
  std::size_t total = 0;
  for (std::size_t f = 0; f < 4; ++f) {
    std::array<std::size_t, 2> per_class{};
    for (auto i : folds.members(f)) ++per_class[labels[i]];
    for (auto c : per_class) {
      EXPECT_TRUE(c == 3444 || c == 3445) << c;
    }
    const std::size_t size = per_class[0] + per_class[1];
    EXPECT_TRUE(size == 6889 || size == 6890) << size;
    total += size;
  }
  EXPECT_EQ(total, 27558u);
}

TEST(StratifiedFolds, BalanceHoldsForRandomInputs) {
  SeededPrng rng(2);
  for (int t = 0; t < 50; ++t) {
    const std::size_t folds = 2 + rng.below(6);
    std::vector<ClassId> labels;
    const std::size_t a = folds + rng.below(40), b = folds + rng.below(40);
    labels.insert(labels.end(), a, kUninfected);
    labels.insert(labels.end(), b, kParasitized);
    rng.shuffle(std::span(labels));
    const auto fa = stratified_folds(labels, folds, rng.next());
    std::vector<std::array<std::size_t, 2>> counts(folds);
    for (std::size_t i = 0; i < labels.size(); ++i) ++counts[fa.fold_of[i]][labels[i]];
    for (int c = 0; c < 2; ++c) {
      std::size_t lo = SIZE_MAX, hi = 0;
      for (auto& fc : counts) {
        lo = std::min(lo, fc[c]);
        hi = std::max(hi, fc[c]);
      }
      EXPECT_LE(hi - lo, 1u);
    }
  }
}

TEST(StratifiedFolds, ClassSmallerThanFoldsIsConfigError) {
  const std::vector<ClassId> labels = {0, 0, 0, 0, 1, 1, 1};
  EXPECT_THROW(stratified_folds(labels, 4, 0), ConfigError);
}

TEST(TrainValSplit, Examples) {
  const auto labels = balanced_labels(5);
  const auto split = train_val_split(labels, 0.2, 1);
  ASSERT_EQ(split.val.size(), 2u);
  EXPECT_NE(labels[split.val[0]], labels[split.val[1]]);
  EXPECT_EQ(split.train.size(), 8u);

  const auto half = train_val_split(balanced_labels(2), 0.5, 1);
  EXPECT_EQ(half.train.size(), 2u);
  EXPECT_EQ(half.val.size(), 2u);
}

TEST(TrainValSplit, IsAPartition) {
  const auto labels = balanced_labels(37);
  const auto split = train_val_split(labels, 0.3, 8);
  std::vector<std::size_t> all = split.train;
  all.insert(all.end(), split.val.begin(), split.val.end());
  std::sort(all.begin(), all.end());
  for (std::size_t i = 0; i < all.size(); ++i) ASSERT_EQ(all[i], i);
  EXPECT_EQ(all.size(), labels.size());
}

TEST(TrainValSplit, DegenerateSplitIsConfigError) {
  EXPECT_THROW(train_val_split(balanced_labels(2), 0.1, 0), ConfigError);
  EXPECT_THROW(train_val_split(balanced_labels(2), 0.0, 0), ConfigError);
  EXPECT_THROW(train_val_split(balanced_labels(2), 1.0, 0), ConfigError);
}

TEST(BatchIter, SizesOrderAndDeterminism) {
  const auto plain = batch_iter(10, 4, false, 0);
  ASSERT_EQ(plain.size(), 3u);
  EXPECT_EQ(plain[0], (std::vector<std::size_t>{0, 1, 2, 3}));
  EXPECT_EQ(plain[1], (std::vector<std::size_t>{4, 5, 6, 7}));
  EXPECT_EQ(plain[2], (std::vector<std::size_t>{8, 9}));
  EXPECT_EQ(batch_iter(10, 4, true, 5), batch_iter(10, 4, true, 5));
  EXPECT_NE(batch_iter(10, 4, true, 5), batch_iter(10, 4, true, 6));
  EXPECT_THROW(batch_iter(10, 0, false, 0), ConfigError);
}

TEST(BatchIter, CoversEveryIndexOnce) {
  SeededPrng rng(4);
  for (int t = 0; t < 30; ++t) {
    const std::size_t n = 1 + rng.below(200), b = 1 + rng.below(40);
    std::vector<std::size_t> seen;
    for (const auto& batch : batch_iter(n, b, true, rng.next())) {
      EXPECT_LE(batch.size(), b);
      seen.insert(seen.end(), batch.begin(), batch.end());
    }
    std::sort(seen.begin(), seen.end());
    ASSERT_EQ(seen.size(), n);
    for (std::size_t i = 0; i < n; ++i) ASSERT_EQ(seen[i], i);
  }
}

TEST(Synth, CountsManifestAndDeterminism) {
  TempDir a("synth-a"), b("synth-b");
  SynthConfig cfg;
  cfg.n = 100;
  cfg.side = 32;
  cfg.seed = 7;
  synth_generate(a.path(), cfg);
  synth_generate(b.path(), cfg);
  const auto ds = load_dataset(a.path());
  EXPECT_EQ(ds.class_counts()[kParasitized], 50u);
  EXPECT_EQ(ds.class_counts()[kUninfected], 50u);
  for (const auto& item : ds.items) {
    EXPECT_EQ(testing::read_bytes(item.path), testing::read_bytes(b / item.id)) << item.id;
  }
  EXPECT_EQ(testing::read_bytes(a / "manifest.json"), testing::read_bytes(b / "manifest.json"));
  const auto img = imaging::decode_image_file((a / ds.items[0].id).string());
  EXPECT_EQ(img.width, 32u);
}

TEST(Synth, UnwritableDirectoryIsAnError) {
  TempDir dir("unwritable");
  testing::write_bytes(dir / "file", {'x'});
  EXPECT_THROW(synth_generate(dir / "file/sub", SynthConfig{}), Error);
}

// Share of strongly purple pixels, measured with the oracle's hue formula.
double purple_share(const imaging::PixelImage& img) {
  std::size_t purple = 0;
  for (std::size_t p = 0; p < img.pixel_count(); ++p) {
    const auto c = oracle::colorsys_hsv(img.values[3 * p], img.values[3 * p + 1],
                                        img.values[3 * p + 2]);
    if (c.h > 0.70 && c.h < 0.85 && c.s > 0.35) ++purple;
  }
  return static_cast<double>(purple) / static_cast<double>(img.pixel_count());
}

TEST(Synth, ParasitizedCellsCarryPurpleStain) {
  double par = 0, uninf = 0;
  for (std::uint64_t s = 0; s < 40; ++s) {
    par += purple_share(synth_cell(64, true, s));
    uninf += purple_share(synth_cell(64, false, s));
  }
  EXPECT_GT(par / 40, 0.01);
  EXPECT_GT(par, 5 * uninf);
}

}  // namespace
}  // namespace cellgrade::data
