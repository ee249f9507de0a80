// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "cellgrade/data.hpp"
#include "cellgrade/imaging.hpp"
#include "cellgrade/knn.hpp"
#include "cellgrade/nn/network.hpp"

namespace cellgrade::harness {

inline constexpr const char* kArtifactVersion = "cellgrade 1.0.0";

// CSV headers, exactly.
inline constexpr const char* kKnnCsvHeader = "feature,metric,k,fold,accuracy";
inline constexpr const char* kCnnCsvHeader = "epoch,train_loss,train_acc,val_loss,val_acc";

// Every CSV starts with one "# config: {...}" line holding the full
// configuration; JSON outputs carry the same object under "config".
inline constexpr const char* kConfigPrefix = "# config: ";

struct KnnConfig {
  std::filesystem::path data;
  imaging::FeatureKind features = imaging::FeatureKind::hsv_histogram;
  std::string metric = "euclidean";
  double p = 2.0;
  std::vector<std::size_t> k_values;  // empty -> 1..150
  std::size_t folds = 4;
  std::uint64_t seed = 0;
  std::size_t bins = imaging::kDefaultHistogramBins;
  std::filesystem::path out_prefix;
};

struct CnnTrainConfig {
  std::filesystem::path data;
  bool reduced = false;
  std::size_t epochs = 10;
  std::size_t batch = 32;
  double lr = 1e-3;
  std::uint64_t seed = 0;
  double val_frac = 0.2;
  nn::DropoutRates dropout;
  std::filesystem::path checkpoint;
  std::filesystem::path out_prefix;
};

struct CnnEvalConfig {
  std::filesystem::path checkpoint;
  std::filesystem::path data;
  std::filesystem::path out;
};

nlohmann::ordered_json to_json(const KnnConfig& c);
nlohmann::ordered_json to_json(const CnnTrainConfig& c);
nlohmann::ordered_json to_json(const CnnEvalConfig& c);
nlohmann::ordered_json to_json(const data::SynthConfig& c, const std::filesystem::path& out);

// "1,5,10", "1-150" or a mix such as "1-5,10".
std::vector<std::size_t> parse_k_list(std::string_view text);

// Shortest text that reads back to the same double.
std::string format_real(double v);

struct KnnRecord {
  std::size_t k;
  std::size_t fold;
  double accuracy;
};

struct KnnSummary {
  std::vector<knn::CvReport> reports;
  std::size_t best_k = 0;
  double best_mean = 0.0;
  std::size_t skipped = 0;
};

// Writes <prefix>.csv (one row per fold per k) and <prefix>.json.
KnnSummary cmd_knn(const KnnConfig& config, std::ostream* log = nullptr);

struct CnnEpochRecord {
  std::size_t epoch;
  double train_loss, train_acc, val_loss, val_acc;
};

struct CnnTrainSummary {
  nn::EvalResult initial_train;
  nn::EvalResult initial_val;
  std::vector<CnnEpochRecord> epochs;
  std::size_t skipped = 0;
};

// Writes the checkpoint (after initialisation and after every epoch),
// <prefix>.csv with one row per epoch and <prefix>.json.
CnnTrainSummary cmd_cnn_train(const CnnTrainConfig& config,
                              std::ostream* log = nullptr);

// The reduced and full presets (default dropout rates) a checkpoint digest can
// resolve to.
std::optional<nn::NetworkSpec> spec_for_digest(std::uint64_t digest);

struct CnnEvalSummary {
  nn::EvalResult result;
  std::size_t total = 0;
  std::array<std::size_t, kNumClasses> class_counts{};
  std::size_t skipped = 0;
};

CnnEvalSummary cmd_cnn_eval(const CnnEvalConfig& config);

void cmd_synth(const data::SynthConfig& config, const std::filesystem::path& out);

// Decoded corpus stacked as tensors of side x side x 3.
nn::TensorDataset<float> to_tensor_dataset(const data::DecodedDataset& decoded,
                                           std::size_t side);

}  // namespace cellgrade::harness
