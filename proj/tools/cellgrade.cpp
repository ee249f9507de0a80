// SPDX-License-Identifier: Apache-2.0
//
// cellgrade: kNN and CNN experiments on cell images.
//
// Exit codes: 0 success, 1 unexpected failure, 2 configuration error,
// 3 data error, 4 integrity error.

#include <CLI11.hpp>

#include <iostream>

#include "cellgrade/errors.hpp"
#include "cellgrade/experiments.hpp"

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitData = 3;
constexpr int kExitIntegrity = 4;

}  // namespace

int main(int argc, char** argv) {
  using namespace cellgrade;

  CLI::App app{"cellgrade - malaria cell image classification experiments"};
  app.require_subcommand(1);

  harness::KnnConfig knn;
  std::string knn_features = "hist";
  std::string knn_k = "1-150";
  auto* knn_cmd = app.add_subcommand("knn", "k-nearest-neighbour cross-validation");
  knn_cmd->add_option("--data", knn.data, "dataset root (Parasitized/, Uninfected/)")->required();
  knn_cmd->add_option("--features", knn_features, "raw | hist")
      ->check(CLI::IsMember({"raw", "hist"}));
  knn_cmd->add_option("--metric", knn.metric, "euclidean | manhattan | hamming | minkowski")
      ->check(CLI::IsMember({"euclidean", "manhattan", "hamming", "minkowski"}));
  knn_cmd->add_option("--p", knn.p, "minkowski exponent (>= 1)");
  knn_cmd->add_option("--k", knn_k, "k values, e.g. 10 or 1,5,10 or 1-150");
  knn_cmd->add_option("--folds", knn.folds, "cross-validation folds");
  knn_cmd->add_option("--seed", knn.seed, "fold assignment seed");
  knn_cmd->add_option("--bins", knn.bins, "histogram bins per HSV channel");
  knn_cmd->add_option("--out", knn.out_prefix, "output prefix (.csv and .json)")->required();

  harness::CnnTrainConfig train;
  auto* train_cmd = app.add_subcommand("cnn-train", "train the CNN");
  train_cmd->add_option("--data", train.data, "dataset root")->required();
  train_cmd->add_flag("--reduced", train.reduced, "narrow 32x32 preset instead of the full network");
  train_cmd->add_option("--epochs", train.epochs, "training epochs");
  train_cmd->add_option("--batch", train.batch, "batch size");
  train_cmd->add_option("--lr", train.lr, "Adam learning rate");
  train_cmd->add_option("--seed", train.seed, "seed for split, init, shuffling and dropout");
  train_cmd->add_option("--val-frac", train.val_frac, "validation fraction");
  train_cmd->add_option("--checkpoint", train.checkpoint, "checkpoint path")->required();
  train_cmd->add_option("--out", train.out_prefix, "output prefix (.csv and .json)")->required();

  harness::CnnEvalConfig eval;
  auto* eval_cmd = app.add_subcommand("cnn-eval", "evaluate a checkpoint");
  eval_cmd->add_option("--checkpoint", eval.checkpoint, "checkpoint path")->required();
  eval_cmd->add_option("--data", eval.data, "dataset root")->required();
  eval_cmd->add_option("--out", eval.out, "JSON report path")->required();

  data::SynthConfig synth;
  std::filesystem::path synth_out;
  auto* synth_cmd = app.add_subcommand("synth", "generate a synthetic cell image set");
  synth_cmd->add_option("--out", synth_out, "output directory")->required();
  synth_cmd->add_option("--n", synth.n, "number of images");
  synth_cmd->add_option("--fraction", synth.parasitized_fraction, "parasitized fraction");
  synth_cmd->add_option("--side", synth.side, "image side in pixels");
  synth_cmd->add_option("--seed", synth.seed, "generator seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitConfig;
  }

  try {
    if (*knn_cmd) {
      knn.features = imaging::parse_feature_kind(knn_features);
      knn.k_values = harness::parse_k_list(knn_k);
      const auto summary = harness::cmd_knn(knn, &std::cerr);
      std::cout << "best k " << summary.best_k << " mean accuracy "
                << harness::format_real(summary.best_mean) << "\n";
    } else if (*train_cmd) {
      const auto summary = harness::cmd_cnn_train(train, &std::cerr);
      if (!summary.epochs.empty()) {
        std::cout << "final val accuracy "
                  << harness::format_real(summary.epochs.back().val_acc) << "\n";
      }
    } else if (*eval_cmd) {
      const auto summary = harness::cmd_cnn_eval(eval);
      std::cout << "accuracy " << harness::format_real(summary.result.accuracy) << " ("
                << summary.result.correct << "/" << summary.total << ")\n";
    } else if (*synth_cmd) {
      harness::cmd_synth(synth, synth_out);
      std::cout << "wrote " << synth.n << " images to " << synth_out.string() << "\n";
    }
  } catch (const ConfigError& e) {
    std::cerr << "configuration error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kExitData;
  } catch (const IntegrityError& e) {
    std::cerr << "integrity error: " << e.what() << "\n";
    return kExitIntegrity;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
