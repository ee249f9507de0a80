// SPDX-License-Identifier: Apache-2.0
#include "cellgrade/experiments.hpp"

#include <algorithm>
#include <charconv>
#include <sstream>
#include <variant>

#include "cellgrade/checkpoint.hpp"
#include "cellgrade/errors.hpp"
#include "cellgrade/io.hpp"

namespace cellgrade::harness {

namespace fs = std::filesystem;
using nlohmann::ordered_json;

namespace {

fs::path with_suffix(const fs::path& prefix, const char* suffix) {
  fs::path p = prefix;
  p += suffix;
  return p;
}

void ensure_parent(const fs::path& path) {
  const auto parent = path.parent_path();
  if (!parent.empty()) {
    std::error_code ec;
    fs::create_directories(parent, ec);
    if (ec) throw Error("cannot create " + parent.string() + ": " + ec.message());
  }
}

void write_text(const fs::path& path, const std::string& text) {
  ensure_parent(path);
  io::write_file_atomic(path, text);
}

ordered_json skipped_json(const std::vector<data::SkipRecord>& skipped) {
  ordered_json out = ordered_json::array();
  for (const auto& s : skipped) out.push_back({{"id", s.id}, {"reason", s.reason}});
  return out;
}

ordered_json counts_json(const std::array<std::size_t, kNumClasses>& counts) {
  return {{"uninfected", counts[kUninfected]}, {"parasitized", counts[kParasitized]}};
}

ordered_json eval_json(const nn::EvalResult& r) {
  return {{"loss", r.loss},
          {"accuracy", r.accuracy},
          {"correct", r.correct},
          {"confusion", {{r.confusion[0][0], r.confusion[0][1]},
                         {r.confusion[1][0], r.confusion[1][1]}}}};
}

std::string config_line(const ordered_json& config) {
  return std::string(kConfigPrefix) + config.dump() + "\n";
}

void say(std::ostream* log, const std::string& line) {
  if (log) *log << line << std::endl;
}

}  // namespace

std::string format_real(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

std::vector<std::size_t> parse_k_list(std::string_view text) {
  std::vector<std::size_t> out;
  const auto parse_one = [&](std::string_view s) {
    std::size_t v = 0;
    const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc{} || res.ptr != s.data() + s.size() || v == 0) {
      throw ConfigError("bad k value '" + std::string(s) + "' (expected an integer >= 1)");
    }
    return v;
  };
  std::size_t start = 0;
  while (start <= text.size()) {
    auto end = text.find(',', start);
    if (end == std::string_view::npos) end = text.size();
    const auto item = text.substr(start, end - start);
    if (item.empty()) throw ConfigError("empty entry in k list '" + std::string(text) + "'");
    const auto dash = item.find('-');
    if (dash == std::string_view::npos) {
      out.push_back(parse_one(item));
    } else {
      const auto lo = parse_one(item.substr(0, dash));
      const auto hi = parse_one(item.substr(dash + 1));
      if (hi < lo) throw ConfigError("descending k range '" + std::string(item) + "'");
      for (auto k = lo; k <= hi; ++k) out.push_back(k);
    }
    start = end + 1;
  }
  return out;
}

ordered_json to_json(const KnnConfig& c) {
  ordered_json j;
  j["artifact"] = kArtifactVersion;
  j["command"] = "knn";
  j["data"] = c.data.generic_string();
  j["features"] = std::string(imaging::to_string(c.features));
  j["resize"] = "bilinear half-pixel 32x32";
  j["histogram_bins"] = c.bins;
  j["hue_convention"] = "fraction of circle in [0,1)";
  j["histogram_normalization"] = "L1";
  j["metric"] = c.metric;
  if (c.metric == "minkowski") j["p"] = c.p;
  j["k"] = c.k_values;
  j["folds"] = c.folds;
  j["stratified"] = true;
  j["tie_break"] = "nearest neighbour among tied classes";
  j["seed"] = c.seed;
  j["out"] = c.out_prefix.generic_string();
  return j;
}

ordered_json to_json(const CnnTrainConfig& c) {
  ordered_json j;
  j["artifact"] = kArtifactVersion;
  j["command"] = "cnn-train";
  j["data"] = c.data.generic_string();
  j["network"] = c.reduced ? "reduced" : "full";
  j["input_normalization"] = "pixel/255 in [0,1], bilinear resize";
  j["epochs"] = c.epochs;
  j["batch"] = c.batch;
  j["optimizer"] = {{"name", "adam"}, {"lr", c.lr}, {"beta1", 0.9}, {"beta2", 0.999},
                    {"epsilon", 1e-7}};
  j["dropout"] = {c.dropout.r1, c.dropout.r2, c.dropout.r3, c.dropout.r4};
  const nn::NetworkSpec spec = c.reduced ? nn::build_reduced_network(c.dropout)
                                         : nn::build_fig11_network(c.dropout);
  for (const auto& layer : spec.layers) {
    if (const auto* bn = std::get_if<nn::BatchNormSpec>(&layer)) {
      j["batch_norm"] = {{"epsilon", bn->epsilon}, {"momentum", bn->momentum}};
    }
  }
  j["spec_digest"] = spec.digest();
  j["init"] = "glorot uniform, zero bias";
  j["val_frac"] = c.val_frac;
  j["seed"] = c.seed;
  j["checkpoint"] = c.checkpoint.generic_string();
  j["out"] = c.out_prefix.generic_string();
  return j;
}

ordered_json to_json(const CnnEvalConfig& c) {
  ordered_json j;
  j["artifact"] = kArtifactVersion;
  j["command"] = "cnn-eval";
  j["checkpoint"] = c.checkpoint.generic_string();
  j["data"] = c.data.generic_string();
  j["out"] = c.out.generic_string();
  return j;
}

ordered_json to_json(const data::SynthConfig& c, const fs::path& out) {
  ordered_json j;
  j["artifact"] = kArtifactVersion;
  j["command"] = "synth";
  j["out"] = out.generic_string();
  j["n"] = c.n;
  j["fraction"] = c.parasitized_fraction;
  j["side"] = c.side;
  j["seed"] = c.seed;
  return j;
}

nn::TensorDataset<float> to_tensor_dataset(const data::DecodedDataset& decoded,
                                           std::size_t side) {
  const std::size_t per = side * side * 3;
  nn::TensorDataset<float> out{Tensor<float>({decoded.images.size(), side, side, 3}),
                               decoded.dataset.labels()};
  for (std::size_t i = 0; i < decoded.images.size(); ++i) {
    const auto t = imaging::image_to_tensor(decoded.images[i], side);
    std::copy(t.data(), t.data() + per, out.images.data() + i * per);
  }
  return out;
}

KnnSummary cmd_knn(const KnnConfig& given, std::ostream* log) {
  KnnConfig config = given;
  if (config.k_values.empty()) config.k_values = parse_k_list("1-150");
  if (config.bins == 0) throw ConfigError("histogram bins must be >= 1");
  const auto metric = knn::DistanceMetric::parse(config.metric, config.p);

  const auto decoded = data::decode_dataset(data::load_dataset(config.data));
  say(log, "loaded " + std::to_string(decoded.images.size()) + " images (" +
               std::to_string(decoded.skipped.size()) + " skipped)");
  knn::FeatureMatrix features;
  for (const auto& img : decoded.images) {
    features.append(imaging::extract_features(img, config.features, config.bins).values);
  }
  const auto labels = decoded.dataset.labels();
  const auto folds = data::stratified_folds(labels, config.folds, config.seed);

  KnnSummary summary;
  summary.skipped = decoded.skipped.size();
  summary.reports = knn::k_sweep(features, labels, config.k_values, config.folds, metric,
                                 config.seed);

  const ordered_json cfg = to_json(config);
  std::string csv = config_line(cfg);
  csv += kKnnCsvHeader;
  csv += "\n";
  ordered_json results = ordered_json::array();
  for (const auto& r : summary.reports) {
    for (std::size_t f = 0; f < r.fold_accuracies.size(); ++f) {
      csv += std::string(imaging::to_string(config.features)) + "," +
             std::string(metric.name()) + "," + std::to_string(r.k) + "," +
             std::to_string(f) + "," + format_real(r.fold_accuracies[f]) + "\n";
    }
    if (r.mean_accuracy > summary.best_mean || summary.best_k == 0) {
      summary.best_mean = r.mean_accuracy;
      summary.best_k = r.k;
    }
    results.push_back({{"k", r.k}, {"fold_accuracies", r.fold_accuracies},
                       {"mean", r.mean_accuracy}});
  }
  say(log, "best k = " + std::to_string(summary.best_k) +
               ", mean accuracy " + format_real(summary.best_mean));

  ordered_json json;
  json["config"] = cfg;
  json["samples"] = decoded.images.size();
  json["class_counts"] = counts_json(decoded.dataset.class_counts());
  json["skipped"] = skipped_json(decoded.skipped);
  json["fold_hash"] = folds.hash();
  json["results"] = results;
  json["best_k"] = summary.best_k;
  json["best_mean"] = summary.best_mean;

  write_text(with_suffix(config.out_prefix, ".csv"), csv);
  write_text(with_suffix(config.out_prefix, ".json"), json.dump(2) + "\n");
  return summary;
}

CnnTrainSummary cmd_cnn_train(const CnnTrainConfig& config, std::ostream* log) {
  if (config.batch == 0) throw ConfigError("batch size must be >= 1");
  if (!(config.lr >= 0.0)) throw ConfigError("learning rate must be >= 0");
  const nn::NetworkSpec spec = config.reduced ? nn::build_reduced_network(config.dropout)
                                              : nn::build_fig11_network(config.dropout);
  nn::infer_shapes(spec);
  const std::size_t side = spec.input_shape[0];

  const auto decoded = data::decode_dataset(data::load_dataset(config.data));
  const auto all = to_tensor_dataset(decoded, side);
  const auto split = data::train_val_split(all.labels, config.val_frac, config.seed);
  const nn::TensorDataset<float> train{all.gather(split.train), all.gather_labels(split.train)};
  const nn::TensorDataset<float> val{all.gather(split.val), all.gather_labels(split.val)};
  say(log, "loaded " + std::to_string(all.size()) + " images (" +
               std::to_string(decoded.skipped.size()) + " skipped): " +
               std::to_string(train.size()) + " train / " + std::to_string(val.size()) +
               " val");

  SeededPrng seeds(config.seed);
  auto params = nn::init_params<float>(spec, seeds.next());
  SeededPrng rng(seeds.next());
  const nn::AdamConfig adam{config.lr, 0.9, 0.999, 1e-7};

  CnnTrainSummary summary;
  summary.skipped = decoded.skipped.size();
  summary.initial_train = nn::evaluate(spec, params, train);
  summary.initial_val = nn::evaluate(spec, params, val);

  ensure_parent(config.checkpoint);
  checkpoint::save_checkpoint(params, spec, config.checkpoint);

  const ordered_json cfg = to_json(config);
  std::string csv = config_line(cfg);
  csv += kCnnCsvHeader;
  csv += "\n";
  const auto csv_path = with_suffix(config.out_prefix, ".csv");
  write_text(csv_path, csv);

  ordered_json running = ordered_json::array();
  for (std::size_t e = 0; e < config.epochs; ++e) {
    const auto stats = nn::train_epoch(spec, params, train, config.batch, adam, rng);
    const auto tr = nn::evaluate(spec, params, train);
    const auto va = nn::evaluate(spec, params, val);
    const CnnEpochRecord rec{e, tr.loss, tr.accuracy, va.loss, va.accuracy};
    summary.epochs.push_back(rec);
    running.push_back({{"epoch", e}, {"loss", stats.loss}, {"accuracy", stats.accuracy}});

    csv += std::to_string(e) + "," + format_real(rec.train_loss) + "," +
           format_real(rec.train_acc) + "," + format_real(rec.val_loss) + "," +
           format_real(rec.val_acc) + "\n";
    checkpoint::save_checkpoint(params, spec, config.checkpoint);
    write_text(csv_path, csv);
    say(log, "epoch " + std::to_string(e) + ": train_loss " + format_real(rec.train_loss) +
                 " train_acc " + format_real(rec.train_acc) + " val_loss " +
                 format_real(rec.val_loss) + " val_acc " + format_real(rec.val_acc));
  }

  const auto counts = nn::count_params(spec);
  ordered_json json;
  json["config"] = cfg;
  json["network"] = spec.describe();
  json["digest"] = spec.digest();
  json["params"] = {{"total", counts.total}, {"trainable", counts.trainable},
                    {"non_trainable", counts.non_trainable}};
  json["samples"] = all.size();
  json["class_counts"] = counts_json(decoded.dataset.class_counts());
  json["skipped"] = skipped_json(decoded.skipped);
  json["split"] = {{"train", train.size()}, {"val", val.size()}};
  json["initial"] = {{"train", eval_json(summary.initial_train)},
                     {"val", eval_json(summary.initial_val)}};
  json["running"] = running;
  if (!summary.epochs.empty()) {
    const auto& last = summary.epochs.back();
    json["final"] = {{"train_loss", last.train_loss}, {"train_acc", last.train_acc},
                     {"val_loss", last.val_loss}, {"val_acc", last.val_acc}};
  }
  write_text(with_suffix(config.out_prefix, ".json"), json.dump(2) + "\n");
  return summary;
}

std::optional<nn::NetworkSpec> spec_for_digest(std::uint64_t digest) {
  for (auto spec : {nn::build_reduced_network(), nn::build_fig11_network()}) {
    if (spec.digest() == digest) return spec;
  }
  return std::nullopt;
}

CnnEvalSummary cmd_cnn_eval(const CnnEvalConfig& config) {
  const auto header = checkpoint::load_checkpoint(config.checkpoint);
  const auto spec = spec_for_digest(header.spec_digest);
  if (!spec) {
    throw IntegrityError("checkpoint digest matches no known network preset");
  }
  const auto loaded = checkpoint::load_checkpoint(config.checkpoint, *spec);

  const auto decoded = data::decode_dataset(data::load_dataset(config.data));
  const auto dataset = to_tensor_dataset(decoded, spec->input_shape[0]);

  CnnEvalSummary summary;
  summary.result = nn::evaluate(*spec, loaded.params, dataset);
  summary.total = dataset.size();
  summary.class_counts = decoded.dataset.class_counts();
  summary.skipped = decoded.skipped.size();

  ordered_json json;
  json["config"] = to_json(config);
  json["network"] = spec->describe();
  json["total"] = summary.total;
  json["accuracy"] = summary.result.accuracy;
  json["correct"] = summary.result.correct;
  json["loss"] = summary.result.loss;
  json["confusion"] = {
      {"rows", "true class (uninfected, parasitized)"},
      {"cols", "predicted class (uninfected, parasitized)"},
      {"counts",
       {{summary.result.confusion[0][0], summary.result.confusion[0][1]},
        {summary.result.confusion[1][0], summary.result.confusion[1][1]}}}};
  json["class_counts"] = counts_json(summary.class_counts);
  json["skipped"] = skipped_json(decoded.skipped);
  write_text(config.out, json.dump(2) + "\n");
  return summary;
}

void cmd_synth(const data::SynthConfig& config, const fs::path& out) {
  data::synth_generate(out, config);
}

}  // namespace cellgrade::harness
