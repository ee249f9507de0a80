// SPDX-License-Identifier: Apache-2.0
//
// Acceptance suite. Prints one PASS/FAIL/SKIP line per criterion and exits
// non-zero if any criterion fails. Criterion 7 needs the public malaria cell
// corpus; point CELLGRADE_NIH_ROOT at the directory holding Parasitized/ and
// Uninfected/ to run it.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "cellgrade/checkpoint.hpp"
#include "cellgrade/experiments.hpp"
#include "cellgrade/knn.hpp"
#include "cellgrade/nn/network.hpp"
#include "fixtures.hpp"
#include "oracles.hpp"

namespace {

using namespace cellgrade;
using T64 = Tensor<double>;
namespace fs = std::filesystem;

// Tolerances and budgets.
constexpr double kC1Budget = 1.0;
constexpr double kGradTol = 1e-4;
constexpr std::size_t kGradSamples = 20;
constexpr double kC2Budget = 60.0;
constexpr std::size_t kOracleInstances = 1000;
constexpr double kC3Budget = 30.0;
constexpr double kAxiomSlack = 1e-9;
constexpr double kReductionTol = 1e-9;
constexpr double kSoftmaxTol = 1e-6;
constexpr double kHistSumTol = 1e-6;
constexpr double kBnMeanTol = 1e-5;
constexpr double kBnVarTol = 1e-3;
constexpr double kDropoutMeanTol = 0.05;
constexpr double kC4Budget = 60.0;
constexpr std::size_t kDeskImages = 600;
constexpr std::uint64_t kDeskSeed = 2024;
constexpr std::size_t kDeskK = 10;
constexpr double kHistOverRawGap = 0.10;
constexpr double kCnnMinValAcc = 0.95;
constexpr std::size_t kCnnEpochs = 10;
constexpr double kC5Budget = 600.0;
constexpr double kC6Budget = 60.0;  // beyond the criterion 5 rerun
constexpr double kNihRawTarget = 0.5564, kNihHistTarget = 0.747, kNihTol = 0.04;
constexpr double kNihCnnFloor = 0.90;

struct Outcome {
  bool pass = true;
  std::string detail;
  void fail(const std::string& why) {
    if (pass) detail.clear();
    pass = false;
    if (!detail.empty()) detail += "; ";
    detail += why;
  }
};

std::string fmt(double v, int prec = 4) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*g", prec, v);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

int failures = 0;

void report(int id, const char* name, const Outcome& o, double secs, double budget) {
  Outcome out = o;
  if (out.pass && secs > budget) out.fail("runtime " + fmt(secs, 3) + " s over " + fmt(budget) + " s");
  if (!out.pass) ++failures;
  std::printf("[%s] criterion %d %s: %s (%.2f s)\n", out.pass ? "PASS" : "FAIL", id, name,
              out.detail.c_str(), secs);
  std::fflush(stdout);
}

// ---------------------------------------------------------------------------
// 1. Layer table reproduction.

Outcome full_network_exactness() {
  struct Row {
    std::string kind;
    Shape shape;
    std::size_t params;
  };
  const std::vector<Row> table = {
      {"conv2d", {31, 31, 64}, 1792},      {"batch_norm", {31, 31, 64}, 256},
      {"conv2d", {15, 15, 128}, 73856},    {"dropout", {15, 15, 128}, 0},
      {"conv2d", {13, 13, 256}, 295168},   {"max_pool", {6, 6, 256}, 0},
      {"conv2d", {4, 4, 1024}, 2360320},   {"dropout", {4, 4, 1024}, 0},
      {"conv2d", {2, 2, 512}, 4719104},    {"dropout", {2, 2, 512}, 0},
      {"flatten", {2048}, 0},              {"dense", {256}, 524544},
      {"dropout", {256}, 0},               {"dense", {2}, 514}};
  Outcome o;
  const auto spec = nn::build_fig11_network();
  const auto shapes = nn::infer_shapes(spec);
  const auto per_layer = nn::count_params_per_layer(spec);
  std::size_t row = 0;
  for (std::size_t i = 0; i < spec.layers.size(); ++i) {
    const auto kind = nn::layer_kind(spec.layers[i]);
    if (kind == "relu") continue;
    if (row >= table.size()) {
      o.fail("extra layer " + kind);
      break;
    }
    const auto& t = table[row++];
    if (kind != t.kind || shapes[i] != t.shape || per_layer[i].total != t.params) {
      o.fail("row " + std::to_string(row) + " got " + kind + " " + shape_string(shapes[i]) + " " +
             std::to_string(per_layer[i].total));
    }
  }
  if (row != table.size()) o.fail("matched " + std::to_string(row) + " of 14 rows");
  const auto c = nn::count_params(spec);
  if (c.total != 7975554 || c.trainable != 7975426 || c.non_trainable != 128) {
    o.fail("totals " + std::to_string(c.total) + "/" + std::to_string(c.trainable) + "/" +
           std::to_string(c.non_trainable));
  }
  if (o.pass) o.detail = "14 rows + totals 7975554/7975426/128 exact";
  return o;
}

// ---------------------------------------------------------------------------
// 2. Gradients against central differences, 64-bit.

T64 random_tensor(Shape shape, SeededPrng& rng, double lo = -1, double hi = 1) {
  T64 t(std::move(shape));
  for (auto& v : t.values()) v = rng.uniform(lo, hi);
  return t;
}

double dot(const T64& a, const T64& b) {
  double s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

// Max relative error over kGradSamples evenly spaced coordinates (or all).
double fd_error(const std::function<double(const T64&)>& f, const T64& x, const T64& analytic,
                std::size_t& checked) {
  const std::size_t n = x.size();
  const std::size_t step = std::max<std::size_t>(1, n / kGradSamples);
  std::vector<double> flat(x.values().begin(), x.values().end());
  const auto g = [&](const std::vector<double>& v) { return f(T64(x.shape(), v)); };
  double worst = 0;
  for (std::size_t i = 0; i < n; i += step) {
    worst = std::max(worst, oracle::rel_err(analytic[i], oracle::central_difference(g, flat, i, 1e-5)));
    ++checked;
  }
  return worst;
}

Outcome gradient_correctness() {
  Outcome o;
  SeededPrng rng(31);
  std::vector<std::pair<std::string, double>> errors;
  std::size_t min_checked = SIZE_MAX;
  const auto record = [&](const std::string& name, double err, std::size_t checked) {
    errors.emplace_back(name, err);
    min_checked = std::min(min_checked, checked);
    if (err > kGradTol) o.fail(name + " rel err " + fmt(err));
  };

  {
    const nn::Conv2dSpec spec{4, 3, 3, 2, 2};
    const auto x = random_tensor({2, 7, 7, 3}, rng);
    const auto k = random_tensor({3, 3, 3, 4}, rng);
    const auto b = random_tensor({4}, rng);
    const auto r = random_tensor(nn::conv2d_forward(x, k, b, spec).shape(), rng);
    const auto g = nn::conv2d_backward(x, k, r, spec);
    std::size_t n = 0;
    double e = fd_error([&](const T64& v) { return dot(nn::conv2d_forward(v, k, b, spec), r); }, x, g.input, n);
    e = std::max(e, fd_error([&](const T64& v) { return dot(nn::conv2d_forward(x, v, b, spec), r); }, k, g.kernel, n));
    e = std::max(e, fd_error([&](const T64& v) { return dot(nn::conv2d_forward(x, k, v, spec), r); }, b, g.bias, n));
    record("conv2d", e, n);
  }
  {
    const auto x = random_tensor({3, 4, 4, 2}, rng);
    const auto gamma = random_tensor({2}, rng, 0.5, 1.5);
    const auto beta = random_tensor({2}, rng);
    nn::BatchNormCache<double> cache;
    const auto r = random_tensor(nn::batch_norm_train(x, gamma, beta, 1e-3, cache).shape(), rng);
    const auto g = nn::batch_norm_backward(r, gamma, cache);
    const auto loss = [&](const T64& xv, const T64& gv, const T64& bv) {
      nn::BatchNormCache<double> c;
      return dot(nn::batch_norm_train(xv, gv, bv, 1e-3, c), r);
    };
    std::size_t n = 0;
    double e = fd_error([&](const T64& v) { return loss(v, gamma, beta); }, x, g.input, n);
    e = std::max(e, fd_error([&](const T64& v) { return loss(x, v, beta); }, gamma, g.gamma, n));
    e = std::max(e, fd_error([&](const T64& v) { return loss(x, gamma, v); }, beta, g.beta, n));
    record("batch_norm", e, n);
  }
  {
    const auto x = random_tensor({4, 9}, rng);
    const auto w = random_tensor({9, 5}, rng);
    const auto b = random_tensor({5}, rng);
    const auto r = random_tensor({4, 5}, rng);
    const auto g = nn::dense_backward(x, w, r);
    std::size_t n = 0;
    double e = fd_error([&](const T64& v) { return dot(nn::dense_forward(v, w, b), r); }, x, g.input, n);
    e = std::max(e, fd_error([&](const T64& v) { return dot(nn::dense_forward(x, v, b), r); }, w, g.weights, n));
    e = std::max(e, fd_error([&](const T64& v) { return dot(nn::dense_forward(x, w, v), r); }, b, g.bias, n));
    record("dense", e, n);
  }
  {
    const auto x = random_tensor({2, 6, 6, 3}, rng);
    std::vector<std::size_t> am;
    const auto r = random_tensor(nn::max_pool_forward(x, nn::MaxPoolSpec{}, am).shape(), rng);
    const auto g = nn::max_pool_backward(r, x.shape(), am);
    std::size_t n = 0;
    const double e = fd_error(
        [&](const T64& v) {
          std::vector<std::size_t> a2;
          return dot(nn::max_pool_forward(v, nn::MaxPoolSpec{}, a2), r);
        },
        x, g, n);
    record("max_pool", e, n);
  }
  {
    const nn::AvgPoolSpec spec{3, 3, 2, 2};
    const auto x = random_tensor({2, 7, 7, 2}, rng);
    const auto r = random_tensor(nn::avg_pool_forward(x, spec).shape(), rng);
    std::size_t n = 0;
    const double e = fd_error([&](const T64& v) { return dot(nn::avg_pool_forward(v, spec), r); }, x,
                              nn::avg_pool_backward(r, x.shape(), spec), n);
    record("avg_pool", e, n);
  }
  {
    auto x = random_tensor({40}, rng);
    for (auto& v : x.values()) {
      if (std::fabs(v) < 0.01) v = 0.5;
    }
    const auto r = random_tensor({40}, rng);
    std::size_t n = 0;
    const double e = fd_error([&](const T64& v) { return dot(nn::relu_forward(v), r); }, x,
                              nn::relu_backward(x, r), n);
    record("relu", e, n);
  }
  {
    const auto x = random_tensor({5, 8}, rng);
    SeededPrng drop(3);
    T64 mask;
    nn::dropout_forward(x, 0.5, nn::Mode::train, drop, mask);
    const auto r = random_tensor({5, 8}, rng);
    std::size_t n = 0;
    const double e = fd_error(
        [&](const T64& v) {
          SeededPrng unused(0);
          T64 m2;
          return dot(nn::dropout_forward(v, 0.5, nn::Mode::train, unused, m2, &mask), r);
        },
        x, nn::dropout_backward(r, mask), n);
    record("dropout", e, n);
  }
  {
    const auto logits = random_tensor({12, 2}, rng, -3, 3);
    std::vector<ClassId> labels(12);
    for (auto& l : labels) l = static_cast<ClassId>(rng.below(2));
    std::size_t n = 0;
    const double e =
        fd_error([&](const T64& v) { return nn::softmax_cross_entropy(v, labels).loss; }, logits,
                 nn::softmax_cross_entropy(logits, labels).logit_grad, n);
    record("softmax_xent", e, n);
  }
  {
    const auto spec = nn::build_reduced_network();
    const auto params = nn::init_params<double>(spec, 32);
    nn::TensorDataset<double> batch;
    batch.images = T64({4, 32, 32, 3});
    for (std::size_t i = 0; i < 4; ++i) {
      const auto t = imaging::image_to_tensor(data::synth_cell(32, i % 2, 100 + i), 32);
      std::copy(t.values().begin(), t.values().end(), batch.images.data() + i * t.size());
      batch.labels.push_back(static_cast<ClassId>(i % 2));
    }
    nn::GradCheckOptions opts;
    opts.samples_per_tensor = kGradSamples;
    opts.h = 1e-4;
    opts.seed = 33;
    const auto rep = nn::gradient_check(spec, params, batch.images, batch.labels, opts);
    std::map<std::string, std::size_t> per_tensor;
    for (const auto& e : rep.entries) ++per_tensor[e.param];
    for (const auto& p : params.params) {
      if (!p.trainable) continue;
      const std::size_t want = std::min(p.value.size(), kGradSamples);
      if (per_tensor[p.name] < want) o.fail(p.name + " sampled " + std::to_string(per_tensor[p.name]) + " times");
    }
    errors.emplace_back("reduced-net", rep.max_rel_error);
    if (rep.max_rel_error > kGradTol) o.fail("reduced net rel err " + fmt(rep.max_rel_error));
  }
  if (min_checked < kGradSamples) o.fail("a layer had only " + std::to_string(min_checked) + " samples");
  if (o.pass) {
    double worst = 0;
    std::string at;
    for (const auto& [name, e] : errors) {
      if (e >= worst) {
        worst = e;
        at = name;
      }
    }
    o.detail = std::to_string(errors.size()) + " checks, max rel err " + fmt(worst) + " (" + at +
               ") <= " + fmt(kGradTol);
  }
  return o;
}

// ---------------------------------------------------------------------------
// 3. kNN against an exhaustive sort + counting oracle.

Outcome knn_oracle_equivalence() {
  Outcome o;
  SeededPrng rng(41);
  using OracleDist = double (*)(const std::vector<double>&, const std::vector<double>&);
  const std::vector<std::pair<knn::DistanceMetric, OracleDist>> metrics = {
      {knn::DistanceMetric::euclidean(), oracle::l2},
      {knn::DistanceMetric::manhattan(), oracle::l1},
      {knn::DistanceMetric::hamming(), oracle::mismatches},
      {knn::DistanceMetric::minkowski(3), oracle::lp3}};
  std::size_t agree = 0;
  for (std::size_t t = 0; t < kOracleInstances; ++t) {
    const auto& [metric, odist] = metrics[t % metrics.size()];
    const std::size_t n = 1 + rng.below(100), d = 1 + rng.below(16), k = 1 + rng.below(n);
    const bool binary = metric.kind == knn::DistanceMetric::Kind::hamming;
    const auto draw = [&] {
      std::vector<double> v(d);
      for (auto& x : v) x = binary ? static_cast<double>(rng.below(2)) : rng.uniform(-1, 1);
      return v;
    };
    std::vector<std::vector<double>> train;
    knn::FeatureMatrix fm(d);
    std::vector<ClassId> labels;
    for (std::size_t i = 0; i < n; ++i) {
      train.push_back(draw());
      fm.append(train.back());
      labels.push_back(static_cast<ClassId>(rng.below(2)));
    }
    const auto query = draw();
    const knn::KnnModel model(fm, labels, k, metric);
    const auto got = model.k_nearest(query);
    const auto want = oracle::brute_force_knn(train, query, k, odist);
    std::vector<int> want_labels;
    bool same = got.size() == k;
    for (std::size_t i = 0; same && i < k; ++i) {
      same = got[i].index == want[i];
      want_labels.push_back(labels[want[i]]);
    }
    same = same && knn::predict(got) == oracle::vote(want_labels);
    if (same) ++agree;
  }
  if (agree != kOracleInstances) {
    o.fail(std::to_string(kOracleInstances - agree) + " of " + std::to_string(kOracleInstances) +
           " instances disagree");
  } else {
    o.detail = std::to_string(agree) + "/" + std::to_string(kOracleInstances) +
               " instances identical (4 metrics, N<=100, D<=16)";
  }
  return o;
}

// ---------------------------------------------------------------------------
// 4. Invariants.

Outcome properties() {
  Outcome o;
  SeededPrng rng(51);
  std::size_t checks = 0;
  const auto check = [&](bool ok, const std::string& what) {
    ++checks;
    if (!ok) o.fail(what);
  };
  const auto rvec = [&](std::size_t d) {
    std::vector<double> v(d);
    for (auto& x : v) x = rng.uniform(-1, 1);
    return v;
  };

  // Metric axioms and reductions.
  const std::vector<knn::DistanceMetric> metrics = {
      knn::DistanceMetric::euclidean(), knn::DistanceMetric::manhattan(),
      knn::DistanceMetric::minkowski(1.5), knn::DistanceMetric::minkowski(4)};
  bool axioms = true, reductions = true;
  for (int t = 0; t < 500; ++t) {
    const std::size_t d = 1 + rng.below(32);
    const auto a = rvec(d), b = rvec(d), c = rvec(d);
    for (const auto& m : metrics) {
      const double ab = knn::distance(m, a, b);
      axioms = axioms && knn::distance(m, a, a) == 0.0 && ab == knn::distance(m, b, a) &&
               knn::distance(m, a, c) <= ab + knn::distance(m, b, c) + kAxiomSlack;
    }
    reductions =
        reductions &&
        oracle::rel_err(knn::distance(knn::DistanceMetric::minkowski(1), a, b),
                        knn::distance(knn::DistanceMetric::manhattan(), a, b)) <= kReductionTol &&
        oracle::rel_err(knn::distance(knn::DistanceMetric::minkowski(2), a, b),
                        knn::distance(knn::DistanceMetric::euclidean(), a, b)) <= kReductionTol;
  }
  check(axioms, "metric axioms");
  check(reductions, "minkowski reductions");

  // Softmax normalisation and shift invariance.
  {
    const auto logits = random_tensor({50, 2}, rng, -8, 8);
    std::vector<ClassId> labels(50);
    for (auto& l : labels) l = static_cast<ClassId>(rng.below(2));
    auto shifted = logits;
    for (auto& v : shifted.values()) v += 100.0;
    const auto a = nn::softmax_cross_entropy(logits, labels);
    const auto b = nn::softmax_cross_entropy(shifted, labels);
    bool sums = true, shift = std::fabs(a.loss - b.loss) <= kSoftmaxTol;
    for (std::size_t r = 0; r < 50; ++r) {
      sums = sums && std::fabs(a.probabilities[2 * r] + a.probabilities[2 * r + 1] - 1) <= kSoftmaxTol;
      shift = shift && std::fabs(a.probabilities[2 * r] - b.probabilities[2 * r]) <= kSoftmaxTol;
    }
    check(sums, "softmax rows sum to 1");
    check(shift, "softmax shift invariance");
  }

  // Histogram normalisation and pixel-permutation invariance.
  {
    bool norm = true, perm = true;
    for (int t = 0; t < 20; ++t) {
      imaging::PixelImage img(1 + rng.below(40), 1 + rng.below(40));
      for (auto& v : img.values) v = rng.uniform();
      const auto f = imaging::extract_histogram_features(img);
      double sum = 0;
      for (double v : f.values) {
        norm = norm && v >= 0;
        sum += v;
      }
      norm = norm && std::fabs(sum - 1) <= kHistSumTol;
      std::vector<std::size_t> order(img.pixel_count());
      std::iota(order.begin(), order.end(), std::size_t{0});
      rng.shuffle(std::span(order));
      imaging::PixelImage shuffled(img.width, img.height);
      for (std::size_t p = 0; p < order.size(); ++p)
        for (std::size_t c = 0; c < 3; ++c) shuffled.values[3 * p + c] = img.values[3 * order[p] + c];
      perm = perm && imaging::extract_histogram_features(shuffled).values == f.values;
    }
    check(norm, "histogram normalisation");
    check(perm, "histogram permutation invariance");
  }

  // Batch norm statistics.
  {
    const auto x = random_tensor({8, 5, 5, 4}, rng, -3, 7);
    nn::BatchNormCache<double> cache;
    const auto y = nn::batch_norm_train(x, T64({4}, 1.0), T64({4}, 0.0), 1e-3, cache);
    bool ok = true;
    const std::size_t rows = y.size() / 4;
    for (std::size_t c = 0; c < 4; ++c) {
      double mean = 0, var = 0;
      for (std::size_t i = 0; i < rows; ++i) mean += y[i * 4 + c];
      mean /= rows;
      for (std::size_t i = 0; i < rows; ++i) var += (y[i * 4 + c] - mean) * (y[i * 4 + c] - mean);
      var /= rows;
      ok = ok && std::fabs(mean) < kBnMeanTol && std::fabs(var - 1) <= kBnVarTol;
    }
    check(ok, "batch norm statistics");
    const auto e1 = nn::batch_norm_eval(x, T64({4}, 1.5), T64({4}, 0.2), T64({4}, 0.3), T64({4}, 2.0), 1e-3);
    const auto e2 = nn::batch_norm_eval(x, T64({4}, 1.5), T64({4}, 0.2), T64({4}, 0.3), T64({4}, 2.0), 1e-3);
    check(e1 == e2, "batch norm eval determinism");
  }

  // Dropout.
  {
    const auto x = random_tensor({100, 10}, rng);
    T64 mask;
    check(nn::dropout_forward(x, 0.5, nn::Mode::eval, rng, mask) == x, "dropout eval identity");
    const T64 ones({10000}, 1.0);
    const auto y = nn::dropout_forward(ones, 0.5, nn::Mode::train, rng, mask);
    double mean = 0;
    for (double v : y.values()) mean += v;
    mean /= 10000;
    check(std::fabs(mean - 1) <= kDropoutMeanTol, "dropout mean " + fmt(mean));
  }

  // kNN scaling invariance.
  {
    bool ok = true;
    for (const auto& m : {knn::DistanceMetric::euclidean(), knn::DistanceMetric::manhattan(),
                          knn::DistanceMetric::minkowski(3)}) {
      knn::FeatureMatrix fm(6);
      std::vector<ClassId> labels;
      for (int i = 0; i < 50; ++i) {
        fm.append(rvec(6));
        labels.push_back(static_cast<ClassId>(rng.below(2)));
      }
      for (double s : {1e-3, 0.5, 7.0, 1e3}) {
        const knn::KnnModel base(fm, labels, 7, m), scaled(fm.scaled(s), labels, 7, m);
        for (int q = 0; q < 10; ++q) {
          auto query = rvec(6), qs = query;
          for (auto& v : qs) v *= s;
          const auto a = base.k_nearest(query), b = scaled.k_nearest(qs);
          for (std::size_t i = 0; i < a.size(); ++i) ok = ok && a[i].index == b[i].index && a[i].label == b[i].label;
          ok = ok && knn::predict(a) == knn::predict(b);
        }
      }
    }
    check(ok, "kNN scaling invariance");
  }
  if (o.pass) o.detail = std::to_string(checks) + " property groups hold";
  return o;
}

// ---------------------------------------------------------------------------
// 5 and 6. Desk-scale synthetic runs.

struct DeskRun {
  double hist = 0, raw = 0, cnn_val = 0;
};

DeskRun run_desk(const fs::path& root) {
  data::SynthConfig synth;
  synth.n = kDeskImages;
  synth.seed = kDeskSeed;
  harness::cmd_synth(synth, root / "data");

  DeskRun out;
  for (auto kind : {imaging::FeatureKind::hsv_histogram, imaging::FeatureKind::raw_pixel}) {
    harness::KnnConfig knn;
    knn.data = root / "data";
    knn.features = kind;
    knn.k_values = {kDeskK};
    knn.seed = kDeskSeed;
    knn.out_prefix = root / ("knn_" + std::string(imaging::to_string(kind)));
    const auto s = harness::cmd_knn(knn);
    (kind == imaging::FeatureKind::raw_pixel ? out.raw : out.hist) = s.reports[0].mean_accuracy;
  }

  harness::CnnTrainConfig cnn;
  cnn.data = root / "data";
  cnn.reduced = true;
  cnn.epochs = kCnnEpochs;
  cnn.seed = kDeskSeed;
  cnn.checkpoint = root / "cnn.ckpt";
  cnn.out_prefix = root / "cnn";
  out.cnn_val = harness::cmd_cnn_train(cnn).epochs.back().val_acc;
  return out;
}

Outcome desk_ordering(const DeskRun& r) {
  Outcome o;
  const double gap = r.hist - r.raw;
  if (gap < kHistOverRawGap) o.fail("hist - raw = " + fmt(gap) + " < " + fmt(kHistOverRawGap));
  if (r.cnn_val < kCnnMinValAcc) o.fail("CNN val " + fmt(r.cnn_val) + " < " + fmt(kCnnMinValAcc));
  if (!(r.cnn_val > r.hist)) o.fail("CNN val " + fmt(r.cnn_val) + " not above hist " + fmt(r.hist));
  if (o.pass) {
    o.detail = "CNN val " + fmt(r.cnn_val) + " > kNN hist " + fmt(r.hist) + " > kNN raw " +
               fmt(r.raw) + " (gap " + fmt(gap) + ")";
  }
  return o;
}

Outcome determinism(const fs::path& root, const fs::path& keep) {
  Outcome o;
  const std::vector<std::string> outputs = {"knn_hist.csv", "knn_raw.csv", "cnn.csv", "cnn.ckpt"};
  for (const auto& f : outputs) fs::copy_file(root / f, keep / f, fs::copy_options::overwrite_existing);
  run_desk(root);
  for (const auto& f : outputs) {
    if (testing::read_bytes(root / f) != testing::read_bytes(keep / f)) o.fail(f + " differs");
  }

  const auto spec = nn::build_reduced_network();
  const auto loaded = checkpoint::load_checkpoint(root / "cnn.ckpt", spec);
  checkpoint::save_checkpoint(loaded.params, spec, keep / "resaved.ckpt");
  const auto reloaded = checkpoint::load_checkpoint(keep / "resaved.ckpt", spec);
  const auto decoded = data::decode_dataset(data::load_dataset(root / "data"));
  const auto all = harness::to_tensor_dataset(decoded, 32);
  SeededPrng a(0), b(0);
  const auto l1 = nn::network_forward(spec, loaded.params, all.images, nn::Mode::eval, a).logits;
  const auto l2 = nn::network_forward(spec, reloaded.params, all.images, nn::Mode::eval, b).logits;
  if (!(l1 == l2)) o.fail("logits differ after save/load");
  if (testing::read_bytes(root / "cnn.ckpt") != testing::read_bytes(keep / "resaved.ckpt")) {
    o.fail("re-saved checkpoint differs");
  }
  if (o.pass) {
    o.detail = "3 CSVs + checkpoint byte-identical on rerun; " + std::to_string(l1.dim(0)) +
               " eval logits identical after save/load";
  }
  return o;
}

// ---------------------------------------------------------------------------
// 7. Full corpus.

Outcome full_corpus(const fs::path& corpus, const fs::path& work) {
  Outcome o;
  double raw = 0, hist = 0;
  for (auto kind : {imaging::FeatureKind::raw_pixel, imaging::FeatureKind::hsv_histogram}) {
    harness::KnnConfig knn;
    knn.data = corpus;
    knn.features = kind;
    knn.k_values = {kDeskK};
    knn.out_prefix = work / ("nih_knn_" + std::string(imaging::to_string(kind)));
    const auto s = harness::cmd_knn(knn, &std::cerr);
    (kind == imaging::FeatureKind::raw_pixel ? raw : hist) = s.reports[0].mean_accuracy;
  }
  if (std::fabs(raw - kNihRawTarget) > kNihTol) o.fail("kNN raw " + fmt(raw) + " vs " + fmt(kNihRawTarget));
  if (std::fabs(hist - kNihHistTarget) > kNihTol) o.fail("kNN hist " + fmt(hist) + " vs " + fmt(kNihHistTarget));

  harness::CnnTrainConfig cnn;
  cnn.data = corpus;
  cnn.checkpoint = work / "nih_full.ckpt";
  cnn.out_prefix = work / "nih_full";
  const double val = harness::cmd_cnn_train(cnn, &std::cerr).epochs.back().val_acc;
  if (val < kNihCnnFloor) o.fail("CNN val " + fmt(val) + " < " + fmt(kNihCnnFloor));
  if (o.pass) o.detail = "kNN raw " + fmt(raw) + ", hist " + fmt(hist) + ", CNN val " + fmt(val);
  return o;
}

template <typename F>
void timed(int id, const char* name, double budget, F&& body) {
  const auto t0 = std::chrono::steady_clock::now();
  Outcome o;
  try {
    o = body();
  } catch (const std::exception& e) {
    o.fail(std::string("exception: ") + e.what());
  }
  report(id, name, o, seconds_since(t0), budget);
}

}  // namespace

int main() {
  testing::TempDir work("acceptance");
  const fs::path desk = work / "desk", keep = work / "first";
  fs::create_directories(keep);

  timed(1, "full-network-exactness", kC1Budget, full_network_exactness);
  timed(2, "gradient-correctness", kC2Budget, gradient_correctness);
  timed(3, "knn-oracle-equivalence", kC3Budget, knn_oracle_equivalence);
  timed(4, "metric-feature-properties", kC4Budget, properties);
  timed(5, "desk-scale-ordering", kC5Budget, [&] { return desk_ordering(run_desk(desk)); });
  // The budget covers the rerun of criterion 5 plus the round-trip checks.
  timed(6, "determinism", kC5Budget + kC6Budget, [&] { return determinism(desk, keep); });

  if (const char* corpus = std::getenv("CELLGRADE_NIH_ROOT"); corpus && *corpus) {
    timed(7, "full-corpus", 1e9, [&] { return full_corpus(corpus, work.path()); });
  } else {
    std::printf("[SKIP] criterion 7 full-corpus: set CELLGRADE_NIH_ROOT to the corpus root\n");
  }

  std::printf("%s: %d criterion(s) failed\n", failures ? "FAILED" : "OK", failures);
  return failures ? 1 : 0;
}
