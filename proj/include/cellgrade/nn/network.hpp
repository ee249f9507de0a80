// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "cellgrade/labels.hpp"
#include "cellgrade/nn/ops.hpp"
#include "cellgrade/nn/spec.hpp"
#include "cellgrade/prng.hpp"
#include "cellgrade/tensor.hpp"

namespace cellgrade::nn {

enum class ParamRole { kernel, bias, gamma, beta, moving_mean, moving_var };

const char* role_name(ParamRole role);

// One named tensor of network state. Trainable tensors carry Adam moments.
template <typename T>
struct Param {
  std::string name;  // e.g. "03_conv2d/kernel"
  std::size_t layer = 0;
  ParamRole role = ParamRole::kernel;
  bool trainable = true;
  Tensor<T> value;
  Tensor<T> adam_m;
  Tensor<T> adam_v;
};

template <typename T>
struct ParamState {
  std::vector<Param<T>> params;
  std::uint64_t step = 0;  // Adam steps taken

  // Index into params for (layer, role); nullopt if the layer has none.
  std::optional<std::size_t> find(std::size_t layer, ParamRole role) const;
  const Tensor<T>& get(std::size_t layer, ParamRole role) const;
  Tensor<T>& get(std::size_t layer, ParamRole role);

  std::size_t trainable_count() const;
  std::size_t non_trainable_count() const;

  template <typename U>
  ParamState<U> cast() const;
};

// Glorot-uniform kernels, zero biases, BN gamma 1 / beta 0, moving mean 0 /
// var 1. All draws come from SeededPrng(seed) in layer order.
template <typename T>
ParamState<T> init_params(const NetworkSpec& spec, std::uint64_t seed);

// Everything backward needs, one entry per layer.
template <typename T>
struct LayerCache {
  Tensor<T> input;
  Tensor<T> mask;                   // dropout
  std::vector<std::size_t> argmax;  // max_pool
  BatchNormCache<T> bn;             // batch_norm, train mode
};

template <typename T>
struct ForwardCache {
  Mode mode = Mode::eval;
  std::vector<LayerCache<T>> layers;
};

template <typename T>
struct ForwardResult {
  Tensor<T> logits;
  ForwardCache<T> cache;
};

// Runs the layers in order on a [N, H, W, C] batch. Does not modify params;
// BN batch statistics land in the cache and are folded into the moving
// averages by apply_batch_statistics. When `reuse_masks` is given, dropout
// layers reuse its masks instead of drawing from rng.
template <typename T>
ForwardResult<T> network_forward(const NetworkSpec& spec, const ParamState<T>& params,
                                 const Tensor<T>& batch, Mode mode, SeededPrng& rng,
                                 const ForwardCache<T>* reuse_masks = nullptr);

template <typename T>
void apply_batch_statistics(const NetworkSpec& spec, ParamState<T>& params,
                            const ForwardCache<T>& cache);

// Gradient per entry of params.params; empty tensors for non-trainable ones.
template <typename T>
using Gradients = std::vector<Tensor<T>>;

template <typename T>
Gradients<T> network_backward(const NetworkSpec& spec, const ParamState<T>& params,
                              const ForwardCache<T>& cache, const Tensor<T>& logit_grad);

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-7;
};

// Bias-corrected Adam on trainable tensors; moving BN statistics are left
// alone. Increments params.step once.
template <typename T>
void adam_step(ParamState<T>& params, const Gradients<T>& grads, const AdamConfig& config);

// Images stacked as [N, H, W, C] with one label each.
template <typename T>
struct TensorDataset {
  Tensor<T> images;
  std::vector<ClassId> labels;

  std::size_t size() const { return labels.size(); }
  Tensor<T> gather(std::span<const std::size_t> indices) const;
  std::vector<ClassId> gather_labels(std::span<const std::size_t> indices) const;
};

struct EpochStats {
  double loss = 0.0;
  double accuracy = 0.0;
};

// One pass over a seeded shuffle: forward (train) -> loss -> backward ->
// adam_step per batch. Loss and accuracy are averaged over all samples.
template <typename T>
EpochStats train_epoch(const NetworkSpec& spec, ParamState<T>& params,
                       const TensorDataset<T>& data, std::size_t batch_size,
                       const AdamConfig& config, SeededPrng& rng);

struct EvalResult {
  double loss = 0.0;
  double accuracy = 0.0;
  std::size_t correct = 0;
  // confusion[true][predicted]
  std::array<std::array<std::size_t, kNumClasses>, kNumClasses> confusion{};
};

// Eval-mode pass in fixed-size chunks.
template <typename T>
EvalResult evaluate(const NetworkSpec& spec, const ParamState<T>& params,
                    const TensorDataset<T>& data, std::size_t batch_size = 64);

struct GradCheckEntry {
  std::string param;
  std::size_t index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  double rel_error = 0.0;
  double h = 0.0;  // step actually used
  bool kink_crossed = false;
};

// An entry whose +/-h passes flip a ReLU or change a max-pool winner measures
// the kink, not the derivative, so it is retried once at h * kKinkRetryScale.
// Entries that still cross are flagged and counted in kink_crossings; every
// entry counts towards max_rel_error.
inline constexpr double kKinkRetryScale = 1e-2;

struct GradCheckReport {
  std::vector<GradCheckEntry> entries;
  double max_rel_error = 0.0;
  std::size_t kink_crossings = 0;
};

// |a - n| / max(|a|, |n|, floor). The floor keeps parameters whose true
// gradient is ~0 from reporting round-off as relative error.
inline constexpr double kGradCheckFloor = 1e-6;
double relative_error(double analytic, double numeric);

struct GradCheckOptions {
  std::size_t samples_per_tensor = 20;
  double h = 1e-4;
  std::uint64_t seed = 0;
  // Applied to the analytic gradients before comparison (fault injection).
  std::function<void(const ParamState<double>&, Gradients<double>&)> tamper;
};

// Central differences in 64-bit on sampled entries of every trainable tensor,
// against network_backward. One train-mode forward draws the dropout masks;
// all +/-h evaluations reuse them and never touch the moving BN statistics.
GradCheckReport gradient_check(const NetworkSpec& spec, const ParamState<double>& params,
                               const Tensor<double>& batch,
                               std::span<const ClassId> labels,
                               const GradCheckOptions& options = {});

}  // namespace cellgrade::nn
