// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <variant>
#include <vector>

#include "cellgrade/tensor.hpp"

namespace cellgrade::nn {

// Valid padding only.
struct Conv2dSpec {
  std::size_t filters;
  std::size_t kernel_h = 3, kernel_w = 3;
  std::size_t stride_h = 1, stride_w = 1;
};

struct BatchNormSpec {
  std::size_t channels;
  double epsilon = 1e-3;
  double momentum = 0.99;
};

struct DropoutSpec {
  double rate;
};

struct MaxPoolSpec {
  std::size_t pool_h = 2, pool_w = 2;
  std::size_t stride_h = 2, stride_w = 2;
};

struct AvgPoolSpec {
  std::size_t pool_h = 2, pool_w = 2;
  std::size_t stride_h = 2, stride_w = 2;
};

struct FlattenSpec {};

struct DenseSpec {
  std::size_t units;
};

struct ReluSpec {};

using LayerSpec = std::variant<Conv2dSpec, BatchNormSpec, DropoutSpec, MaxPoolSpec,
                               AvgPoolSpec, FlattenSpec, DenseSpec, ReluSpec>;

std::string layer_kind(const LayerSpec& layer);

struct NetworkSpec {
  Shape input_shape;  // [H, W, C], no batch axis
  std::vector<LayerSpec> layers;

  // Canonical one-line description; two specs are the same network iff their
  // descriptions match.
  std::string describe() const;
  std::uint64_t digest() const;
};

// Per-layer output shapes without the batch axis. Throws ShapeError naming the
// layer when a window does not fit or a layer gets the wrong rank.
std::vector<Shape> infer_shapes(const NetworkSpec& spec);

struct ParamCount {
  std::size_t total = 0;
  std::size_t trainable = 0;
  std::size_t non_trainable = 0;

  bool operator==(const ParamCount&) const = default;
};

ParamCount count_params(const NetworkSpec& spec);
std::vector<ParamCount> count_params_per_layer(const NetworkSpec& spec);

struct DropoutRates {
  double r1 = 0.25, r2 = 0.25, r3 = 0.25, r4 = 0.5;
};

// 64x64x3 input; 3x3 kernels with strides 2,2,1,1,1; BN after the first conv;
// 2x2/2 max pool; ReLU after every conv and the hidden dense layer.
NetworkSpec build_fig11_network(const DropoutRates& rates = {});

// Same layer types with narrow widths on a 32x32x3 input.
NetworkSpec build_reduced_network(const DropoutRates& rates = {});

}  // namespace cellgrade::nn
