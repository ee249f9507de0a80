// SPDX-License-Identifier: Apache-2.0
#include "cellgrade/nn/spec.hpp"

#include <sstream>

#include "cellgrade/errors.hpp"
#include "cellgrade/prng.hpp"

namespace cellgrade::nn {

namespace {

template <class... Ts>
struct Overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
Overloaded(Ts...) -> Overloaded<Ts...>;

std::size_t window_out(std::size_t in, std::size_t window, std::size_t stride,
                       std::size_t layer, const char* what) {
  if (window == 0 || stride == 0) {
    throw ShapeError("layer " + std::to_string(layer) + " (" + what +
                     "): window and stride must be >= 1");
  }
  if (in < window) {
    throw ShapeError("layer " + std::to_string(layer) + " (" + what + "): window " +
                     std::to_string(window) + " larger than input extent " +
                     std::to_string(in));
  }
  return (in - window) / stride + 1;
}

void require_rank(const Shape& in, std::size_t rank, std::size_t layer,
                  const char* what) {
  if (in.size() != rank) {
    throw ShapeError("layer " + std::to_string(layer) + " (" + what + ") expects rank " +
                     std::to_string(rank) + " input, got " + shape_string(in));
  }
}

}  // namespace

std::string layer_kind(const LayerSpec& layer) {
  return std::visit(Overloaded{
                        [](const Conv2dSpec&) { return "conv2d"; },
                        [](const BatchNormSpec&) { return "batch_norm"; },
                        [](const DropoutSpec&) { return "dropout"; },
                        [](const MaxPoolSpec&) { return "max_pool"; },
                        [](const AvgPoolSpec&) { return "avg_pool"; },
                        [](const FlattenSpec&) { return "flatten"; },
                        [](const DenseSpec&) { return "dense"; },
                        [](const ReluSpec&) { return "relu"; },
                    },
                    layer);
}

std::string NetworkSpec::describe() const {
  std::ostringstream os;
  os.precision(17);
  os << "input" << shape_string(input_shape);
  for (const auto& layer : layers) {
    os << '|';
    std::visit(Overloaded{
                   [&](const Conv2dSpec& s) {
                     os << "conv2d(" << s.filters << ',' << s.kernel_h << 'x' << s.kernel_w
                        << ",s" << s.stride_h << 'x' << s.stride_w << ')';
                   },
                   [&](const BatchNormSpec& s) {
                     os << "batch_norm(" << s.channels << ",eps=" << s.epsilon
                        << ",mom=" << s.momentum << ')';
                   },
                   [&](const DropoutSpec& s) { os << "dropout(" << s.rate << ')'; },
                   [&](const MaxPoolSpec& s) {
                     os << "max_pool(" << s.pool_h << 'x' << s.pool_w << ",s" << s.stride_h
                        << 'x' << s.stride_w << ')';
                   },
                   [&](const AvgPoolSpec& s) {
                     os << "avg_pool(" << s.pool_h << 'x' << s.pool_w << ",s" << s.stride_h
                        << 'x' << s.stride_w << ')';
                   },
                   [&](const FlattenSpec&) { os << "flatten"; },
                   [&](const DenseSpec& s) { os << "dense(" << s.units << ')'; },
                   [&](const ReluSpec&) { os << "relu"; },
               },
               layer);
  }
  return os.str();
}

std::uint64_t NetworkSpec::digest() const {
  const std::string text = describe();
  Fnv1a64 h;
  h.update(text.data(), text.size());
  return h.digest();
}

std::vector<Shape> infer_shapes(const NetworkSpec& spec) {
  if (spec.input_shape.empty()) throw ShapeError("network has no input shape");
  for (auto d : spec.input_shape) {
    if (d == 0) throw ShapeError("input shape " + shape_string(spec.input_shape) +
                                 " has a zero extent");
  }
  std::vector<Shape> shapes;
  Shape cur = spec.input_shape;
  for (std::size_t i = 0; i < spec.layers.size(); ++i) {
    cur = std::visit(
        Overloaded{
            [&](const Conv2dSpec& s) -> Shape {
              require_rank(cur, 3, i, "conv2d");
              if (s.filters == 0) throw ShapeError("layer " + std::to_string(i) +
                                                   " (conv2d): zero filters");
              return {window_out(cur[0], s.kernel_h, s.stride_h, i, "conv2d"),
                      window_out(cur[1], s.kernel_w, s.stride_w, i, "conv2d"),
                      s.filters};
            },
            [&](const BatchNormSpec& s) -> Shape {
              if (cur.empty() || cur.back() != s.channels) {
                throw ShapeError("layer " + std::to_string(i) + " (batch_norm): " +
                                 std::to_string(s.channels) +
                                 " channels configured, input is " + shape_string(cur));
              }
              return cur;
            },
            [&](const DropoutSpec& s) -> Shape {
              if (!(s.rate >= 0.0 && s.rate < 1.0)) {
                throw ConfigError("layer " + std::to_string(i) +
                                  " (dropout): rate must lie in [0, 1)");
              }
              return cur;
            },
            [&](const MaxPoolSpec& s) -> Shape {
              require_rank(cur, 3, i, "max_pool");
              return {window_out(cur[0], s.pool_h, s.stride_h, i, "max_pool"),
                      window_out(cur[1], s.pool_w, s.stride_w, i, "max_pool"), cur[2]};
            },
            [&](const AvgPoolSpec& s) -> Shape {
              require_rank(cur, 3, i, "avg_pool");
              return {window_out(cur[0], s.pool_h, s.stride_h, i, "avg_pool"),
                      window_out(cur[1], s.pool_w, s.stride_w, i, "avg_pool"), cur[2]};
            },
            [&](const FlattenSpec&) -> Shape { return {shape_size(cur)}; },
            [&](const DenseSpec& s) -> Shape {
              require_rank(cur, 1, i, "dense");
              if (s.units == 0) throw ShapeError("layer " + std::to_string(i) +
                                                 " (dense): zero units");
              return {s.units};
            },
            [&](const ReluSpec&) -> Shape { return cur; },
        },
        spec.layers[i]);
    shapes.push_back(cur);
  }
  return shapes;
}

std::vector<ParamCount> count_params_per_layer(const NetworkSpec& spec) {
  const auto shapes = infer_shapes(spec);
  std::vector<ParamCount> out;
  for (std::size_t i = 0; i < spec.layers.size(); ++i) {
    const Shape& in = i == 0 ? spec.input_shape : shapes[i - 1];
    ParamCount c;
    if (const auto* conv = std::get_if<Conv2dSpec>(&spec.layers[i])) {
      c.trainable = conv->filters * (conv->kernel_h * conv->kernel_w * in[2] + 1);
    } else if (const auto* bn = std::get_if<BatchNormSpec>(&spec.layers[i])) {
      c.trainable = 2 * bn->channels;
      c.non_trainable = 2 * bn->channels;
    } else if (const auto* dense = std::get_if<DenseSpec>(&spec.layers[i])) {
      c.trainable = in[0] * dense->units + dense->units;
    }
    c.total = c.trainable + c.non_trainable;
    out.push_back(c);
  }
  return out;
}

ParamCount count_params(const NetworkSpec& spec) {
  ParamCount total;
  for (const auto& c : count_params_per_layer(spec)) {
    total.total += c.total;
    total.trainable += c.trainable;
    total.non_trainable += c.non_trainable;
  }
  return total;
}

NetworkSpec build_fig11_network(const DropoutRates& rates) {
  return {{64, 64, 3},
          {
              Conv2dSpec{64, 3, 3, 2, 2},
              BatchNormSpec{64},
              ReluSpec{},
              Conv2dSpec{128, 3, 3, 2, 2},
              ReluSpec{},
              DropoutSpec{rates.r1},
              Conv2dSpec{256, 3, 3, 1, 1},
              ReluSpec{},
              MaxPoolSpec{2, 2, 2, 2},
              Conv2dSpec{1024, 3, 3, 1, 1},
              ReluSpec{},
              DropoutSpec{rates.r2},
              Conv2dSpec{512, 3, 3, 1, 1},
              ReluSpec{},
              DropoutSpec{rates.r3},
              FlattenSpec{},
              DenseSpec{256},
              ReluSpec{},
              DropoutSpec{rates.r4},
              DenseSpec{2},
          }};
}

NetworkSpec build_reduced_network(const DropoutRates& rates) {
  // 32 -> 15 -> 7 -> 5 -> pool 2 -> flatten 256
  return {{32, 32, 3},
          {
              Conv2dSpec{16, 3, 3, 2, 2},
              BatchNormSpec{16, 1e-3, 0.9},
              ReluSpec{},
              Conv2dSpec{32, 3, 3, 2, 2},
              ReluSpec{},
              DropoutSpec{rates.r1},
              Conv2dSpec{64, 3, 3, 1, 1},
              ReluSpec{},
              MaxPoolSpec{2, 2, 2, 2},
              FlattenSpec{},
              DenseSpec{64},
              ReluSpec{},
              DropoutSpec{rates.r4},
              DenseSpec{2},
          }};
}

}  // namespace cellgrade::nn
