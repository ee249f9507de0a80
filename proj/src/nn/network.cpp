// SPDX-License-Identifier: Apache-2.0
#include "cellgrade/nn/network.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <set>
#include <variant>

#include "cellgrade/data.hpp"
#include "cellgrade/errors.hpp"

namespace cellgrade::nn {

const char* role_name(ParamRole role) {
  switch (role) {
    case ParamRole::kernel: return "kernel";
    case ParamRole::bias: return "bias";
    case ParamRole::gamma: return "gamma";
    case ParamRole::beta: return "beta";
    case ParamRole::moving_mean: return "moving_mean";
    case ParamRole::moving_var: return "moving_var";
  }
  return "?";
}

template <typename T>
std::optional<std::size_t> ParamState<T>::find(std::size_t layer, ParamRole role) const {
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (params[i].layer == layer && params[i].role == role) return i;
  }
  return std::nullopt;
}

template <typename T>
const Tensor<T>& ParamState<T>::get(std::size_t layer, ParamRole role) const {
  const auto idx = find(layer, role);
  if (!idx) {
    throw ConfigError("layer " + std::to_string(layer) + " has no " + role_name(role) +
                      " tensor");
  }
  return params[*idx].value;
}

template <typename T>
Tensor<T>& ParamState<T>::get(std::size_t layer, ParamRole role) {
  const auto& self = *this;
  return const_cast<Tensor<T>&>(self.get(layer, role));
}

template <typename T>
std::size_t ParamState<T>::trainable_count() const {
  std::size_t n = 0;
  for (const auto& p : params) n += p.trainable ? p.value.size() : 0;
  return n;
}

template <typename T>
std::size_t ParamState<T>::non_trainable_count() const {
  std::size_t n = 0;
  for (const auto& p : params) n += p.trainable ? 0 : p.value.size();
  return n;
}

template <typename T>
template <typename U>
ParamState<U> ParamState<T>::cast() const {
  ParamState<U> out;
  out.step = step;
  for (const auto& p : params) {
    out.params.push_back({p.name, p.layer, p.role, p.trainable, p.value.template cast<U>(),
                          p.adam_m.template cast<U>(), p.adam_v.template cast<U>()});
  }
  return out;
}

namespace {

std::string param_name(std::size_t layer, const LayerSpec& spec, ParamRole role) {
  char prefix[16];
  std::snprintf(prefix, sizeof(prefix), "%02zu_", layer);
  return prefix + layer_kind(spec) + "/" + role_name(role);
}

template <typename T>
void add_param(ParamState<T>& state, const NetworkSpec& spec, std::size_t layer,
               ParamRole role, bool trainable, Tensor<T> value) {
  Param<T> p;
  p.name = param_name(layer, spec.layers[layer], role);
  p.layer = layer;
  p.role = role;
  p.trainable = trainable;
  if (trainable) {
    p.adam_m = Tensor<T>(value.shape());
    p.adam_v = Tensor<T>(value.shape());
  }
  p.value = std::move(value);
  state.params.push_back(std::move(p));
}

template <typename T>
Tensor<T> glorot(Shape shape, std::size_t fan_in, std::size_t fan_out, SeededPrng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  Tensor<T> t(std::move(shape));
  for (auto& v : t.values()) v = static_cast<T>(rng.uniform(-limit, limit));
  return t;
}

std::size_t argmax_row(const auto* row, std::size_t k) {
  std::size_t best = 0;
  for (std::size_t j = 1; j < k; ++j) {
    if (row[j] > row[best]) best = j;
  }
  return best;
}

}  // namespace

template <typename T>
ParamState<T> init_params(const NetworkSpec& spec, std::uint64_t seed) {
  const auto shapes = infer_shapes(spec);
  SeededPrng rng(seed);
  ParamState<T> state;
  for (std::size_t i = 0; i < spec.layers.size(); ++i) {
    const Shape& in = i == 0 ? spec.input_shape : shapes[i - 1];
    if (const auto* conv = std::get_if<Conv2dSpec>(&spec.layers[i])) {
      const std::size_t area = conv->kernel_h * conv->kernel_w;
      add_param(state, spec, i, ParamRole::kernel, true,
                glorot<T>({conv->kernel_h, conv->kernel_w, in[2], conv->filters},
                          area * in[2], area * conv->filters, rng));
      add_param(state, spec, i, ParamRole::bias, true, Tensor<T>({conv->filters}));
    } else if (const auto* bn = std::get_if<BatchNormSpec>(&spec.layers[i])) {
      add_param(state, spec, i, ParamRole::gamma, true, Tensor<T>({bn->channels}, T{1}));
      add_param(state, spec, i, ParamRole::beta, true, Tensor<T>({bn->channels}));
      add_param(state, spec, i, ParamRole::moving_mean, false, Tensor<T>({bn->channels}));
      add_param(state, spec, i, ParamRole::moving_var, false,
                Tensor<T>({bn->channels}, T{1}));
    } else if (const auto* dense = std::get_if<DenseSpec>(&spec.layers[i])) {
      add_param(state, spec, i, ParamRole::kernel, true,
                glorot<T>({in[0], dense->units}, in[0], dense->units, rng));
      add_param(state, spec, i, ParamRole::bias, true, Tensor<T>({dense->units}));
    }
  }
  return state;
}

template <typename T>
ForwardResult<T> network_forward(const NetworkSpec& spec, const ParamState<T>& params,
                                 const Tensor<T>& batch, Mode mode, SeededPrng& rng,
                                 const ForwardCache<T>* reuse_masks) {
  if (batch.rank() != spec.input_shape.size() + 1 ||
      !std::equal(spec.input_shape.begin(), spec.input_shape.end(),
                  batch.shape().begin() + 1)) {
    throw ShapeError("batch " + shape_string(batch.shape()) +
                     " does not match network input " + shape_string(spec.input_shape));
  }
  if (reuse_masks && reuse_masks->layers.size() != spec.layers.size()) {
    throw ConfigError("reused forward cache has the wrong layer count");
  }
  ForwardResult<T> result;
  result.cache.mode = mode;
  result.cache.layers.resize(spec.layers.size());
  Tensor<T> cur = batch;
  const std::size_t n = batch.dim(0);

  for (std::size_t i = 0; i < spec.layers.size(); ++i) {
    LayerCache<T>& lc = result.cache.layers[i];
    const LayerSpec& layer = spec.layers[i];
    Tensor<T> next;
    if (const auto* conv = std::get_if<Conv2dSpec>(&layer)) {
      next = conv2d_forward(cur, params.get(i, ParamRole::kernel),
                            params.get(i, ParamRole::bias), *conv);
    } else if (const auto* bn = std::get_if<BatchNormSpec>(&layer)) {
      if (mode == Mode::train) {
        next = batch_norm_train(cur, params.get(i, ParamRole::gamma),
                                params.get(i, ParamRole::beta), bn->epsilon, lc.bn);
      } else {
        next = batch_norm_eval(cur, params.get(i, ParamRole::gamma),
                               params.get(i, ParamRole::beta),
                               params.get(i, ParamRole::moving_mean),
                               params.get(i, ParamRole::moving_var), bn->epsilon);
      }
    } else if (const auto* drop = std::get_if<DropoutSpec>(&layer)) {
      const Tensor<T>* reuse = reuse_masks ? &reuse_masks->layers[i].mask : nullptr;
      next = dropout_forward(cur, drop->rate, mode, rng, lc.mask, reuse);
    } else if (const auto* pool = std::get_if<MaxPoolSpec>(&layer)) {
      next = max_pool_forward(cur, *pool, lc.argmax);
    } else if (const auto* avg = std::get_if<AvgPoolSpec>(&layer)) {
      next = avg_pool_forward(cur, *avg);
    } else if (std::holds_alternative<FlattenSpec>(layer)) {
      next = cur.reshaped({n, cur.size() / n});
    } else if (std::holds_alternative<DenseSpec>(layer)) {
      next = dense_forward(cur, params.get(i, ParamRole::kernel),
                           params.get(i, ParamRole::bias));
    } else {
      next = relu_forward(cur);
    }
    if (mode == Mode::train) {
      lc.input = std::move(cur);
    }
    cur = std::move(next);
  }
  result.logits = std::move(cur);
  return result;
}

template <typename T>
void apply_batch_statistics(const NetworkSpec& spec, ParamState<T>& params,
                            const ForwardCache<T>& cache) {
  if (cache.mode != Mode::train) return;
  for (std::size_t i = 0; i < spec.layers.size(); ++i) {
    if (const auto* bn = std::get_if<BatchNormSpec>(&spec.layers[i])) {
      auto& mean = params.get(i, ParamRole::moving_mean);
      auto& var = params.get(i, ParamRole::moving_var);
      update_moving_stats(mean, var, cache.layers[i].bn, bn->momentum);
    }
  }
}

template <typename T>
Gradients<T> network_backward(const NetworkSpec& spec, const ParamState<T>& params,
                              const ForwardCache<T>& cache, const Tensor<T>& logit_grad) {
  if (cache.mode != Mode::train || cache.layers.size() != spec.layers.size()) {
    throw ConfigError("backward needs a train-mode forward cache of this network");
  }
  Gradients<T> grads(params.params.size());
  const auto store = [&](std::size_t layer, ParamRole role, Tensor<T> g) {
    grads[*params.find(layer, role)] = std::move(g);
  };

  Tensor<T> grad = logit_grad;
  for (std::size_t step = spec.layers.size(); step-- > 0;) {
    const LayerCache<T>& lc = cache.layers[step];
    const LayerSpec& layer = spec.layers[step];
    if (const auto* conv = std::get_if<Conv2dSpec>(&layer)) {
      auto g = conv2d_backward(lc.input, params.get(step, ParamRole::kernel), grad, *conv);
      store(step, ParamRole::kernel, std::move(g.kernel));
      store(step, ParamRole::bias, std::move(g.bias));
      grad = std::move(g.input);
    } else if (std::holds_alternative<BatchNormSpec>(layer)) {
      auto g = batch_norm_backward(grad, params.get(step, ParamRole::gamma), lc.bn);
      store(step, ParamRole::gamma, std::move(g.gamma));
      store(step, ParamRole::beta, std::move(g.beta));
      grad = std::move(g.input);
    } else if (std::holds_alternative<DropoutSpec>(layer)) {
      grad = dropout_backward(grad, lc.mask);
    } else if (std::holds_alternative<MaxPoolSpec>(layer)) {
      grad = max_pool_backward(grad, lc.input.shape(), lc.argmax);
    } else if (const auto* avg = std::get_if<AvgPoolSpec>(&layer)) {
      grad = avg_pool_backward(grad, lc.input.shape(), *avg);
    } else if (std::holds_alternative<FlattenSpec>(layer)) {
      grad = grad.reshaped(lc.input.shape());
    } else if (std::holds_alternative<DenseSpec>(layer)) {
      auto g = dense_backward(lc.input, params.get(step, ParamRole::kernel), grad);
      store(step, ParamRole::kernel, std::move(g.weights));
      store(step, ParamRole::bias, std::move(g.bias));
      grad = std::move(g.input);
    } else {
      grad = relu_backward(lc.input, grad);
    }
  }
  return grads;
}

template <typename T>
void adam_step(ParamState<T>& params, const Gradients<T>& grads, const AdamConfig& config) {
  if (grads.size() != params.params.size()) {
    throw ShapeError("adam_step got " + std::to_string(grads.size()) +
                     " gradients for " + std::to_string(params.params.size()) +
                     " tensors");
  }
  for (std::size_t i = 0; i < grads.size(); ++i) {
    if (params.params[i].trainable &&
        grads[i].shape() != params.params[i].value.shape()) {
      throw ShapeError("gradient for " + params.params[i].name + " has shape " +
                       shape_string(grads[i].shape()) + ", parameter is " +
                       shape_string(params.params[i].value.shape()));
    }
  }
  params.step += 1;
  const auto t = static_cast<double>(params.step);
  const double bc1 = 1.0 - std::pow(config.beta1, t);
  const double bc2 = 1.0 - std::pow(config.beta2, t);
  const T b1 = static_cast<T>(config.beta1);
  const T b2 = static_cast<T>(config.beta2);
  const T one_minus_b1 = static_cast<T>(1.0 - config.beta1);
  const T one_minus_b2 = static_cast<T>(1.0 - config.beta2);
  const T inv_bc1 = static_cast<T>(1.0 / bc1);
  const T inv_bc2 = static_cast<T>(1.0 / bc2);
  const T lr = static_cast<T>(config.learning_rate);
  const T eps = static_cast<T>(config.epsilon);

  for (std::size_t i = 0; i < grads.size(); ++i) {
    Param<T>& p = params.params[i];
    if (!p.trainable) continue;
    const Tensor<T>& g = grads[i];
    for (std::size_t j = 0; j < g.size(); ++j) {
      p.adam_m[j] = b1 * p.adam_m[j] + one_minus_b1 * g[j];
      p.adam_v[j] = b2 * p.adam_v[j] + one_minus_b2 * g[j] * g[j];
      const T m_hat = p.adam_m[j] * inv_bc1;
      const T v_hat = p.adam_v[j] * inv_bc2;
      p.value[j] -= lr * m_hat / (std::sqrt(v_hat) + eps);
    }
  }
}

template <typename T>
Tensor<T> TensorDataset<T>::gather(std::span<const std::size_t> indices) const {
  Shape shape = images.shape();
  const std::size_t per = images.size() / shape[0];
  shape[0] = indices.size();
  Tensor<T> out(shape);
  for (std::size_t r = 0; r < indices.size(); ++r) {
    std::copy_n(images.data() + indices[r] * per, per, out.data() + r * per);
  }
  return out;
}

template <typename T>
std::vector<ClassId> TensorDataset<T>::gather_labels(
    std::span<const std::size_t> indices) const {
  std::vector<ClassId> out;
  out.reserve(indices.size());
  for (auto i : indices) out.push_back(labels[i]);
  return out;
}

template <typename T>
EpochStats train_epoch(const NetworkSpec& spec, ParamState<T>& params,
                       const TensorDataset<T>& data, std::size_t batch_size,
                       const AdamConfig& config, SeededPrng& rng) {
  if (data.size() == 0) throw DataError("cannot train on an empty dataset");
  auto batches = data::batch_iter(data.size(), batch_size, true, rng.next());
  // Batch norm cannot normalise a single sample; fold a trailing singleton
  // into the batch before it.
  if (batches.size() > 1 && batches.back().size() == 1) {
    batches[batches.size() - 2].push_back(batches.back().front());
    batches.pop_back();
  }

  double loss_sum = 0.0;
  std::size_t correct = 0;
  for (const auto& idx : batches) {
    const Tensor<T> x = data.gather(idx);
    const auto y = data.gather_labels(idx);
    auto fwd = network_forward(spec, params, x, Mode::train, rng);
    const auto sce = softmax_cross_entropy(fwd.logits, std::span<const ClassId>(y));
    loss_sum += static_cast<double>(sce.loss) * static_cast<double>(idx.size());
    const std::size_t k = fwd.logits.dim(1);
    for (std::size_t r = 0; r < idx.size(); ++r) {
      if (static_cast<ClassId>(argmax_row(sce.probabilities.data() + r * k, k)) == y[r]) {
        ++correct;
      }
    }
    const auto grads = network_backward(spec, params, fwd.cache, sce.logit_grad);
    apply_batch_statistics(spec, params, fwd.cache);
    adam_step(params, grads, config);
  }
  const auto n = static_cast<double>(data.size());
  return {loss_sum / n, static_cast<double>(correct) / n};
}

template <typename T>
EvalResult evaluate(const NetworkSpec& spec, const ParamState<T>& params,
                    const TensorDataset<T>& data, std::size_t batch_size) {
  EvalResult result;
  if (data.size() == 0) return result;
  SeededPrng unused(0);
  double loss_sum = 0.0;
  for (const auto& idx : data::batch_iter(data.size(), batch_size, false, 0)) {
    const Tensor<T> x = data.gather(idx);
    const auto y = data.gather_labels(idx);
    const auto fwd = network_forward(spec, params, x, Mode::eval, unused);
    const auto sce = softmax_cross_entropy(fwd.logits, std::span<const ClassId>(y));
    loss_sum += static_cast<double>(sce.loss) * static_cast<double>(idx.size());
    const std::size_t k = fwd.logits.dim(1);
    for (std::size_t r = 0; r < idx.size(); ++r) {
      const std::size_t pred = argmax_row(fwd.logits.data() + r * k, k);
      ++result.confusion[static_cast<std::size_t>(y[r])][pred];
      if (static_cast<ClassId>(pred) == y[r]) ++result.correct;
    }
  }
  const auto n = static_cast<double>(data.size());
  result.loss = loss_sum / n;
  result.accuracy = static_cast<double>(result.correct) / n;
  return result;
}

double relative_error(double analytic, double numeric) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), kGradCheckFloor});
  return std::abs(analytic - numeric) / denom;
}

namespace {

// ReLU on/off state and max-pool winners. A finite difference whose +/-h
// passes change any of these straddles a kink of the loss.
std::vector<std::size_t> kink_pattern(const NetworkSpec& spec, const ForwardCache<double>& cache) {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < spec.layers.size(); ++i) {
    const auto& lc = cache.layers[i];
    if (std::holds_alternative<ReluSpec>(spec.layers[i])) {
      for (double v : lc.input.values()) out.push_back(v > 0.0);
    } else if (std::holds_alternative<MaxPoolSpec>(spec.layers[i])) {
      out.insert(out.end(), lc.argmax.begin(), lc.argmax.end());
    }
  }
  return out;
}

}  // namespace

GradCheckReport gradient_check(const NetworkSpec& spec, const ParamState<double>& params,
                               const Tensor<double>& batch,
                               std::span<const ClassId> labels,
                               const GradCheckOptions& options) {
  SeededPrng rng(options.seed);
  const auto base = network_forward(spec, params, batch, Mode::train, rng);
  const auto sce = softmax_cross_entropy(base.logits, labels);
  auto analytic = network_backward(spec, params, base.cache, sce.logit_grad);
  if (options.tamper) options.tamper(params, analytic);

  ParamState<double> work = params;
  const auto base_pattern = kink_pattern(spec, base.cache);
  bool crossed = false;
  const auto loss_at = [&]() {
    SeededPrng unused(0);
    const auto fwd = network_forward(spec, work, batch, Mode::train, unused, &base.cache);
    if (kink_pattern(spec, fwd.cache) != base_pattern) crossed = true;
    return static_cast<double>(softmax_cross_entropy(fwd.logits, labels).loss);
  };

  GradCheckReport report;
  SeededPrng picker(options.seed ^ 0x5DEECE66DULL);
  for (std::size_t t = 0; t < work.params.size(); ++t) {
    if (!work.params[t].trainable) continue;
    auto& value = work.params[t].value;
    std::vector<std::size_t> picks;
    if (value.size() <= options.samples_per_tensor) {
      for (std::size_t j = 0; j < value.size(); ++j) picks.push_back(j);
    } else {
      std::set<std::size_t> chosen;
      while (chosen.size() < options.samples_per_tensor) chosen.insert(picker.below(value.size()));
      picks.assign(chosen.begin(), chosen.end());
    }
    for (auto j : picks) {
      const double saved = value[j];
      const auto central = [&](double h) {
        crossed = false;
        value[j] = saved + h;
        const double plus = loss_at();
        value[j] = saved - h;
        const double minus = loss_at();
        value[j] = saved;
        return (plus - minus) / (2.0 * h);
      };
      double h = options.h;
      double numeric = central(h);
      if (crossed) {
        h = options.h * kKinkRetryScale;
        numeric = central(h);
      }
      const double a = analytic[t][j];
      GradCheckEntry e{work.params[t].name, j, a, numeric, relative_error(a, numeric), h, crossed};
      if (crossed) ++report.kink_crossings;
      report.max_rel_error = std::max(report.max_rel_error, e.rel_error);
      report.entries.push_back(std::move(e));
    }
  }
  return report;
}

#define CELLGRADE_INSTANTIATE_NETWORK(T)                                                 \
  template struct ParamState<T>;                                                         \
  template struct TensorDataset<T>;                                                      \
  template ParamState<T> init_params<T>(const NetworkSpec&, std::uint64_t);              \
  template ForwardResult<T> network_forward<T>(const NetworkSpec&, const ParamState<T>&, \
                                               const Tensor<T>&, Mode, SeededPrng&,      \
                                               const ForwardCache<T>*);                  \
  template void apply_batch_statistics<T>(const NetworkSpec&, ParamState<T>&,            \
                                          const ForwardCache<T>&);                       \
  template Gradients<T> network_backward<T>(const NetworkSpec&, const ParamState<T>&,    \
                                            const ForwardCache<T>&, const Tensor<T>&);   \
  template void adam_step<T>(ParamState<T>&, const Gradients<T>&, const AdamConfig&);    \
  template EpochStats train_epoch<T>(const NetworkSpec&, ParamState<T>&,                 \
                                     const TensorDataset<T>&, std::size_t,               \
                                     const AdamConfig&, SeededPrng&);                    \
  template EvalResult evaluate<T>(const NetworkSpec&, const ParamState<T>&,              \
                                  const TensorDataset<T>&, std::size_t);

CELLGRADE_INSTANTIATE_NETWORK(float)
CELLGRADE_INSTANTIATE_NETWORK(double)

template ParamState<double> ParamState<float>::cast<double>() const;
template ParamState<float> ParamState<double>::cast<float>() const;
template ParamState<float> ParamState<float>::cast<float>() const;
template ParamState<double> ParamState<double>::cast<double>() const;

#undef CELLGRADE_INSTANTIATE_NETWORK

}  // namespace cellgrade::nn
