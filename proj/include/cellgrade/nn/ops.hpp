// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "cellgrade/labels.hpp"
#include "cellgrade/nn/spec.hpp"
#include "cellgrade/prng.hpp"
#include "cellgrade/tensor.hpp"

// Layer kernels. Image tensors are NHWC; conv kernels are [kh, kw, in, out];
// dense weights are [in, units]. Every reduction runs in a fixed index order,
// so results depend only on inputs.
namespace cellgrade::nn {

enum class Mode { train, eval };

// C[m x n] = A[m x k] * B[k x n]  (accumulate when `accumulate`).
template <typename T>
void gemm(const T* a, const T* b, T* c, std::size_t m, std::size_t k, std::size_t n,
          bool accumulate = false);
// C[k x n] += A[m x k]^T * B[m x n]
template <typename T>
void gemm_at_b(const T* a, const T* b, T* c, std::size_t m, std::size_t k,
               std::size_t n);

template <typename T>
struct ConvGrads {
  Tensor<T> input;
  Tensor<T> kernel;
  Tensor<T> bias;
};

template <typename T>
Tensor<T> conv2d_forward(const Tensor<T>& x, const Tensor<T>& kernel,
                         const Tensor<T>& bias, const Conv2dSpec& spec);
template <typename T>
ConvGrads<T> conv2d_backward(const Tensor<T>& x, const Tensor<T>& kernel,
                             const Tensor<T>& dy, const Conv2dSpec& spec);

template <typename T>
struct BatchNormCache {
  Tensor<T> normalized;        // x-hat
  std::vector<T> inv_std;      // per channel
  std::vector<T> batch_mean;   // per channel
  std::vector<T> batch_var;    // per channel, biased
};

template <typename T>
struct BatchNormGrads {
  Tensor<T> input;
  Tensor<T> gamma;
  Tensor<T> beta;
};

// Normalises over every axis but the last. Needs at least two samples.
template <typename T>
Tensor<T> batch_norm_train(const Tensor<T>& x, const Tensor<T>& gamma,
                           const Tensor<T>& beta, double epsilon,
                           BatchNormCache<T>& cache);
template <typename T>
Tensor<T> batch_norm_eval(const Tensor<T>& x, const Tensor<T>& gamma,
                          const Tensor<T>& beta, const Tensor<T>& moving_mean,
                          const Tensor<T>& moving_var, double epsilon);
template <typename T>
BatchNormGrads<T> batch_norm_backward(const Tensor<T>& dy, const Tensor<T>& gamma,
                                      const BatchNormCache<T>& cache);
// moving <- momentum * moving + (1 - momentum) * batch
template <typename T>
void update_moving_stats(Tensor<T>& moving_mean, Tensor<T>& moving_var,
                         const BatchNormCache<T>& cache, double momentum);

// Inverted dropout. `mask` holds 0 or 1/(1-rate) per element; in eval mode or
// at rate 0 it is all ones. When `reuse` is non-null its values are applied
// instead of drawing a new mask.
template <typename T>
Tensor<T> dropout_forward(const Tensor<T>& x, double rate, Mode mode,
                          SeededPrng& rng, Tensor<T>& mask,
                          const Tensor<T>* reuse = nullptr);
template <typename T>
Tensor<T> dropout_backward(const Tensor<T>& dy, const Tensor<T>& mask);

// argmax holds, per output element, the flat input index that won; ties go to
// the first position in row-major window order.
template <typename T>
Tensor<T> max_pool_forward(const Tensor<T>& x, const MaxPoolSpec& spec,
                           std::vector<std::size_t>& argmax);
template <typename T>
Tensor<T> max_pool_backward(const Tensor<T>& dy, const Shape& input_shape,
                            const std::vector<std::size_t>& argmax);
template <typename T>
Tensor<T> avg_pool_forward(const Tensor<T>& x, const AvgPoolSpec& spec);
template <typename T>
Tensor<T> avg_pool_backward(const Tensor<T>& dy, const Shape& input_shape,
                            const AvgPoolSpec& spec);

template <typename T>
struct DenseGrads {
  Tensor<T> input;
  Tensor<T> weights;
  Tensor<T> bias;
};

template <typename T>
Tensor<T> dense_forward(const Tensor<T>& x, const Tensor<T>& weights,
                        const Tensor<T>& bias);
template <typename T>
DenseGrads<T> dense_backward(const Tensor<T>& x, const Tensor<T>& weights,
                             const Tensor<T>& dy);

template <typename T>
Tensor<T> relu_forward(const Tensor<T>& x);
template <typename T>
Tensor<T> relu_backward(const Tensor<T>& x, const Tensor<T>& dy);

template <typename T>
struct SoftmaxCrossEntropy {
  T loss;
  Tensor<T> probabilities;
  Tensor<T> logit_grad;
};

inline constexpr double kLogClamp = 1e-7;

// Mean NLL over the batch with probabilities clamped to >= 1e-7 inside the
// log; gradient (p - one_hot) / N.
template <typename T>
SoftmaxCrossEntropy<T> softmax_cross_entropy(const Tensor<T>& logits,
                                             std::span<const ClassId> labels);

}  // namespace cellgrade::nn
