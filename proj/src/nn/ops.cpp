// SPDX-License-Identifier: Apache-2.0
#include "cellgrade/nn/ops.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>

#include "cellgrade/errors.hpp"

namespace cellgrade::nn {

namespace {

// Rows of B (gemm) or C (gemm_at_b) kept hot per pass. Blocking only reorders
// memory traffic; each output element still accumulates in ascending index
// order, so results do not depend on the block size.
constexpr std::size_t kBlock = 64;

std::string dims4(const Shape& s) { return shape_string(s); }

void require_rank(const Shape& s, std::size_t rank, const char* what) {
  if (s.size() != rank) {
    throw ShapeError(std::string(what) + " expects a rank-" + std::to_string(rank) +
                     " tensor, got " + dims4(s));
  }
}

template <typename T>
Tensor<T> transpose2d(const Tensor<T>& m) {
  const std::size_t r = m.dim(0), c = m.dim(1);
  Tensor<T> out({c, r});
  for (std::size_t i = 0; i < r; ++i) {
    for (std::size_t j = 0; j < c; ++j) out[j * r + i] = m[i * c + j];
  }
  return out;
}

struct ConvGeometry {
  std::size_t n, h, w, c, oh, ow, f;
};

template <typename T>
ConvGeometry conv_geometry(const Tensor<T>& x, const Tensor<T>& kernel,
                           const Conv2dSpec& spec) {
  require_rank(x.shape(), 4, "conv2d input");
  require_rank(kernel.shape(), 4, "conv2d kernel");
  const auto& ks = kernel.shape();
  if (ks[0] != spec.kernel_h || ks[1] != spec.kernel_w || ks[3] != spec.filters ||
      ks[2] != x.dim(3)) {
    throw ShapeError("conv2d kernel " + dims4(ks) + " does not match input " +
                     dims4(x.shape()) + " with " + std::to_string(spec.filters) +
                     " filters of " + std::to_string(spec.kernel_h) + "x" +
                     std::to_string(spec.kernel_w));
  }
  if (x.dim(1) < spec.kernel_h || x.dim(2) < spec.kernel_w) {
    throw ShapeError("conv2d kernel " + std::to_string(spec.kernel_h) + "x" +
                     std::to_string(spec.kernel_w) + " larger than input " +
                     dims4(x.shape()));
  }
  if (spec.stride_h == 0 || spec.stride_w == 0) {
    throw ShapeError("conv2d stride must be >= 1");
  }
  return {x.dim(0),
          x.dim(1),
          x.dim(2),
          x.dim(3),
          (x.dim(1) - spec.kernel_h) / spec.stride_h + 1,
          (x.dim(2) - spec.kernel_w) / spec.stride_w + 1,
          spec.filters};
}

// Rows are output positions (n, oh, ow); columns are (i, j, c) patch offsets.
template <typename T>
std::vector<T> im2col(const Tensor<T>& x, const ConvGeometry& g,
                      const Conv2dSpec& spec) {
  const std::size_t row_len = spec.kernel_w * g.c;
  const std::size_t patch = spec.kernel_h * row_len;
  std::vector<T> col(g.n * g.oh * g.ow * patch);
  T* dst = col.data();
  for (std::size_t n = 0; n < g.n; ++n) {
    for (std::size_t oy = 0; oy < g.oh; ++oy) {
      for (std::size_t ox = 0; ox < g.ow; ++ox) {
        for (std::size_t i = 0; i < spec.kernel_h; ++i) {
          const T* src = x.data() +
                         ((n * g.h + oy * spec.stride_h + i) * g.w + ox * spec.stride_w) * g.c;
          std::memcpy(dst, src, row_len * sizeof(T));
          dst += row_len;
        }
      }
    }
  }
  return col;
}

template <typename T>
void col2im_add(const std::vector<T>& col, Tensor<T>& dx, const ConvGeometry& g,
                const Conv2dSpec& spec) {
  const std::size_t row_len = spec.kernel_w * g.c;
  const T* src = col.data();
  for (std::size_t n = 0; n < g.n; ++n) {
    for (std::size_t oy = 0; oy < g.oh; ++oy) {
      for (std::size_t ox = 0; ox < g.ow; ++ox) {
        for (std::size_t i = 0; i < spec.kernel_h; ++i) {
          T* dst = dx.data() +
                   ((n * g.h + oy * spec.stride_h + i) * g.w + ox * spec.stride_w) * g.c;
          for (std::size_t t = 0; t < row_len; ++t) dst[t] += src[t];
          src += row_len;
        }
      }
    }
  }
}

template <typename T>
void pool_check(const Tensor<T>& x, std::size_t ph, std::size_t pw, std::size_t sh,
                std::size_t sw, const char* what) {
  require_rank(x.shape(), 4, what);
  if (ph == 0 || pw == 0 || sh == 0 || sw == 0) {
    throw ShapeError(std::string(what) + ": pool and stride must be >= 1");
  }
  if (x.dim(1) < ph || x.dim(2) < pw) {
    throw ShapeError(std::string(what) + ": window " + std::to_string(ph) + "x" +
                     std::to_string(pw) + " larger than input " + dims4(x.shape()));
  }
}

}  // namespace

template <typename T>
void gemm(const T* a, const T* b, T* c, std::size_t m, std::size_t k, std::size_t n,
          bool accumulate) {
  if (!accumulate) std::fill(c, c + m * n, T{0});
  for (std::size_t p0 = 0; p0 < k; p0 += kBlock) {
    const std::size_t p1 = std::min(k, p0 + kBlock);
    for (std::size_t i = 0; i < m; ++i) {
      T* __restrict crow = c + i * n;
      const T* arow = a + i * k;
      for (std::size_t p = p0; p < p1; ++p) {
        const T av = arow[p];
        if (av == T{0}) continue;
        const T* __restrict brow = b + p * n;
        for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
      }
    }
  }
}

template <typename T>
void gemm_at_b(const T* a, const T* b, T* c, std::size_t m, std::size_t k,
               std::size_t n) {
  for (std::size_t p0 = 0; p0 < k; p0 += kBlock) {
    const std::size_t p1 = std::min(k, p0 + kBlock);
    for (std::size_t i = 0; i < m; ++i) {
      const T* arow = a + i * k;
      const T* __restrict brow = b + i * n;
      for (std::size_t p = p0; p < p1; ++p) {
        const T av = arow[p];
        if (av == T{0}) continue;
        T* __restrict crow = c + p * n;
        for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
      }
    }
  }
}

template <typename T>
Tensor<T> conv2d_forward(const Tensor<T>& x, const Tensor<T>& kernel,
                         const Tensor<T>& bias, const Conv2dSpec& spec) {
  const ConvGeometry g = conv_geometry(x, kernel, spec);
  if (bias.size() != g.f) {
    throw ShapeError("conv2d bias has " + std::to_string(bias.size()) +
                     " entries for " + std::to_string(g.f) + " filters");
  }
  const std::size_t patch = spec.kernel_h * spec.kernel_w * g.c;
  const std::size_t rows = g.n * g.oh * g.ow;
  const auto col = im2col(x, g, spec);
  Tensor<T> y({g.n, g.oh, g.ow, g.f});
  for (std::size_t r = 0; r < rows; ++r) {
    std::copy(bias.data(), bias.data() + g.f, y.data() + r * g.f);
  }
  gemm(col.data(), kernel.data(), y.data(), rows, patch, g.f, true);
  return y;
}

template <typename T>
ConvGrads<T> conv2d_backward(const Tensor<T>& x, const Tensor<T>& kernel,
                             const Tensor<T>& dy, const Conv2dSpec& spec) {
  const ConvGeometry g = conv_geometry(x, kernel, spec);
  if (dy.shape() != Shape{g.n, g.oh, g.ow, g.f}) {
    throw ShapeError("conv2d upstream gradient " + dims4(dy.shape()) +
                     " does not match output [" + std::to_string(g.n) + "," +
                     std::to_string(g.oh) + "," + std::to_string(g.ow) + "," +
                     std::to_string(g.f) + "]");
  }
  const std::size_t patch = spec.kernel_h * spec.kernel_w * g.c;
  const std::size_t rows = g.n * g.oh * g.ow;
  const auto col = im2col(x, g, spec);

  ConvGrads<T> grads{Tensor<T>(x.shape()), Tensor<T>(kernel.shape()),
                     Tensor<T>({g.f})};
  gemm_at_b(col.data(), dy.data(), grads.kernel.data(), rows, patch, g.f);
  for (std::size_t r = 0; r < rows; ++r) {
    const T* drow = dy.data() + r * g.f;
    for (std::size_t f = 0; f < g.f; ++f) grads.bias[f] += drow[f];
  }

  const Tensor<T> kt = transpose2d(kernel.reshaped({patch, g.f}));
  std::vector<T> dcol(rows * patch);
  gemm(dy.data(), kt.data(), dcol.data(), rows, g.f, patch);
  col2im_add(dcol, grads.input, g, spec);
  return grads;
}

template <typename T>
Tensor<T> batch_norm_train(const Tensor<T>& x, const Tensor<T>& gamma,
                           const Tensor<T>& beta, double epsilon,
                           BatchNormCache<T>& cache) {
  if (x.rank() < 2 || x.dim(0) < 2) {
    throw ConfigError("batch_norm in train mode needs a batch of at least 2, got " +
                      dims4(x.shape()));
  }
  const std::size_t ch = x.shape().back();
  if (gamma.size() != ch || beta.size() != ch) {
    throw ShapeError("batch_norm parameters sized " + std::to_string(gamma.size()) +
                     " for " + std::to_string(ch) + " channels");
  }
  const std::size_t m = x.size() / ch;
  std::vector<double> mean(ch, 0.0), var(ch, 0.0);
  for (std::size_t r = 0; r < m; ++r) {
    for (std::size_t c = 0; c < ch; ++c) mean[c] += x[r * ch + c];
  }
  for (auto& v : mean) v /= static_cast<double>(m);
  for (std::size_t r = 0; r < m; ++r) {
    for (std::size_t c = 0; c < ch; ++c) {
      const double d = x[r * ch + c] - mean[c];
      var[c] += d * d;
    }
  }
  for (auto& v : var) v /= static_cast<double>(m);

  cache.inv_std.assign(ch, T{0});
  cache.batch_mean.assign(ch, T{0});
  cache.batch_var.assign(ch, T{0});
  for (std::size_t c = 0; c < ch; ++c) {
    cache.inv_std[c] = static_cast<T>(1.0 / std::sqrt(var[c] + epsilon));
    cache.batch_mean[c] = static_cast<T>(mean[c]);
    cache.batch_var[c] = static_cast<T>(var[c]);
  }
  cache.normalized = Tensor<T>(x.shape());
  Tensor<T> y(x.shape());
  for (std::size_t r = 0; r < m; ++r) {
    for (std::size_t c = 0; c < ch; ++c) {
      const std::size_t i = r * ch + c;
      const T xhat = static_cast<T>((x[i] - mean[c])) * cache.inv_std[c];
      cache.normalized[i] = xhat;
      y[i] = gamma[c] * xhat + beta[c];
    }
  }
  return y;
}

template <typename T>
Tensor<T> batch_norm_eval(const Tensor<T>& x, const Tensor<T>& gamma,
                          const Tensor<T>& beta, const Tensor<T>& moving_mean,
                          const Tensor<T>& moving_var, double epsilon) {
  const std::size_t ch = x.shape().back();
  if (gamma.size() != ch || beta.size() != ch || moving_mean.size() != ch ||
      moving_var.size() != ch) {
    throw ShapeError("batch_norm parameters do not match " + std::to_string(ch) +
                     " channels");
  }
  std::vector<T> scale(ch), shift(ch);
  for (std::size_t c = 0; c < ch; ++c) {
    const T inv = static_cast<T>(1.0 / std::sqrt(static_cast<double>(moving_var[c]) + epsilon));
    scale[c] = gamma[c] * inv;
    shift[c] = beta[c] - moving_mean[c] * scale[c];
  }
  Tensor<T> y(x.shape());
  const std::size_t m = x.size() / ch;
  for (std::size_t r = 0; r < m; ++r) {
    for (std::size_t c = 0; c < ch; ++c) {
      y[r * ch + c] = x[r * ch + c] * scale[c] + shift[c];
    }
  }
  return y;
}

template <typename T>
BatchNormGrads<T> batch_norm_backward(const Tensor<T>& dy, const Tensor<T>& gamma,
                                      const BatchNormCache<T>& cache) {
  const std::size_t ch = gamma.size();
  if (dy.shape() != cache.normalized.shape()) {
    throw ShapeError("batch_norm upstream gradient " + dims4(dy.shape()) +
                     " does not match cached " + dims4(cache.normalized.shape()));
  }
  const std::size_t m = dy.size() / ch;
  std::vector<double> sum_dy(ch, 0.0), sum_dy_xhat(ch, 0.0);
  for (std::size_t r = 0; r < m; ++r) {
    for (std::size_t c = 0; c < ch; ++c) {
      const std::size_t i = r * ch + c;
      sum_dy[c] += dy[i];
      sum_dy_xhat[c] += static_cast<double>(dy[i]) * cache.normalized[i];
    }
  }
  BatchNormGrads<T> g{Tensor<T>(dy.shape()), Tensor<T>({ch}), Tensor<T>({ch})};
  for (std::size_t c = 0; c < ch; ++c) {
    g.gamma[c] = static_cast<T>(sum_dy_xhat[c]);
    g.beta[c] = static_cast<T>(sum_dy[c]);
  }
  const double inv_m = 1.0 / static_cast<double>(m);
  for (std::size_t r = 0; r < m; ++r) {
    for (std::size_t c = 0; c < ch; ++c) {
      const std::size_t i = r * ch + c;
      const double k = static_cast<double>(gamma[c]) * cache.inv_std[c];
      g.input[i] = static_cast<T>(
          k * (dy[i] - inv_m * sum_dy[c] - cache.normalized[i] * inv_m * sum_dy_xhat[c]));
    }
  }
  return g;
}

template <typename T>
void update_moving_stats(Tensor<T>& moving_mean, Tensor<T>& moving_var,
                         const BatchNormCache<T>& cache, double momentum) {
  const T keep = static_cast<T>(momentum);
  const T take = static_cast<T>(1.0 - momentum);
  for (std::size_t c = 0; c < moving_mean.size(); ++c) {
    moving_mean[c] = keep * moving_mean[c] + take * cache.batch_mean[c];
    moving_var[c] = keep * moving_var[c] + take * cache.batch_var[c];
  }
}

template <typename T>
Tensor<T> dropout_forward(const Tensor<T>& x, double rate, Mode mode,
                          SeededPrng& rng, Tensor<T>& mask, const Tensor<T>* reuse) {
  if (!(rate >= 0.0 && rate < 1.0)) {
    throw ConfigError("dropout rate must lie in [0, 1), got " + std::to_string(rate));
  }
  if (mode == Mode::eval || rate == 0.0) {
    mask = Tensor<T>(x.shape(), T{1});
    return x;
  }
  if (reuse) {
    if (reuse->shape() != x.shape()) {
      throw ShapeError("reused dropout mask " + dims4(reuse->shape()) +
                       " does not match input " + dims4(x.shape()));
    }
    mask = *reuse;
  } else {
    mask = Tensor<T>(x.shape());
    const T scale = static_cast<T>(1.0 / (1.0 - rate));
    for (std::size_t i = 0; i < mask.size(); ++i) {
      mask[i] = rng.uniform() < rate ? T{0} : scale;
    }
  }
  Tensor<T> y(x.shape());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = x[i] * mask[i];
  return y;
}

template <typename T>
Tensor<T> dropout_backward(const Tensor<T>& dy, const Tensor<T>& mask) {
  Tensor<T> dx(dy.shape());
  for (std::size_t i = 0; i < dx.size(); ++i) dx[i] = dy[i] * mask[i];
  return dx;
}

template <typename T>
Tensor<T> max_pool_forward(const Tensor<T>& x, const MaxPoolSpec& spec,
                           std::vector<std::size_t>& argmax) {
  pool_check(x, spec.pool_h, spec.pool_w, spec.stride_h, spec.stride_w, "max_pool");
  const std::size_t n = x.dim(0), h = x.dim(1), w = x.dim(2), c = x.dim(3);
  const std::size_t oh = (h - spec.pool_h) / spec.stride_h + 1;
  const std::size_t ow = (w - spec.pool_w) / spec.stride_w + 1;
  Tensor<T> y({n, oh, ow, c});
  argmax.assign(y.size(), 0);
  std::size_t o = 0;
  for (std::size_t b = 0; b < n; ++b) {
    for (std::size_t oy = 0; oy < oh; ++oy) {
      for (std::size_t ox = 0; ox < ow; ++ox) {
        for (std::size_t ch = 0; ch < c; ++ch, ++o) {
          std::size_t best = ((b * h + oy * spec.stride_h) * w + ox * spec.stride_w) * c + ch;
          for (std::size_t i = 0; i < spec.pool_h; ++i) {
            for (std::size_t j = 0; j < spec.pool_w; ++j) {
              const std::size_t idx =
                  ((b * h + oy * spec.stride_h + i) * w + ox * spec.stride_w + j) * c + ch;
              if (x[idx] > x[best]) best = idx;
            }
          }
          y[o] = x[best];
          argmax[o] = best;
        }
      }
    }
  }
  return y;
}

template <typename T>
Tensor<T> max_pool_backward(const Tensor<T>& dy, const Shape& input_shape,
                            const std::vector<std::size_t>& argmax) {
  if (argmax.size() != dy.size()) {
    throw ShapeError("max_pool backward: argmax/gradient size mismatch");
  }
  Tensor<T> dx(input_shape);
  for (std::size_t o = 0; o < dy.size(); ++o) dx[argmax[o]] += dy[o];
  return dx;
}

template <typename T>
Tensor<T> avg_pool_forward(const Tensor<T>& x, const AvgPoolSpec& spec) {
  pool_check(x, spec.pool_h, spec.pool_w, spec.stride_h, spec.stride_w, "avg_pool");
  const std::size_t n = x.dim(0), h = x.dim(1), w = x.dim(2), c = x.dim(3);
  const std::size_t oh = (h - spec.pool_h) / spec.stride_h + 1;
  const std::size_t ow = (w - spec.pool_w) / spec.stride_w + 1;
  const T inv = static_cast<T>(1.0 / static_cast<double>(spec.pool_h * spec.pool_w));
  Tensor<T> y({n, oh, ow, c});
  std::size_t o = 0;
  for (std::size_t b = 0; b < n; ++b) {
    for (std::size_t oy = 0; oy < oh; ++oy) {
      for (std::size_t ox = 0; ox < ow; ++ox) {
        for (std::size_t ch = 0; ch < c; ++ch, ++o) {
          T sum{0};
          for (std::size_t i = 0; i < spec.pool_h; ++i) {
            for (std::size_t j = 0; j < spec.pool_w; ++j) {
              sum += x[((b * h + oy * spec.stride_h + i) * w + ox * spec.stride_w + j) * c + ch];
            }
          }
          y[o] = sum * inv;
        }
      }
    }
  }
  return y;
}

template <typename T>
Tensor<T> avg_pool_backward(const Tensor<T>& dy, const Shape& input_shape,
                            const AvgPoolSpec& spec) {
  const std::size_t n = input_shape[0], h = input_shape[1], w = input_shape[2],
                    c = input_shape[3];
  const std::size_t oh = dy.dim(1), ow = dy.dim(2);
  const T inv = static_cast<T>(1.0 / static_cast<double>(spec.pool_h * spec.pool_w));
  Tensor<T> dx(input_shape);
  std::size_t o = 0;
  for (std::size_t b = 0; b < n; ++b) {
    for (std::size_t oy = 0; oy < oh; ++oy) {
      for (std::size_t ox = 0; ox < ow; ++ox) {
        for (std::size_t ch = 0; ch < c; ++ch, ++o) {
          const T g = dy[o] * inv;
          for (std::size_t i = 0; i < spec.pool_h; ++i) {
            for (std::size_t j = 0; j < spec.pool_w; ++j) {
              dx[((b * h + oy * spec.stride_h + i) * w + ox * spec.stride_w + j) * c + ch] += g;
            }
          }
        }
      }
    }
  }
  return dx;
}

template <typename T>
Tensor<T> dense_forward(const Tensor<T>& x, const Tensor<T>& weights,
                        const Tensor<T>& bias) {
  require_rank(x.shape(), 2, "dense input");
  require_rank(weights.shape(), 2, "dense weights");
  if (x.dim(1) != weights.dim(0) || bias.size() != weights.dim(1)) {
    throw ShapeError("dense input " + dims4(x.shape()) + " does not match weights " +
                     dims4(weights.shape()) + " / bias " + dims4(bias.shape()));
  }
  const std::size_t n = x.dim(0), d = x.dim(1), u = weights.dim(1);
  Tensor<T> y({n, u});
  for (std::size_t r = 0; r < n; ++r) std::copy(bias.data(), bias.data() + u, y.data() + r * u);
  gemm(x.data(), weights.data(), y.data(), n, d, u, true);
  return y;
}

template <typename T>
DenseGrads<T> dense_backward(const Tensor<T>& x, const Tensor<T>& weights,
                             const Tensor<T>& dy) {
  const std::size_t n = x.dim(0), d = x.dim(1), u = weights.dim(1);
  if (dy.shape() != Shape{n, u}) {
    throw ShapeError("dense upstream gradient " + dims4(dy.shape()) +
                     " does not match output [" + std::to_string(n) + "," +
                     std::to_string(u) + "]");
  }
  DenseGrads<T> g{Tensor<T>({n, d}), Tensor<T>({d, u}), Tensor<T>({u})};
  gemm_at_b(x.data(), dy.data(), g.weights.data(), n, d, u);
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t j = 0; j < u; ++j) g.bias[j] += dy[r * u + j];
  }
  const Tensor<T> wt = transpose2d(weights);
  gemm(dy.data(), wt.data(), g.input.data(), n, u, d);
  return g;
}

template <typename T>
Tensor<T> relu_forward(const Tensor<T>& x) {
  Tensor<T> y(x.shape());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = x[i] > T{0} ? x[i] : T{0};
  return y;
}

template <typename T>
Tensor<T> relu_backward(const Tensor<T>& x, const Tensor<T>& dy) {
  Tensor<T> dx(x.shape());
  for (std::size_t i = 0; i < dx.size(); ++i) dx[i] = x[i] > T{0} ? dy[i] : T{0};
  return dx;
}

template <typename T>
SoftmaxCrossEntropy<T> softmax_cross_entropy(const Tensor<T>& logits,
                                             std::span<const ClassId> labels) {
  require_rank(logits.shape(), 2, "softmax_cross_entropy logits");
  const std::size_t n = logits.dim(0), k = logits.dim(1);
  if (labels.size() != n) {
    throw ShapeError("softmax_cross_entropy: " + std::to_string(n) + " rows but " +
                     std::to_string(labels.size()) + " labels");
  }
  SoftmaxCrossEntropy<T> out{T{0}, Tensor<T>({n, k}), Tensor<T>({n, k})};
  double loss = 0.0;
  const double inv_n = 1.0 / static_cast<double>(n);
  for (std::size_t r = 0; r < n; ++r) {
    const auto label = static_cast<std::size_t>(labels[r]);
    if (labels[r] < 0 || label >= k) {
      throw ConfigError("label " + std::to_string(labels[r]) + " outside [0, " +
                        std::to_string(k) + ")");
    }
    const T* row = logits.data() + r * k;
    const double top = *std::max_element(row, row + k);
    double sum = 0.0;
    for (std::size_t j = 0; j < k; ++j) sum += std::exp(static_cast<double>(row[j]) - top);
    for (std::size_t j = 0; j < k; ++j) {
      const double p = std::exp(static_cast<double>(row[j]) - top) / sum;
      out.probabilities[r * k + j] = static_cast<T>(p);
      out.logit_grad[r * k + j] = static_cast<T>((p - (j == label ? 1.0 : 0.0)) * inv_n);
      if (j == label) loss -= std::log(std::max(p, kLogClamp));
    }
  }
  out.loss = static_cast<T>(loss * inv_n);
  return out;
}

#define CELLGRADE_INSTANTIATE_OPS(T)                                                    \
  template void gemm<T>(const T*, const T*, T*, std::size_t, std::size_t, std::size_t, \
                        bool);                                                          \
  template void gemm_at_b<T>(const T*, const T*, T*, std::size_t, std::size_t,         \
                             std::size_t);                                              \
  template Tensor<T> conv2d_forward<T>(const Tensor<T>&, const Tensor<T>&,             \
                                       const Tensor<T>&, const Conv2dSpec&);           \
  template ConvGrads<T> conv2d_backward<T>(const Tensor<T>&, const Tensor<T>&,         \
                                           const Tensor<T>&, const Conv2dSpec&);       \
  template Tensor<T> batch_norm_train<T>(const Tensor<T>&, const Tensor<T>&,           \
                                         const Tensor<T>&, double, BatchNormCache<T>&); \
  template Tensor<T> batch_norm_eval<T>(const Tensor<T>&, const Tensor<T>&,            \
                                        const Tensor<T>&, const Tensor<T>&,            \
                                        const Tensor<T>&, double);                     \
  template BatchNormGrads<T> batch_norm_backward<T>(const Tensor<T>&, const Tensor<T>&, \
                                                    const BatchNormCache<T>&);         \
  template void update_moving_stats<T>(Tensor<T>&, Tensor<T>&, const BatchNormCache<T>&, \
                                       double);                                        \
  template Tensor<T> dropout_forward<T>(const Tensor<T>&, double, Mode, SeededPrng&,   \
                                        Tensor<T>&, const Tensor<T>*);                 \
  template Tensor<T> dropout_backward<T>(const Tensor<T>&, const Tensor<T>&);          \
  template Tensor<T> max_pool_forward<T>(const Tensor<T>&, const MaxPoolSpec&,         \
                                         std::vector<std::size_t>&);                   \
  template Tensor<T> max_pool_backward<T>(const Tensor<T>&, const Shape&,              \
                                          const std::vector<std::size_t>&);            \
  template Tensor<T> avg_pool_forward<T>(const Tensor<T>&, const AvgPoolSpec&);        \
  template Tensor<T> avg_pool_backward<T>(const Tensor<T>&, const Shape&,              \
                                          const AvgPoolSpec&);                         \
  template Tensor<T> dense_forward<T>(const Tensor<T>&, const Tensor<T>&,              \
                                      const Tensor<T>&);                               \
  template DenseGrads<T> dense_backward<T>(const Tensor<T>&, const Tensor<T>&,         \
                                           const Tensor<T>&);                          \
  template Tensor<T> relu_forward<T>(const Tensor<T>&);                                \
  template Tensor<T> relu_backward<T>(const Tensor<T>&, const Tensor<T>&);             \
  template SoftmaxCrossEntropy<T> softmax_cross_entropy<T>(const Tensor<T>&,           \
                                                           std::span<const ClassId>);

CELLGRADE_INSTANTIATE_OPS(float)
CELLGRADE_INSTANTIATE_OPS(double)

#undef CELLGRADE_INSTANTIATE_OPS

}  // namespace cellgrade::nn
