#include "transnet/nn/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "transnet/parallel.hpp"

namespace transnet::nn {

namespace {

struct ImageDims {
  std::size_t n = 1;
  std::size_t c = 0;
  std::size_t h = 0;
  std::size_t w = 0;
  bool batched = false;
};

template <typename T>
ImageDims image_dims(const BasicTensor<T>& t, const char* what) {
  if (t.rank() == 3) return {1, t.shape()[0], t.shape()[1], t.shape()[2], false};
  if (t.rank() == 4) return {t.shape()[0], t.shape()[1], t.shape()[2], t.shape()[3], true};
  throw ShapeError(std::string(what) + ": expected [C,H,W] or [N,C,H,W], got " +
                   to_string(t.shape()));
}

Shape image_shape(const ImageDims& d, std::size_t c, std::size_t h, std::size_t w) {
  if (d.batched) return {d.n, c, h, w};
  return {c, h, w};
}

std::size_t resolve_group(std::size_t group_size, std::size_t n) {
  if (group_size == 0) return n;
  if (n % group_size != 0) {
    throw ShapeError("batch of " + std::to_string(n) + " is not a multiple of group size " +
                     std::to_string(group_size));
  }
  return group_size;
}

// Output columns ox whose input column ox*stride + k - pad lies in [0, in).
struct ValidRange {
  std::size_t lo;
  std::size_t hi;  // exclusive
};

ValidRange valid_outputs(std::size_t in, std::size_t out, std::size_t k, std::size_t stride,
                         std::size_t pad) {
  std::size_t lo = 0;
  if (pad > k) lo = (pad - k + stride - 1) / stride;
  // largest ox with ox*stride + k - pad <= in - 1
  const std::size_t limit = in - 1 + pad;
  if (limit < k) return {0, 0};
  std::size_t hi = (limit - k) / stride + 1;
  hi = std::min(hi, out);
  if (lo > hi) lo = hi;
  return {lo, hi};
}

template <typename T>
void check_conv_args(const ImageDims& d, const BasicTensor<T>& weights, std::size_t in_channels,
                     const char* what) {
  if (d.c != in_channels) {
    throw ShapeError(std::string(what) + ": input has " + std::to_string(d.c) +
                     " channels, weights expect " + std::to_string(in_channels));
  }
  (void)weights;
}

}  // namespace

std::size_t conv_output_size(std::size_t in, std::size_t kernel, std::size_t stride,
                             std::size_t pad) {
  if (stride == 0) throw ShapeError("convolution stride must be >= 1");
  if (kernel == 0) throw ShapeError("convolution kernel size must be >= 1");
  if (in + 2 * pad < kernel) {
    throw ShapeError("kernel " + std::to_string(kernel) + " larger than padded input " +
                     std::to_string(in + 2 * pad));
  }
  return (in + 2 * pad - kernel) / stride + 1;
}

// ---------------------------------------------------------------------------
// conv2d

template <typename T>
BasicTensor<T> conv2d_forward(const BasicTensor<T>& input, const BasicTensor<T>& weights,
                              const BasicTensor<T>& bias, Conv2dGeometry geom) {
  const auto d = image_dims(input, "conv2d");
  if (weights.rank() != 4) throw ShapeError("conv2d: weights must be [C_out,C_in,kH,kW]");
  const std::size_t co_n = weights.shape()[0];
  const std::size_t kh = weights.shape()[2];
  const std::size_t kw = weights.shape()[3];
  check_conv_args(d, weights, weights.shape()[1], "conv2d");
  if (bias.shape() != Shape{co_n}) throw ShapeError("conv2d: bias must be [C_out]");
  const std::size_t ho = conv_output_size(d.h, kh, geom.stride, geom.pad);
  const std::size_t wo = conv_output_size(d.w, kw, geom.stride, geom.pad);

  BasicTensor<T> out(image_shape(d, co_n, ho, wo));
  const T* x = input.raw();
  const T* wt = weights.raw();
  const T* b = bias.raw();
  T* y = out.raw();
  const std::size_t ci_n = d.c;
  const std::size_t s = geom.stride;
  const std::size_t p = geom.pad;

  parallel_for(d.n * co_n, [&](std::size_t task) {
    const std::size_t n = task / co_n;
    const std::size_t co = task % co_n;
    T* yp = y + (n * co_n + co) * ho * wo;
    std::fill(yp, yp + ho * wo, b[co]);
    for (std::size_t ci = 0; ci < ci_n; ++ci) {
      const T* xp = x + (n * ci_n + ci) * d.h * d.w;
      const T* wp = wt + (co * ci_n + ci) * kh * kw;
      for (std::size_t ky = 0; ky < kh; ++ky) {
        const auto rows = valid_outputs(d.h, ho, ky, s, p);
        for (std::size_t kx = 0; kx < kw; ++kx) {
          const T wv = wp[ky * kw + kx];
          const auto cols = valid_outputs(d.w, wo, kx, s, p);
          for (std::size_t oy = rows.lo; oy < rows.hi; ++oy) {
            const T* xrow = xp + (oy * s + ky - p) * d.w + (cols.lo * s + kx - p);
            T* yrow = yp + oy * wo;
            if (s == 1) {
              for (std::size_t j = 0; j < cols.hi - cols.lo; ++j) yrow[cols.lo + j] += wv * xrow[j];
            } else {
              for (std::size_t j = 0; j < cols.hi - cols.lo; ++j) yrow[cols.lo + j] += wv * xrow[j * s];
            }
          }
        }
      }
    }
  });
  return out;
}

template <typename T>
Conv2dGrads<T> conv2d_backward(const BasicTensor<T>& input, const BasicTensor<T>& weights,
                               const BasicTensor<T>& upstream, Conv2dGeometry geom,
                               std::size_t group_size, bool need_input_grad) {
  const auto d = image_dims(input, "conv2d_backward");
  if (weights.rank() != 4) throw ShapeError("conv2d_backward: weights must be rank 4");
  const std::size_t co_n = weights.shape()[0];
  const std::size_t ci_n = weights.shape()[1];
  const std::size_t kh = weights.shape()[2];
  const std::size_t kw = weights.shape()[3];
  check_conv_args(d, weights, ci_n, "conv2d_backward");
  const std::size_t ho = conv_output_size(d.h, kh, geom.stride, geom.pad);
  const std::size_t wo = conv_output_size(d.w, kw, geom.stride, geom.pad);
  if (upstream.shape() != image_shape(d, co_n, ho, wo)) {
    throw ShapeError("conv2d_backward: upstream " + to_string(upstream.shape()) +
                     " does not match forward output " + to_string(image_shape(d, co_n, ho, wo)));
  }
  const std::size_t group = resolve_group(group_size, d.n);
  const std::size_t s = geom.stride;
  const std::size_t p = geom.pad;
  const T* x = input.raw();
  const T* wt = weights.raw();
  const T* up = upstream.raw();

  Conv2dGrads<T> g;
  g.weight = BasicTensor<T>::zeros(weights.shape());
  g.bias = BasicTensor<T>::zeros({co_n});
  T* dw = g.weight.raw();
  T* db = g.bias.raw();
  const std::size_t wsize = ci_n * kh * kw;

  parallel_for(co_n, [&](std::size_t co) {
    std::vector<T> partial(wsize);
    for (std::size_t g0 = 0; g0 < d.n; g0 += group) {
      std::fill(partial.begin(), partial.end(), T{0});
      T bias_partial{0};
      for (std::size_t n = g0; n < g0 + group; ++n) {
        const T* upp = up + (n * co_n + co) * ho * wo;
        for (std::size_t i = 0; i < ho * wo; ++i) bias_partial += upp[i];
        for (std::size_t ci = 0; ci < ci_n; ++ci) {
          const T* xp = x + (n * ci_n + ci) * d.h * d.w;
          for (std::size_t ky = 0; ky < kh; ++ky) {
            const auto rows = valid_outputs(d.h, ho, ky, s, p);
            for (std::size_t kx = 0; kx < kw; ++kx) {
              const auto cols = valid_outputs(d.w, wo, kx, s, p);
              T acc{0};
              for (std::size_t oy = rows.lo; oy < rows.hi; ++oy) {
                const T* xrow = xp + (oy * s + ky - p) * d.w + (cols.lo * s + kx - p);
                const T* urow = upp + oy * wo;
                for (std::size_t j = 0; j < cols.hi - cols.lo; ++j) acc += urow[cols.lo + j] * xrow[j * s];
              }
              partial[(ci * kh + ky) * kw + kx] += acc;
            }
          }
        }
      }
      T* dwp = dw + co * wsize;
      for (std::size_t i = 0; i < wsize; ++i) dwp[i] += partial[i];
      db[co] += bias_partial;
    }
  });

  if (need_input_grad) {
    g.input = BasicTensor<T>::zeros(input.shape());
    T* dx = g.input.raw();
    parallel_for(d.n, [&](std::size_t n) {
      for (std::size_t co = 0; co < co_n; ++co) {
        const T* upp = up + (n * co_n + co) * ho * wo;
        for (std::size_t ci = 0; ci < ci_n; ++ci) {
          T* dxp = dx + (n * ci_n + ci) * d.h * d.w;
          const T* wp = wt + (co * ci_n + ci) * kh * kw;
          for (std::size_t ky = 0; ky < kh; ++ky) {
            const auto rows = valid_outputs(d.h, ho, ky, s, p);
            for (std::size_t kx = 0; kx < kw; ++kx) {
              const T wv = wp[ky * kw + kx];
              const auto cols = valid_outputs(d.w, wo, kx, s, p);
              for (std::size_t oy = rows.lo; oy < rows.hi; ++oy) {
                T* dxrow = dxp + (oy * s + ky - p) * d.w + (cols.lo * s + kx - p);
                const T* urow = upp + oy * wo;
                for (std::size_t j = 0; j < cols.hi - cols.lo; ++j) dxrow[j * s] += wv * urow[cols.lo + j];
              }
            }
          }
        }
      }
    });
  }
  return g;
}

// ---------------------------------------------------------------------------
// depthwise conv2d

template <typename T>
BasicTensor<T> depthwise_conv2d_forward(const BasicTensor<T>& input, const BasicTensor<T>& weights,
                                        const BasicTensor<T>& bias, Conv2dGeometry geom) {
  const auto d = image_dims(input, "depthwise_conv2d");
  if (weights.rank() != 3) throw ShapeError("depthwise_conv2d: weights must be [C,kH,kW]");
  check_conv_args(d, weights, weights.shape()[0], "depthwise_conv2d");
  if (bias.shape() != Shape{d.c}) throw ShapeError("depthwise_conv2d: bias must be [C]");
  const std::size_t kh = weights.shape()[1];
  const std::size_t kw = weights.shape()[2];
  const std::size_t ho = conv_output_size(d.h, kh, geom.stride, geom.pad);
  const std::size_t wo = conv_output_size(d.w, kw, geom.stride, geom.pad);
  BasicTensor<T> out(image_shape(d, d.c, ho, wo));
  const T* x = input.raw();
  const T* wt = weights.raw();
  const T* b = bias.raw();
  T* y = out.raw();
  const std::size_t s = geom.stride;
  const std::size_t p = geom.pad;

  parallel_for(d.n * d.c, [&](std::size_t task) {
    const std::size_t c = task % d.c;
    const T* xp = x + task * d.h * d.w;
    const T* wp = wt + c * kh * kw;
    T* yp = y + task * ho * wo;
    std::fill(yp, yp + ho * wo, b[c]);
    for (std::size_t ky = 0; ky < kh; ++ky) {
      const auto rows = valid_outputs(d.h, ho, ky, s, p);
      for (std::size_t kx = 0; kx < kw; ++kx) {
        const T wv = wp[ky * kw + kx];
        const auto cols = valid_outputs(d.w, wo, kx, s, p);
        for (std::size_t oy = rows.lo; oy < rows.hi; ++oy) {
          const T* xrow = xp + (oy * s + ky - p) * d.w + (cols.lo * s + kx - p);
          T* yrow = yp + oy * wo;
          for (std::size_t j = 0; j < cols.hi - cols.lo; ++j) yrow[cols.lo + j] += wv * xrow[j * s];
        }
      }
    }
  });
  return out;
}

template <typename T>
Conv2dGrads<T> depthwise_conv2d_backward(const BasicTensor<T>& input,
                                         const BasicTensor<T>& weights,
                                         const BasicTensor<T>& upstream, Conv2dGeometry geom,
                                         std::size_t group_size, bool need_input_grad) {
  const auto d = image_dims(input, "depthwise_conv2d_backward");
  if (weights.rank() != 3) throw ShapeError("depthwise_conv2d_backward: weights must be rank 3");
  check_conv_args(d, weights, weights.shape()[0], "depthwise_conv2d_backward");
  const std::size_t kh = weights.shape()[1];
  const std::size_t kw = weights.shape()[2];
  const std::size_t ho = conv_output_size(d.h, kh, geom.stride, geom.pad);
  const std::size_t wo = conv_output_size(d.w, kw, geom.stride, geom.pad);
  if (upstream.shape() != image_shape(d, d.c, ho, wo)) {
    throw ShapeError("depthwise_conv2d_backward: upstream " + to_string(upstream.shape()) +
                     " does not match forward output");
  }
  const std::size_t group = resolve_group(group_size, d.n);
  const std::size_t s = geom.stride;
  const std::size_t p = geom.pad;
  const T* x = input.raw();
  const T* wt = weights.raw();
  const T* up = upstream.raw();

  Conv2dGrads<T> g;
  g.weight = BasicTensor<T>::zeros(weights.shape());
  g.bias = BasicTensor<T>::zeros({d.c});
  T* dw = g.weight.raw();
  T* db = g.bias.raw();

  parallel_for(d.c, [&](std::size_t c) {
    std::vector<T> partial(kh * kw);
    for (std::size_t g0 = 0; g0 < d.n; g0 += group) {
      std::fill(partial.begin(), partial.end(), T{0});
      T bias_partial{0};
      for (std::size_t n = g0; n < g0 + group; ++n) {
        const T* xp = x + (n * d.c + c) * d.h * d.w;
        const T* upp = up + (n * d.c + c) * ho * wo;
        for (std::size_t i = 0; i < ho * wo; ++i) bias_partial += upp[i];
        for (std::size_t ky = 0; ky < kh; ++ky) {
          const auto rows = valid_outputs(d.h, ho, ky, s, p);
          for (std::size_t kx = 0; kx < kw; ++kx) {
            const auto cols = valid_outputs(d.w, wo, kx, s, p);
            T acc{0};
            for (std::size_t oy = rows.lo; oy < rows.hi; ++oy) {
              const T* xrow = xp + (oy * s + ky - p) * d.w + (cols.lo * s + kx - p);
              const T* urow = upp + oy * wo;
              for (std::size_t j = 0; j < cols.hi - cols.lo; ++j) acc += urow[cols.lo + j] * xrow[j * s];
            }
            partial[ky * kw + kx] += acc;
          }
        }
      }
      for (std::size_t i = 0; i < kh * kw; ++i) dw[c * kh * kw + i] += partial[i];
      db[c] += bias_partial;
    }
  });

  if (need_input_grad) {
    g.input = BasicTensor<T>::zeros(input.shape());
    T* dx = g.input.raw();
    parallel_for(d.n * d.c, [&](std::size_t task) {
      const std::size_t c = task % d.c;
      T* dxp = dx + task * d.h * d.w;
      const T* upp = up + task * ho * wo;
      const T* wp = wt + c * kh * kw;
      for (std::size_t ky = 0; ky < kh; ++ky) {
        const auto rows = valid_outputs(d.h, ho, ky, s, p);
        for (std::size_t kx = 0; kx < kw; ++kx) {
          const T wv = wp[ky * kw + kx];
          const auto cols = valid_outputs(d.w, wo, kx, s, p);
          for (std::size_t oy = rows.lo; oy < rows.hi; ++oy) {
            T* dxrow = dxp + (oy * s + ky - p) * d.w + (cols.lo * s + kx - p);
            const T* urow = upp + oy * wo;
            for (std::size_t j = 0; j < cols.hi - cols.lo; ++j) dxrow[j * s] += wv * urow[cols.lo + j];
          }
        }
      }
    });
  }
  return g;
}

// ---------------------------------------------------------------------------
// batchnorm

template <typename T>
BasicTensor<T> batchnorm_forward(const BasicTensor<T>& input, const BasicTensor<T>& gamma,
                                 const BasicTensor<T>& beta, BasicTensor<T>& running_mean,
                                 BasicTensor<T>& running_var, Mode mode, T epsilon, T momentum,
                                 BatchNormCache<T>* cache) {
  const auto d = image_dims(input, "batchnorm");
  const Shape cshape{d.c};
  if (gamma.shape() != cshape || beta.shape() != cshape || running_mean.shape() != cshape ||
      running_var.shape() != cshape) {
    throw ShapeError("batchnorm: gamma/beta/running stats must be [C] with C=" +
                     std::to_string(d.c));
  }
  if (!(epsilon > T{0}) && mode == Mode::kTrain) {
    throw DomainError("batchnorm: epsilon must be > 0 in train mode");
  }
  if (epsilon < T{0}) throw DomainError("batchnorm: epsilon must be >= 0");
  const std::size_t plane = d.h * d.w;
  const std::size_t population = d.n * plane;
  BasicTensor<T> out(input.shape());
  const T* x = input.raw();
  T* y = out.raw();

  if (mode == Mode::kEval) {
    for (std::size_t c = 0; c < d.c; ++c) {
      const T inv = T{1} / std::sqrt(running_var[c] + epsilon);
      const T scale = gamma[c] * inv;
      const T shift = beta[c] - running_mean[c] * scale;
      for (std::size_t n = 0; n < d.n; ++n) {
        const T* xp = x + (n * d.c + c) * plane;
        T* yp = y + (n * d.c + c) * plane;
        for (std::size_t i = 0; i < plane; ++i) yp[i] = xp[i] * scale + shift;
      }
    }
    return out;
  }

  if (population < 2) {
    throw DegenerateBatchError("batchnorm: train mode needs >= 2 values per channel, got " +
                               std::to_string(population));
  }
  if (cache != nullptr) {
    cache->normalized = BasicTensor<T>(input.shape());
    cache->inv_std.assign(d.c, T{0});
  }
  for (std::size_t c = 0; c < d.c; ++c) {
    T sum{0};
    for (std::size_t n = 0; n < d.n; ++n) {
      const T* xp = x + (n * d.c + c) * plane;
      for (std::size_t i = 0; i < plane; ++i) sum += xp[i];
    }
    const T mean = sum / static_cast<T>(population);
    T sq{0};
    for (std::size_t n = 0; n < d.n; ++n) {
      const T* xp = x + (n * d.c + c) * plane;
      for (std::size_t i = 0; i < plane; ++i) {
        const T dv = xp[i] - mean;
        sq += dv * dv;
      }
    }
    const T var = sq / static_cast<T>(population);
    const T inv = T{1} / std::sqrt(var + epsilon);
    for (std::size_t n = 0; n < d.n; ++n) {
      const T* xp = x + (n * d.c + c) * plane;
      T* yp = y + (n * d.c + c) * plane;
      T* xh = cache ? cache->normalized.raw() + (n * d.c + c) * plane : nullptr;
      for (std::size_t i = 0; i < plane; ++i) {
        const T norm = (xp[i] - mean) * inv;
        if (xh) xh[i] = norm;
        yp[i] = gamma[c] * norm + beta[c];
      }
    }
    if (cache) cache->inv_std[c] = inv;
    const T unbiased = sq / static_cast<T>(population - 1);
    running_mean[c] = (T{1} - momentum) * running_mean[c] + momentum * mean;
    running_var[c] = (T{1} - momentum) * running_var[c] + momentum * unbiased;
  }
  return out;
}

template <typename T>
BatchNormGrads<T> batchnorm_backward(const BatchNormCache<T>& cache, const BasicTensor<T>& gamma,
                                     const BasicTensor<T>& upstream, std::size_t group_size) {
  if (cache.normalized.rank() == 0) {
    throw ContractError("batchnorm_backward called without a train-mode forward");
  }
  if (upstream.shape() != cache.normalized.shape()) {
    throw ShapeError("batchnorm_backward: upstream shape mismatch");
  }
  const auto d = image_dims(upstream, "batchnorm_backward");
  const std::size_t group = resolve_group(group_size, d.n);
  const std::size_t plane = d.h * d.w;
  const T m = static_cast<T>(d.n * plane);
  BatchNormGrads<T> g;
  g.input = BasicTensor<T>(upstream.shape());
  g.gamma = BasicTensor<T>::zeros({d.c});
  g.beta = BasicTensor<T>::zeros({d.c});
  const T* up = upstream.raw();
  const T* xh = cache.normalized.raw();
  T* dx = g.input.raw();

  for (std::size_t c = 0; c < d.c; ++c) {
    T sum_dy{0};
    T sum_dy_xh{0};
    for (std::size_t g0 = 0; g0 < d.n; g0 += group) {
      T part_dy{0};
      T part_dy_xh{0};
      for (std::size_t n = g0; n < g0 + group; ++n) {
        const T* upp = up + (n * d.c + c) * plane;
        const T* xhp = xh + (n * d.c + c) * plane;
        for (std::size_t i = 0; i < plane; ++i) {
          part_dy += upp[i];
          part_dy_xh += upp[i] * xhp[i];
        }
      }
      sum_dy += part_dy;
      sum_dy_xh += part_dy_xh;
    }
    g.beta[c] = sum_dy;
    g.gamma[c] = sum_dy_xh;
    const T k = gamma[c] * cache.inv_std[c] / m;
    for (std::size_t n = 0; n < d.n; ++n) {
      const T* upp = up + (n * d.c + c) * plane;
      const T* xhp = xh + (n * d.c + c) * plane;
      T* dxp = dx + (n * d.c + c) * plane;
      for (std::size_t i = 0; i < plane; ++i) {
        dxp[i] = k * (m * upp[i] - sum_dy - xhp[i] * sum_dy_xh);
      }
    }
  }
  return g;
}

// ---------------------------------------------------------------------------
// pointwise

template <typename T>
BasicTensor<T> relu_forward(const BasicTensor<T>& input) {
  BasicTensor<T> out(input.shape());
  const T* x = input.raw();
  T* y = out.raw();
  for (std::size_t i = 0; i < input.size(); ++i) y[i] = x[i] > T{0} ? x[i] : T{0};
  return out;
}

template <typename T>
BasicTensor<T> relu_backward(const BasicTensor<T>& output, const BasicTensor<T>& upstream) {
  if (output.shape() != upstream.shape()) throw ShapeError("relu_backward: shape mismatch");
  BasicTensor<T> dx(upstream.shape());
  const T* y = output.raw();
  const T* up = upstream.raw();
  T* d = dx.raw();
  for (std::size_t i = 0; i < upstream.size(); ++i) d[i] = y[i] > T{0} ? up[i] : T{0};
  return dx;
}

template <typename T>
BasicTensor<T> global_avg_pool_forward(const BasicTensor<T>& input) {
  const auto d = image_dims(input, "global_avg_pool");
  const std::size_t plane = d.h * d.w;
  BasicTensor<T> out(d.batched ? Shape{d.n, d.c} : Shape{d.c});
  const T* x = input.raw();
  const T denom = static_cast<T>(plane);
  for (std::size_t i = 0; i < d.n * d.c; ++i) {
    T sum{0};
    const T* xp = x + i * plane;
    for (std::size_t j = 0; j < plane; ++j) sum += xp[j];
    out[i] = sum / denom;
  }
  return out;
}

template <typename T>
BasicTensor<T> global_avg_pool_backward(const Shape& input_shape, const BasicTensor<T>& upstream) {
  BasicTensor<T> probe;
  ImageDims d;
  if (input_shape.size() == 3) {
    d = {1, input_shape[0], input_shape[1], input_shape[2], false};
  } else if (input_shape.size() == 4) {
    d = {input_shape[0], input_shape[1], input_shape[2], input_shape[3], true};
  } else {
    throw ShapeError("global_avg_pool_backward: bad input shape " + to_string(input_shape));
  }
  const Shape expect = d.batched ? Shape{d.n, d.c} : Shape{d.c};
  if (upstream.shape() != expect) {
    throw ShapeError("global_avg_pool_backward: upstream " + to_string(upstream.shape()) +
                     " expected " + to_string(expect));
  }
  const std::size_t plane = d.h * d.w;
  BasicTensor<T> dx(input_shape);
  T* dp = dx.raw();
  const T denom = static_cast<T>(plane);
  for (std::size_t i = 0; i < d.n * d.c; ++i) {
    const T v = upstream[i] / denom;
    std::fill(dp + i * plane, dp + (i + 1) * plane, v);
  }
  return dx;
}

// ---------------------------------------------------------------------------
// conv1d

template <typename T>
BasicTensor<T> conv1d_forward(const BasicTensor<T>& seq, const BasicTensor<T>& kernels,
                              const BasicTensor<T>& bias) {
  if (seq.rank() != 2) throw ShapeError("conv1d: sequence must be [T,L], got " + to_string(seq.shape()));
  if (kernels.rank() != 3) throw ShapeError("conv1d: kernels must be [K,s,L]");
  const std::size_t t_len = seq.shape()[0];
  const std::size_t l_dim = seq.shape()[1];
  const std::size_t k_n = kernels.shape()[0];
  const std::size_t span = kernels.shape()[1];
  if (kernels.shape()[2] != l_dim) {
    throw ShapeError("conv1d: kernel feature width " + std::to_string(kernels.shape()[2]) +
                     " does not match sequence width " + std::to_string(l_dim));
  }
  if (bias.shape() != Shape{k_n}) throw ShapeError("conv1d: bias must be [K]");
  if (t_len < span) {
    throw ShapeError("conv1d: sequence length " + std::to_string(t_len) +
                     " shorter than kernel size " + std::to_string(span));
  }
  const std::size_t rows = t_len - span + 1;
  const std::size_t window = span * l_dim;
  BasicTensor<T> out({rows, k_n});
  for (std::size_t i = 0; i < rows; ++i) {
    const T* xp = seq.raw() + i * l_dim;
    for (std::size_t j = 0; j < k_n; ++j) {
      const T* kp = kernels.raw() + j * window;
      T acc{0};
      for (std::size_t q = 0; q < window; ++q) acc += xp[q] * kp[q];
      out[i * k_n + j] = acc + bias[j];
    }
  }
  return out;
}

template <typename T>
Conv1dGrads<T> conv1d_backward(const BasicTensor<T>& seq, const BasicTensor<T>& kernels,
                               const BasicTensor<T>& upstream) {
  if (seq.rank() != 2 || kernels.rank() != 3) throw ShapeError("conv1d_backward: bad operand ranks");
  const std::size_t t_len = seq.shape()[0];
  const std::size_t l_dim = seq.shape()[1];
  const std::size_t k_n = kernels.shape()[0];
  const std::size_t span = kernels.shape()[1];
  if (t_len < span || kernels.shape()[2] != l_dim) throw ShapeError("conv1d_backward: shape mismatch");
  const std::size_t rows = t_len - span + 1;
  if (upstream.shape() != Shape{rows, k_n}) {
    throw ShapeError("conv1d_backward: upstream " + to_string(upstream.shape()) +
                     " does not match forward output [" + std::to_string(rows) + "," +
                     std::to_string(k_n) + "]");
  }
  const std::size_t window = span * l_dim;
  Conv1dGrads<T> g;
  g.input = BasicTensor<T>::zeros(seq.shape());
  g.weight = BasicTensor<T>::zeros(kernels.shape());
  g.bias = BasicTensor<T>::zeros({k_n});
  for (std::size_t i = 0; i < rows; ++i) {
    const T* xp = seq.raw() + i * l_dim;
    T* dxp = g.input.raw() + i * l_dim;
    for (std::size_t j = 0; j < k_n; ++j) {
      const T u = upstream[i * k_n + j];
      const T* kp = kernels.raw() + j * window;
      T* dkp = g.weight.raw() + j * window;
      for (std::size_t q = 0; q < window; ++q) {
        dkp[q] += u * xp[q];
        dxp[q] += u * kp[q];
      }
      g.bias[j] += u;
    }
  }
  return g;
}

// ---------------------------------------------------------------------------
// losses

template <typename T>
BasicTensor<T> softmax(const BasicTensor<T>& logits) {
  if (logits.rank() != 1) throw ShapeError("softmax: logits must be a vector");
  T mx = -std::numeric_limits<T>::infinity();
  for (auto v : logits.data()) mx = std::max(mx, v);
  BasicTensor<T> probs(logits.shape());
  T sum{0};
  for (std::size_t i = 0; i < logits.size(); ++i) {
    probs[i] = std::exp(logits[i] - mx);
    sum += probs[i];
  }
  for (auto& p : probs.data()) p /= sum;
  return probs;
}

template <typename T>
SoftmaxCrossEntropy<T> softmax_cross_entropy(const BasicTensor<T>& logits, std::size_t label) {
  if (logits.rank() != 1) throw ShapeError("softmax_cross_entropy: logits must be a vector");
  if (label >= logits.size()) {
    throw IndexError("label " + std::to_string(label) + " out of range for " +
                     std::to_string(logits.size()) + " classes");
  }
  T mx = -std::numeric_limits<T>::infinity();
  for (auto v : logits.data()) mx = std::max(mx, v);
  BasicTensor<T> probs(logits.shape());
  T sum{0};
  for (std::size_t i = 0; i < logits.size(); ++i) {
    probs[i] = std::exp(logits[i] - mx);
    sum += probs[i];
  }
  for (auto& p : probs.data()) p /= sum;
  const T loss = std::log(sum) - (logits[label] - mx);
  return {std::move(probs), loss};
}

template <typename T>
BasicTensor<T> softmax_cross_entropy_backward(const BasicTensor<T>& probs, std::size_t label) {
  if (label >= probs.size()) throw IndexError("label out of range");
  BasicTensor<T> g = probs;
  g[label] -= T{1};
  return g;
}

template <typename T>
SigmoidBce<T> sigmoid_bce(const BasicTensor<T>& logits, const BasicTensor<T>& targets) {
  if (logits.shape() != targets.shape()) {
    throw ShapeError("sigmoid_bce: logits " + to_string(logits.shape()) + " vs targets " +
                     to_string(targets.shape()));
  }
  BasicTensor<T> probs(logits.shape());
  T total{0};
  for (std::size_t i = 0; i < logits.size(); ++i) {
    const T x = logits[i];
    const T t = targets[i];
    if (!(t >= T{0} && t <= T{1})) {
      throw DomainError("sigmoid_bce: target " + std::to_string(static_cast<double>(t)) +
                        " outside [0,1]");
    }
    const T e = std::exp(-std::abs(x));
    probs[i] = x >= T{0} ? T{1} / (T{1} + e) : e / (T{1} + e);
    total += std::max(x, T{0}) - x * t + std::log1p(e);
  }
  return {std::move(probs), total / static_cast<T>(logits.size())};
}

template <typename T>
BasicTensor<T> sigmoid_bce_backward(const BasicTensor<T>& probs, const BasicTensor<T>& targets) {
  if (probs.shape() != targets.shape()) throw ShapeError("sigmoid_bce_backward: shape mismatch");
  BasicTensor<T> g(probs.shape());
  const T scale = T{1} / static_cast<T>(probs.size());
  for (std::size_t i = 0; i < probs.size(); ++i) g[i] = (probs[i] - targets[i]) * scale;
  return g;
}

// ---------------------------------------------------------------------------
// upsampling

template <typename T>
BasicTensor<T> upsample_nearest2x_forward(const BasicTensor<T>& input) {
  const auto d = image_dims(input, "upsample_nearest2x");
  BasicTensor<T> out(image_shape(d, d.c, 2 * d.h, 2 * d.w));
  const std::size_t w2 = 2 * d.w;
  for (std::size_t i = 0; i < d.n * d.c; ++i) {
    const T* xp = input.raw() + i * d.h * d.w;
    T* yp = out.raw() + i * 4 * d.h * d.w;
    for (std::size_t y = 0; y < d.h; ++y) {
      T* r0 = yp + (2 * y) * w2;
      T* r1 = r0 + w2;
      for (std::size_t x = 0; x < d.w; ++x) {
        const T v = xp[y * d.w + x];
        r0[2 * x] = v;
        r0[2 * x + 1] = v;
        r1[2 * x] = v;
        r1[2 * x + 1] = v;
      }
    }
  }
  return out;
}

template <typename T>
BasicTensor<T> upsample_nearest2x_backward(const BasicTensor<T>& upstream) {
  const auto d = image_dims(upstream, "upsample_nearest2x_backward");
  if (d.h % 2 != 0 || d.w % 2 != 0) {
    throw ShapeError("upsample_nearest2x_backward: upstream spatial size must be even");
  }
  const std::size_t h = d.h / 2;
  const std::size_t w = d.w / 2;
  BasicTensor<T> dx(image_shape(d, d.c, h, w));
  for (std::size_t i = 0; i < d.n * d.c; ++i) {
    const T* up = upstream.raw() + i * d.h * d.w;
    T* dp = dx.raw() + i * h * w;
    for (std::size_t y = 0; y < h; ++y) {
      const T* r0 = up + (2 * y) * d.w;
      const T* r1 = r0 + d.w;
      for (std::size_t x = 0; x < w; ++x) {
        dp[y * w + x] = r0[2 * x] + r0[2 * x + 1] + r1[2 * x] + r1[2 * x + 1];
      }
    }
  }
  return dx;
}

#define TRANSNET_INSTANTIATE(T)                                                                   \
  template BasicTensor<T> conv2d_forward(const BasicTensor<T>&, const BasicTensor<T>&,            \
                                         const BasicTensor<T>&, Conv2dGeometry);                  \
  template Conv2dGrads<T> conv2d_backward(const BasicTensor<T>&, const BasicTensor<T>&,           \
                                          const BasicTensor<T>&, Conv2dGeometry, std::size_t,     \
                                          bool);                                                  \
  template BasicTensor<T> depthwise_conv2d_forward(const BasicTensor<T>&, const BasicTensor<T>&,  \
                                                   const BasicTensor<T>&, Conv2dGeometry);        \
  template Conv2dGrads<T> depthwise_conv2d_backward(const BasicTensor<T>&, const BasicTensor<T>&, \
                                                    const BasicTensor<T>&, Conv2dGeometry,        \
                                                    std::size_t, bool);                           \
  template BasicTensor<T> batchnorm_forward(const BasicTensor<T>&, const BasicTensor<T>&,         \
                                            const BasicTensor<T>&, BasicTensor<T>&,               \
                                            BasicTensor<T>&, Mode, T, T, BatchNormCache<T>*);     \
  template BatchNormGrads<T> batchnorm_backward(const BatchNormCache<T>&, const BasicTensor<T>&,  \
                                                const BasicTensor<T>&, std::size_t);              \
  template BasicTensor<T> relu_forward(const BasicTensor<T>&);                                    \
  template BasicTensor<T> relu_backward(const BasicTensor<T>&, const BasicTensor<T>&);            \
  template BasicTensor<T> global_avg_pool_forward(const BasicTensor<T>&);                         \
  template BasicTensor<T> global_avg_pool_backward(const Shape&, const BasicTensor<T>&);          \
  template BasicTensor<T> conv1d_forward(const BasicTensor<T>&, const BasicTensor<T>&,            \
                                         const BasicTensor<T>&);                                  \
  template Conv1dGrads<T> conv1d_backward(const BasicTensor<T>&, const BasicTensor<T>&,           \
                                          const BasicTensor<T>&);                                 \
  template BasicTensor<T> softmax(const BasicTensor<T>&);                                         \
  template SoftmaxCrossEntropy<T> softmax_cross_entropy(const BasicTensor<T>&, std::size_t);      \
  template BasicTensor<T> softmax_cross_entropy_backward(const BasicTensor<T>&, std::size_t);     \
  template SigmoidBce<T> sigmoid_bce(const BasicTensor<T>&, const BasicTensor<T>&);               \
  template BasicTensor<T> sigmoid_bce_backward(const BasicTensor<T>&, const BasicTensor<T>&);     \
  template BasicTensor<T> upsample_nearest2x_forward(const BasicTensor<T>&);                      \
  template BasicTensor<T> upsample_nearest2x_backward(const BasicTensor<T>&);

TRANSNET_INSTANTIATE(float)
TRANSNET_INSTANTIATE(double)

#undef TRANSNET_INSTANTIATE

}  // namespace transnet::nn
