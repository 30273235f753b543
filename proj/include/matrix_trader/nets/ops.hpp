#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <span>

#include "matrix_trader/nets/autograd.hpp"

namespace mtrader::nets {

namespace detail {

template <class T>
void require_same_shape(const Var<T>& a, const Var<T>& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  }
}

// Elementwise unary primitive given f(x) and df/dx expressed through (x, y).
template <class T, class F, class DF>
Var<T> unary(const Var<T>& a, const char* op, F f, DF df) {
  Tensor<T> out(a.shape());
  const auto& x = a.value().data;
  for (std::size_t i = 0; i < x.size(); ++i) out.data[i] = f(x[i]);
  return make_result<T>(std::move(out), {a}, op, [df](Node<T>& self) {
    auto& pa = *self.parents[0];
    auto& g = pa.grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * df(pa.value.data[i], self.value.data[i]);
  });
}

}  // namespace detail

template <class T>
Var<T> add(const Var<T>& a, const Var<T>& b) {
  detail::require_same_shape(a, b, "add");
  Tensor<T> out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out.data[i] += b.value().data[i];
  return make_result<T>(std::move(out), {a, b}, "add", [](Node<T>& self) {
    for (std::size_t p = 0; p < 2; ++p) {
      if (!self.parent_wants_grad(p)) continue;
      auto& g = self.parents[p]->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    }
  });
}

template <class T>
Var<T> sub(const Var<T>& a, const Var<T>& b) {
  detail::require_same_shape(a, b, "sub");
  Tensor<T> out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out.data[i] -= b.value().data[i];
  return make_result<T>(std::move(out), {a, b}, "sub", [](Node<T>& self) {
    if (self.parent_wants_grad(0)) {
      auto& g = self.parents[0]->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    }
    if (self.parent_wants_grad(1)) {
      auto& g = self.parents[1]->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] -= self.grad[i];
    }
  });
}

template <class T>
Var<T> mul(const Var<T>& a, const Var<T>& b) {
  detail::require_same_shape(a, b, "mul");
  Tensor<T> out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out.data[i] *= b.value().data[i];
  return make_result<T>(std::move(out), {a, b}, "mul", [](Node<T>& self) {
    for (std::size_t p = 0; p < 2; ++p) {
      if (!self.parent_wants_grad(p)) continue;
      const auto& other = self.parents[1 - p]->value.data;
      auto& g = self.parents[p]->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * other[i];
    }
  });
}

template <class T>
Var<T> scale(const Var<T>& a, T s) {
  return detail::unary<T>(a, "scale", [s](T x) { return s * x; }, [s](T, T) { return s; });
}

template <class T>
Var<T> add_scalar(const Var<T>& a, T s) {
  return detail::unary<T>(a, "add_scalar", [s](T x) { return x + s; }, [](T, T) { return T(1); });
}

template <class T>
Var<T> neg(const Var<T>& a) {
  return scale(a, T(-1));
}

template <class T>
Var<T> exp(const Var<T>& a) {
  return detail::unary<T>(a, "exp", [](T x) { return std::exp(x); }, [](T, T y) { return y; });
}

template <class T>
Var<T> tanh(const Var<T>& a) {
  return detail::unary<T>(a, "tanh", [](T x) { return std::tanh(x); }, [](T, T y) { return T(1) - y * y; });
}

template <class T>
Var<T> relu(const Var<T>& a) {
  return detail::unary<T>(a, "relu", [](T x) { return x > T(0) ? x : T(0); },
                          [](T x, T) { return x > T(0) ? T(1) : T(0); });
}

template <class T>
Var<T> square(const Var<T>& a) {
  return detail::unary<T>(a, "square", [](T x) { return x * x; }, [](T x, T) { return T(2) * x; });
}

// Gradient passes where lo <= x <= hi.
template <class T>
Var<T> clamp(const Var<T>& a, T lo, T hi) {
  return detail::unary<T>(a, "clamp", [lo, hi](T x) { return std::clamp(x, lo, hi); },
                          [lo, hi](T x, T) { return (x >= lo && x <= hi) ? T(1) : T(0); });
}

// Elementwise minimum; ties route the gradient to `a`.
template <class T>
Var<T> minimum(const Var<T>& a, const Var<T>& b) {
  detail::require_same_shape(a, b, "minimum");
  Tensor<T> out(a.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out.data[i] = std::min(a.value().data[i], b.value().data[i]);
  return make_result<T>(std::move(out), {a, b}, "minimum", [](Node<T>& self) {
    const auto& av = self.parents[0]->value.data;
    const auto& bv = self.parents[1]->value.data;
    for (std::size_t p = 0; p < 2; ++p) {
      if (!self.parent_wants_grad(p)) continue;
      auto& g = self.parents[p]->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) {
        const bool a_wins = av[i] <= bv[i];
        if ((p == 0) == a_wins) g[i] += self.grad[i];
      }
    }
  });
}

template <class T>
Var<T> sum(const Var<T>& a) {
  T s = T(0);
  for (T x : a.value().data) s += x;
  return make_result<T>(Tensor<T>({1}, {s}), {a}, "sum", [](Node<T>& self) {
    auto& g = self.parents[0]->grad_buffer();
    for (auto& x : g) x += self.grad[0];
  });
}

template <class T>
Var<T> mean(const Var<T>& a) {
  return scale(sum(a), T(1) / static_cast<T>(a.size()));
}

template <class T>
Var<T> reshape(const Var<T>& a, Shape shape) {
  if (shape_numel(shape) != a.size()) {
    throw ShapeError("reshape " + shape_str(a.shape()) + " -> " + shape_str(shape));
  }
  Tensor<T> out(std::move(shape), a.value().data);
  return make_result<T>(std::move(out), {a}, "reshape", [](Node<T>& self) {
    auto& g = self.parents[0]->grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
  });
}

template <class T>
Var<T> detach(const Var<T>& a) {
  return Var<T>::constant(a.value());
}

// x [N, in] * W[out, in]^T + b[out] -> [N, out]
template <class T>
Var<T> linear(const Var<T>& x, const Var<T>& w, const Var<T>& b) {
  if (x.value().rank() != 2 || w.value().rank() != 2 || b.value().rank() != 1 || x.shape()[1] != w.shape()[1] ||
      b.shape()[0] != w.shape()[0]) {
    throw ShapeError("linear: bad shapes x" + shape_str(x.shape()) + " w" + shape_str(w.shape()) + " b" +
                     shape_str(b.shape()));
  }
  const std::size_t n = x.shape()[0], in = x.shape()[1], out_dim = w.shape()[0];
  Tensor<T> out({n, out_dim});
  detail::gemm<T>(false, true, n, out_dim, in, T(1), x.value().data.data(), w.value().data.data(), T(0),
                  out.data.data());
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t c = 0; c < out_dim; ++c) out.data[r * out_dim + c] += b.value().data[c];
  }
  return make_result<T>(std::move(out), {x, w, b}, "linear", [n, in, out_dim](Node<T>& self) {
    const T* gy = self.grad.data();
    if (self.parent_wants_grad(0)) {
      detail::gemm<T>(false, false, n, in, out_dim, T(1), gy, self.parents[1]->value.data.data(), T(1),
                      self.parents[0]->grad_buffer().data());
    }
    if (self.parent_wants_grad(1)) {
      detail::gemm<T>(true, false, out_dim, in, n, T(1), gy, self.parents[0]->value.data.data(), T(1),
                      self.parents[1]->grad_buffer().data());
    }
    if (self.parent_wants_grad(2)) {
      auto& gb = self.parents[2]->grad_buffer();
      for (std::size_t r = 0; r < n; ++r) {
        for (std::size_t c = 0; c < out_dim; ++c) gb[c] += gy[r * out_dim + c];
      }
    }
  });
}

namespace detail {

struct ConvGeometry {
  std::size_t channels, height, width, kernel, pad, out_h, out_w;
  std::size_t col_rows() const { return channels * kernel * kernel; }
  std::size_t col_cols() const { return out_h * out_w; }
};

// Output columns [lo, hi) read input columns ow + kj - pad inside [0, width).
inline std::pair<std::size_t, std::size_t> valid_cols(const ConvGeometry& g, std::size_t kj) {
  const std::size_t lo = kj < g.pad ? g.pad - kj : 0;
  const std::size_t limit = g.width + g.pad - kj;  // first ow whose input column is past the edge
  const std::size_t hi = std::min(g.out_w, limit);
  return {std::min(lo, hi), hi};
}

template <class T>
void im2col(const T* x, const ConvGeometry& g, T* cols) {
  const auto pad = static_cast<std::ptrdiff_t>(g.pad);
  for (std::size_t c = 0; c < g.channels; ++c) {
    for (std::size_t ki = 0; ki < g.kernel; ++ki) {
      for (std::size_t kj = 0; kj < g.kernel; ++kj) {
        T* row = cols + ((c * g.kernel + ki) * g.kernel + kj) * g.col_cols();
        const auto [lo, hi] = valid_cols(g, kj);
        for (std::size_t oh = 0; oh < g.out_h; ++oh) {
          const std::ptrdiff_t ih = static_cast<std::ptrdiff_t>(oh + ki) - pad;
          T* dst = row + oh * g.out_w;
          if (ih < 0 || ih >= static_cast<std::ptrdiff_t>(g.height)) {
            std::fill(dst, dst + g.out_w, T(0));
            continue;
          }
          const T* src = x + (c * g.height + static_cast<std::size_t>(ih)) * g.width;
          std::fill(dst, dst + lo, T(0));
          if (hi > lo) std::copy(src + (lo + kj - g.pad), src + (hi + kj - g.pad), dst + lo);
          std::fill(dst + hi, dst + g.out_w, T(0));
        }
      }
    }
  }
}

template <class T>
void col2im_add(const T* cols, const ConvGeometry& g, T* dx) {
  const auto pad = static_cast<std::ptrdiff_t>(g.pad);
  for (std::size_t c = 0; c < g.channels; ++c) {
    for (std::size_t ki = 0; ki < g.kernel; ++ki) {
      for (std::size_t kj = 0; kj < g.kernel; ++kj) {
        const T* row = cols + ((c * g.kernel + ki) * g.kernel + kj) * g.col_cols();
        const auto [lo, hi] = valid_cols(g, kj);
        for (std::size_t oh = 0; oh < g.out_h; ++oh) {
          const std::ptrdiff_t ih = static_cast<std::ptrdiff_t>(oh + ki) - pad;
          if (ih < 0 || ih >= static_cast<std::ptrdiff_t>(g.height)) continue;
          T* dst = dx + (c * g.height + static_cast<std::size_t>(ih)) * g.width;
          const T* src = row + oh * g.out_w;
          for (std::size_t ow = lo; ow < hi; ++ow) dst[ow + kj - g.pad] += src[ow];
        }
      }
    }
  }
}

}  // namespace detail

// Stride-1 convolution. x [N, C, H, W], w [O, C, K, K], b [O] -> [N, O, H', W'].
template <class T>
Var<T> conv2d(const Var<T>& x, const Var<T>& w, const Var<T>& b, std::size_t pad) {
  const auto& xs = x.shape();
  const auto& ws = w.shape();
  if (xs.size() != 4 || ws.size() != 4 || ws[1] != xs[1] || ws[2] != ws[3] || b.shape() != Shape{ws[0]} ||
      xs[2] + 2 * pad < ws[2] || xs[3] + 2 * pad < ws[3]) {
    throw ShapeError("conv2d: bad shapes x" + shape_str(xs) + " w" + shape_str(ws) + " b" + shape_str(b.shape()));
  }
  const std::size_t n = xs[0], out_c = ws[0];
  const detail::ConvGeometry geo{xs[1], xs[2], xs[3], ws[2], pad, xs[2] + 2 * pad - ws[2] + 1,
                                 xs[3] + 2 * pad - ws[3] + 1};
  Tensor<T> out({n, out_c, geo.out_h, geo.out_w});
  std::vector<T> cols(geo.col_rows() * geo.col_cols());
  const std::size_t in_stride = geo.channels * geo.height * geo.width, out_stride = out_c * geo.col_cols();
  for (std::size_t s = 0; s < n; ++s) {
    detail::im2col(x.value().data.data() + s * in_stride, geo, cols.data());
    T* o = out.data.data() + s * out_stride;
    detail::gemm<T>(false, false, out_c, geo.col_cols(), geo.col_rows(), T(1), w.value().data.data(), cols.data(),
                    T(0), o);
    for (std::size_t c = 0; c < out_c; ++c) {
      const T bias = b.value().data[c];
      T* plane = o + c * geo.col_cols();
      for (std::size_t i = 0; i < geo.col_cols(); ++i) plane[i] += bias;
    }
  }
  return make_result<T>(std::move(out), {x, w, b}, "conv2d", [geo, n, out_c, in_stride, out_stride](Node<T>& self) {
    const bool want_x = self.parent_wants_grad(0), want_w = self.parent_wants_grad(1);
    std::vector<T> cols(geo.col_rows() * geo.col_cols());
    const auto& xv = self.parents[0]->value.data;
    const auto& wv = self.parents[1]->value.data;
    for (std::size_t s = 0; s < n; ++s) {
      const T* gy = self.grad.data() + s * out_stride;
      if (want_w) {
        detail::im2col(xv.data() + s * in_stride, geo, cols.data());
        detail::gemm<T>(false, true, out_c, geo.col_rows(), geo.col_cols(), T(1), gy, cols.data(), T(1),
                        self.parents[1]->grad_buffer().data());
      }
      if (want_x) {
        detail::gemm<T>(true, false, geo.col_rows(), geo.col_cols(), out_c, T(1), wv.data(), gy, T(0), cols.data());
        detail::col2im_add(cols.data(), geo, self.parents[0]->grad_buffer().data() + s * in_stride);
      }
    }
    if (self.parent_wants_grad(2)) {
      auto& gb = self.parents[2]->grad_buffer();
      for (std::size_t s = 0; s < n; ++s) {
        for (std::size_t c = 0; c < out_c; ++c) {
          const T* gy = self.grad.data() + s * out_stride + c * geo.col_cols();
          T acc = T(0);
          for (std::size_t i = 0; i < geo.col_cols(); ++i) acc += gy[i];
          gb[c] += acc;
        }
      }
    }
  });
}

// Non-overlapping k x k max pooling over [N, C, H, W]; trailing rows/cols that
// do not fill a window are dropped.
template <class T>
Var<T> maxpool2d(const Var<T>& x, std::size_t k) {
  const auto& xs = x.shape();
  if (xs.size() != 4 || k == 0 || xs[2] < k || xs[3] < k) throw ShapeError("maxpool2d: bad input " + shape_str(xs));
  const std::size_t n = xs[0], c = xs[1], h = xs[2], w = xs[3], oh = h / k, ow = w / k;
  Tensor<T> out({n, c, oh, ow});
  std::vector<std::uint32_t> argmax(out.size());
  const auto& xv = x.value().data;
  for (std::size_t plane = 0; plane < n * c; ++plane) {
    const std::size_t in_base = plane * h * w, out_base = plane * oh * ow;
    for (std::size_t i = 0; i < oh; ++i) {
      for (std::size_t j = 0; j < ow; ++j) {
        std::size_t best = in_base + (i * k) * w + j * k;
        for (std::size_t di = 0; di < k; ++di) {
          for (std::size_t dj = 0; dj < k; ++dj) {
            const std::size_t idx = in_base + (i * k + di) * w + j * k + dj;
            if (xv[idx] > xv[best]) best = idx;
          }
        }
        out.data[out_base + i * ow + j] = xv[best];
        argmax[out_base + i * ow + j] = static_cast<std::uint32_t>(best);
      }
    }
  }
  return make_result<T>(std::move(out), {x}, "maxpool2d", [argmax = std::move(argmax)](Node<T>& self) {
    auto& g = self.parents[0]->grad_buffer();
    for (std::size_t i = 0; i < argmax.size(); ++i) g[argmax[i]] += self.grad[i];
  });
}

enum class BatchNormMode {
  kTrain,          // batch statistics; running statistics updated
  kEval,           // running statistics, read-only
  kTrackRunning,   // running statistics for normalization, then updated from the batch
};

struct BatchNormOptions {
  BatchNormMode mode = BatchNormMode::kEval;
  double momentum = 0.1;
  double eps = 1e-5;
};

// Per-channel normalization over (N, H, W) of x [N, C, H, W]. running_mean and
// running_var (length C) are read in every mode and written in the modes that
// update them; the written variance is the unbiased batch variance.
template <class T>
Var<T> batchnorm2d(const Var<T>& x, const Var<T>& gamma, const Var<T>& beta, std::span<T> running_mean,
                   std::span<T> running_var, const BatchNormOptions& opt) {
  const auto& xs = x.shape();
  if (xs.size() != 4 || gamma.shape() != Shape{xs[1]} || beta.shape() != Shape{xs[1]} ||
      running_mean.size() != xs[1] || running_var.size() != xs[1]) {
    throw ShapeError("batchnorm2d: bad shapes x" + shape_str(xs));
  }
  const std::size_t n = xs[0], c_count = xs[1], hw = xs[2] * xs[3];
  const bool batch_stats = opt.mode == BatchNormMode::kTrain;
  const bool updates = opt.mode != BatchNormMode::kEval;
  if (updates && n < 2) throw ShapeError("batchnorm2d: batch statistics need N >= 2");
  const std::size_t m = n * hw;
  const auto& xv = x.value().data;

  std::vector<T> mu(c_count), inv_std(c_count);
  std::vector<T> xhat(xv.size());
  Tensor<T> out(xs);
  for (std::size_t c = 0; c < c_count; ++c) {
    double bm = 0.0, bv = 0.0;
    if (updates) {
      for (std::size_t s = 0; s < n; ++s) {
        const T* p = xv.data() + (s * c_count + c) * hw;
        for (std::size_t i = 0; i < hw; ++i) bm += p[i];
      }
      bm /= static_cast<double>(m);
      for (std::size_t s = 0; s < n; ++s) {
        const T* p = xv.data() + (s * c_count + c) * hw;
        for (std::size_t i = 0; i < hw; ++i) bv += (p[i] - bm) * (p[i] - bm);
      }
      bv /= static_cast<double>(m);
    }
    const double use_mean = batch_stats ? bm : static_cast<double>(running_mean[c]);
    const double use_var = batch_stats ? bv : static_cast<double>(running_var[c]);
    mu[c] = static_cast<T>(use_mean);
    inv_std[c] = static_cast<T>(1.0 / std::sqrt(use_var + opt.eps));
    const T g = gamma.value().data[c], bt = beta.value().data[c];
    for (std::size_t s = 0; s < n; ++s) {
      const std::size_t base = (s * c_count + c) * hw;
      for (std::size_t i = 0; i < hw; ++i) {
        const T h = (xv[base + i] - mu[c]) * inv_std[c];
        xhat[base + i] = h;
        out.data[base + i] = g * h + bt;
      }
    }
    if (updates) {
      const double unbiased = bv * static_cast<double>(m) / static_cast<double>(m - 1);
      running_mean[c] = static_cast<T>((1.0 - opt.momentum) * running_mean[c] + opt.momentum * bm);
      running_var[c] = static_cast<T>((1.0 - opt.momentum) * running_var[c] + opt.momentum * unbiased);
    }
  }
  return make_result<T>(
      std::move(out), {x, gamma, beta}, "batchnorm2d",
      [n, c_count, hw, m, batch_stats, inv_std = std::move(inv_std), xhat = std::move(xhat)](Node<T>& self) {
        const auto& gv = self.parents[1]->value.data;
        const auto& gy = self.grad;
        for (std::size_t c = 0; c < c_count; ++c) {
          T sum_dy = T(0), sum_dy_xhat = T(0);
          for (std::size_t s = 0; s < n; ++s) {
            const std::size_t base = (s * c_count + c) * hw;
            for (std::size_t i = 0; i < hw; ++i) {
              sum_dy += gy[base + i];
              sum_dy_xhat += gy[base + i] * xhat[base + i];
            }
          }
          if (self.parent_wants_grad(1)) self.parents[1]->grad_buffer()[c] += sum_dy_xhat;
          if (self.parent_wants_grad(2)) self.parents[2]->grad_buffer()[c] += sum_dy;
          if (!self.parent_wants_grad(0)) continue;
          auto& gx = self.parents[0]->grad_buffer();
          const T scale = gv[c] * inv_std[c];
          const T inv_m = T(1) / static_cast<T>(m);
          for (std::size_t s = 0; s < n; ++s) {
            const std::size_t base = (s * c_count + c) * hw;
            for (std::size_t i = 0; i < hw; ++i) {
              if (batch_stats) {
                gx[base + i] += scale * (gy[base + i] - inv_m * sum_dy - xhat[base + i] * inv_m * sum_dy_xhat);
              } else {
                gx[base + i] += scale * gy[base + i];
              }
            }
          }
        }
      });
}

// Diagonal Gaussian log-density of fixed `actions` [N, A] under mean [N, A]
// and a shared log_std [A]. Returns [N].
template <class T>
Var<T> gaussian_log_prob(const Var<T>& mean, const Var<T>& log_std, const Tensor<T>& actions) {
  if (mean.value().rank() != 2 || actions.shape != mean.shape() || log_std.shape() != Shape{mean.shape()[1]}) {
    throw ShapeError("gaussian_log_prob: bad shapes mean" + shape_str(mean.shape()) + " log_std" +
                     shape_str(log_std.shape()));
  }
  const std::size_t n = mean.shape()[0], a = mean.shape()[1];
  const T half_log_2pi = static_cast<T>(0.5 * std::log(2.0 * std::numbers::pi));
  Tensor<T> out({n});
  std::vector<T> z(n * a);  // (x - mu) / sigma
  for (std::size_t r = 0; r < n; ++r) {
    T lp = T(0);
    for (std::size_t d = 0; d < a; ++d) {
      const T ls = log_std.value().data[d];
      const T zz = (actions.data[r * a + d] - mean.value().data[r * a + d]) * std::exp(-ls);
      z[r * a + d] = zz;
      lp += T(-0.5) * zz * zz - ls - half_log_2pi;
    }
    out.data[r] = lp;
  }
  return make_result<T>(std::move(out), {mean, log_std}, "gaussian_log_prob", [n, a, z = std::move(z)](Node<T>& self) {
    const auto& ls = self.parents[1]->value.data;
    if (self.parent_wants_grad(0)) {
      auto& gm = self.parents[0]->grad_buffer();
      for (std::size_t r = 0; r < n; ++r) {
        for (std::size_t d = 0; d < a; ++d) gm[r * a + d] += self.grad[r] * z[r * a + d] * std::exp(-ls[d]);
      }
    }
    if (self.parent_wants_grad(1)) {
      auto& gs = self.parents[1]->grad_buffer();
      for (std::size_t r = 0; r < n; ++r) {
        for (std::size_t d = 0; d < a; ++d) gs[d] += self.grad[r] * (z[r * a + d] * z[r * a + d] - T(1));
      }
    }
  });
}

// Entropy of a diagonal Gaussian with the given log_std [A] (scalar).
template <class T>
Var<T> gaussian_entropy(const Var<T>& log_std) {
  const T per_dim = static_cast<T>(0.5 * (1.0 + std::log(2.0 * std::numbers::pi)));
  return add_scalar(sum(log_std), per_dim * static_cast<T>(log_std.size()));
}

}  // namespace mtrader::nets
