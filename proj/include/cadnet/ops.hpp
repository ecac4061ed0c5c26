#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "cadnet/tensor.hpp"

namespace cadnet {

using MatrixRM =
    Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<MatrixRM>;
using ConstMatMap = Eigen::Map<const MatrixRM>;

// ---------------------------------------------------------------------------
// elementwise
// ---------------------------------------------------------------------------

inline Tensor add(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) shape_fail("add", a.shape(), b.shape());
  std::vector<float> out(a.data().size());
  for (size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] + b.data()[i];
  return detail::make_result(
      "add", a.shape(), std::move(out), {a, b},
      [an = a.node(), bn = b.node()](TensorNode& r) {
        for (size_t i = 0; i < r.grad.size(); ++i) {
          detail::accumulate(an, i, r.grad[i]);
          detail::accumulate(bn, i, r.grad[i]);
        }
      });
}

inline Tensor sub(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) shape_fail("sub", a.shape(), b.shape());
  std::vector<float> out(a.data().size());
  for (size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] - b.data()[i];
  return detail::make_result(
      "sub", a.shape(), std::move(out), {a, b},
      [an = a.node(), bn = b.node()](TensorNode& r) {
        for (size_t i = 0; i < r.grad.size(); ++i) {
          detail::accumulate(an, i, r.grad[i]);
          detail::accumulate(bn, i, -r.grad[i]);
        }
      });
}

inline Tensor mul(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) shape_fail("mul", a.shape(), b.shape());
  std::vector<float> out(a.data().size());
  for (size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] * b.data()[i];
  return detail::make_result(
      "mul", a.shape(), std::move(out), {a, b},
      [an = a.node(), bn = b.node()](TensorNode& r) {
        for (size_t i = 0; i < r.grad.size(); ++i) {
          detail::accumulate(an, i, r.grad[i] * bn->data[i]);
          detail::accumulate(bn, i, r.grad[i] * an->data[i]);
        }
      });
}

inline Tensor scale(const Tensor& a, float s) {
  std::vector<float> out(a.data().size());
  for (size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] * s;
  return detail::make_result(
      "scale", a.shape(), std::move(out), {a},
      [an = a.node(), s](TensorNode& r) {
        for (size_t i = 0; i < r.grad.size(); ++i)
          detail::accumulate(an, i, r.grad[i] * s);
      });
}

inline Tensor neg(const Tensor& a) { return scale(a, -1.0f); }

inline Tensor relu(const Tensor& a) {
  std::vector<float> out(a.data().size());
  for (size_t i = 0; i < out.size(); ++i) out[i] = std::max(a.data()[i], 0.0f);
  return detail::make_result(
      "relu", a.shape(), std::move(out), {a},
      [an = a.node()](TensorNode& r) {
        for (size_t i = 0; i < r.grad.size(); ++i)
          if (an->data[i] > 0.0f) detail::accumulate(an, i, r.grad[i]);
      });
}

inline Tensor leaky_relu(const Tensor& a, float slope = 0.2f) {
  std::vector<float> out(a.data().size());
  for (size_t i = 0; i < out.size(); ++i) {
    float x = a.data()[i];
    out[i] = x > 0.0f ? x : slope * x;
  }
  return detail::make_result(
      "leaky_relu", a.shape(), std::move(out), {a},
      [an = a.node(), slope](TensorNode& r) {
        for (size_t i = 0; i < r.grad.size(); ++i)
          detail::accumulate(an, i,
                             r.grad[i] * (an->data[i] > 0.0f ? 1.0f : slope));
      });
}

inline Tensor sigmoid(const Tensor& a) {
  std::vector<float> out(a.data().size());
  for (size_t i = 0; i < out.size(); ++i)
    out[i] = 1.0f / (1.0f + std::exp(-a.data()[i]));
  auto rn = std::make_shared<std::vector<float>>(out);
  return detail::make_result(
      "sigmoid", a.shape(), std::move(out), {a},
      [an = a.node(), rn](TensorNode& r) {
        for (size_t i = 0; i < r.grad.size(); ++i) {
          float y = (*rn)[i];
          detail::accumulate(an, i, r.grad[i] * y * (1.0f - y));
        }
      });
}

inline Tensor log_op(const Tensor& a) {
  std::vector<float> out(a.data().size());
  for (size_t i = 0; i < out.size(); ++i) out[i] = std::log(a.data()[i]);
  return detail::make_result(
      "log", a.shape(), std::move(out), {a},
      [an = a.node()](TensorNode& r) {
        for (size_t i = 0; i < r.grad.size(); ++i)
          detail::accumulate(an, i, r.grad[i] / an->data[i]);
      });
}

inline Tensor sqrt_op(const Tensor& a) {
  std::vector<float> out(a.data().size());
  for (size_t i = 0; i < out.size(); ++i)
    out[i] = std::sqrt(std::max(a.data()[i], 0.0f));
  auto rn = std::make_shared<std::vector<float>>(out);
  return detail::make_result(
      "sqrt", a.shape(), std::move(out), {a},
      [an = a.node(), rn](TensorNode& r) {
        // subgradient 0 at the origin
        for (size_t i = 0; i < r.grad.size(); ++i)
          if ((*rn)[i] > 1e-12f)
            detail::accumulate(an, i, r.grad[i] * 0.5f / (*rn)[i]);
      });
}

inline Tensor max_with_scalar(const Tensor& a, float c) {
  std::vector<float> out(a.data().size());
  for (size_t i = 0; i < out.size(); ++i) out[i] = std::max(a.data()[i], c);
  return detail::make_result(
      "max_with_scalar", a.shape(), std::move(out), {a},
      [an = a.node(), c](TensorNode& r) {
        for (size_t i = 0; i < r.grad.size(); ++i)
          if (an->data[i] > c) detail::accumulate(an, i, r.grad[i]);
      });
}

inline Tensor min_with_scalar(const Tensor& a, float c) {
  std::vector<float> out(a.data().size());
  for (size_t i = 0; i < out.size(); ++i) out[i] = std::min(a.data()[i], c);
  return detail::make_result(
      "min_with_scalar", a.shape(), std::move(out), {a},
      [an = a.node(), c](TensorNode& r) {
        for (size_t i = 0; i < r.grad.size(); ++i)
          if (an->data[i] < c) detail::accumulate(an, i, r.grad[i]);
      });
}

inline Tensor clamp(const Tensor& a, float lo, float hi) {
  return min_with_scalar(max_with_scalar(a, lo), hi);
}

inline Tensor add_scalar(const Tensor& a, float c) {
  std::vector<float> out(a.data().size());
  for (size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] + c;
  return detail::make_result(
      "add_scalar", a.shape(), std::move(out), {a},
      [an = a.node()](TensorNode& r) {
        for (size_t i = 0; i < r.grad.size(); ++i)
          detail::accumulate(an, i, r.grad[i]);
      });
}

// ---------------------------------------------------------------------------
// reductions
// ---------------------------------------------------------------------------

inline Tensor sum_all(const Tensor& a) {
  double acc = 0.0;
  for (float v : a.data()) acc += v;
  return detail::make_result(
      "sum_all", {1}, {static_cast<float>(acc)}, {a},
      [an = a.node()](TensorNode& r) {
        for (size_t i = 0; i < an->data.size(); ++i)
          detail::accumulate(an, i, r.grad[0]);
      });
}

inline Tensor mean_all(const Tensor& a) {
  double acc = 0.0;
  for (float v : a.data()) acc += v;
  float inv = 1.0f / static_cast<float>(a.data().size());
  return detail::make_result(
      "mean_all", {1}, {static_cast<float>(acc) * inv}, {a},
      [an = a.node(), inv](TensorNode& r) {
        for (size_t i = 0; i < an->data.size(); ++i)
          detail::accumulate(an, i, r.grad[0] * inv);
      });
}

// mean of absolute values; ℓ1 subgradient at zero is 0
inline Tensor l1_mean(const Tensor& a) {
  double acc = 0.0;
  for (float v : a.data()) acc += std::fabs(v);
  float inv = 1.0f / static_cast<float>(a.data().size());
  return detail::make_result(
      "l1_mean", {1}, {static_cast<float>(acc) * inv}, {a},
      [an = a.node(), inv](TensorNode& r) {
        for (size_t i = 0; i < an->data.size(); ++i) {
          float x = an->data[i];
          float s = x > 0.0f ? 1.0f : (x < 0.0f ? -1.0f : 0.0f);
          detail::accumulate(an, i, r.grad[0] * inv * s);
        }
      });
}

// ---------------------------------------------------------------------------
// linear algebra
// ---------------------------------------------------------------------------

inline Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.ndim() != 2 || b.ndim() != 2 || a.dim(1) != b.dim(0))
    shape_fail("matmul", a.shape(), b.shape());
  int n = a.dim(0), k = a.dim(1), m = b.dim(1);
  std::vector<float> out(static_cast<size_t>(n) * m);
  ConstMatMap A(a.data().data(), n, k), B(b.data().data(), k, m);
  MatMap(out.data(), n, m).noalias() = A * B;
  return detail::make_result(
      "matmul", {n, m}, std::move(out), {a, b},
      [an = a.node(), bn = b.node(), n, k, m](TensorNode& r) {
        ConstMatMap G(r.grad.data(), n, m);
        ConstMatMap A(an->data.data(), n, k), B(bn->data.data(), k, m);
        if (an->requires_grad) {
          an->ensure_grad();
          MatMap(an->grad.data(), n, k).noalias() += G * B.transpose();
        }
        if (bn->requires_grad) {
          bn->ensure_grad();
          MatMap(bn->grad.data(), k, m).noalias() += A.transpose() * G;
        }
      });
}

// (N,K) + (K) row-broadcast bias
inline Tensor add_bias(const Tensor& x, const Tensor& b) {
  if (x.ndim() != 2 || b.ndim() != 1 || x.dim(1) != b.dim(0))
    shape_fail("add_bias", x.shape(), b.shape());
  int n = x.dim(0), k = x.dim(1);
  std::vector<float> out(x.data().size());
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < k; ++j)
      out[static_cast<size_t>(i) * k + j] =
          x.data()[static_cast<size_t>(i) * k + j] + b.data()[j];
  return detail::make_result(
      "add_bias", x.shape(), std::move(out), {x, b},
      [xn = x.node(), bn = b.node(), n, k](TensorNode& r) {
        for (int i = 0; i < n; ++i)
          for (int j = 0; j < k; ++j) {
            float g = r.grad[static_cast<size_t>(i) * k + j];
            detail::accumulate(xn, static_cast<size_t>(i) * k + j, g);
            detail::accumulate(bn, static_cast<size_t>(j), g);
          }
      });
}

// ---------------------------------------------------------------------------
// softmax (rows of a 2-D tensor)
// ---------------------------------------------------------------------------

inline Tensor softmax(const Tensor& x) {
  if (x.ndim() != 2) throw ShapeError("softmax: expected 2-D logits, got " +
                                      shape_str(x.shape()));
  int n = x.dim(0), k = x.dim(1);
  std::vector<float> out(x.data().size());
  for (int i = 0; i < n; ++i) {
    const float* row = x.data().data() + static_cast<size_t>(i) * k;
    float* orow = out.data() + static_cast<size_t>(i) * k;
    float mx = row[0];
    for (int j = 1; j < k; ++j) mx = std::max(mx, row[j]);
    double denom = 0.0;
    for (int j = 0; j < k; ++j) denom += std::exp(static_cast<double>(row[j] - mx));
    for (int j = 0; j < k; ++j)
      orow[j] = static_cast<float>(std::exp(static_cast<double>(row[j] - mx)) / denom);
  }
  auto yn = std::make_shared<std::vector<float>>(out);
  return detail::make_result(
      "softmax", x.shape(), std::move(out), {x},
      [xn = x.node(), yn, n, k](TensorNode& r) {
        for (int i = 0; i < n; ++i) {
          const float* y = yn->data() + static_cast<size_t>(i) * k;
          const float* g = r.grad.data() + static_cast<size_t>(i) * k;
          double dot = 0.0;
          for (int j = 0; j < k; ++j) dot += static_cast<double>(g[j]) * y[j];
          for (int j = 0; j < k; ++j)
            detail::accumulate(xn, static_cast<size_t>(i) * k + j,
                               y[j] * (g[j] - static_cast<float>(dot)));
        }
      });
}

// ---------------------------------------------------------------------------
// concat on the last (channel) axis; leading dims must match
// ---------------------------------------------------------------------------

inline Tensor concat(const Tensor& a, const Tensor& b) {
  if (a.ndim() != b.ndim() || a.ndim() < 1)
    shape_fail("concat", a.shape(), b.shape());
  for (int i = 0; i + 1 < a.ndim(); ++i)
    if (a.dim(i) != b.dim(i)) shape_fail("concat", a.shape(), b.shape());
  int ca = a.dim(a.ndim() - 1), cb = b.dim(b.ndim() - 1);
  int64_t rows = numel(a.shape()) / ca;
  Shape oshape = a.shape();
  oshape.back() = ca + cb;
  std::vector<float> out(static_cast<size_t>(rows) * (ca + cb));
  for (int64_t r = 0; r < rows; ++r) {
    std::copy_n(a.data().data() + r * ca, ca, out.data() + r * (ca + cb));
    std::copy_n(b.data().data() + r * cb, cb, out.data() + r * (ca + cb) + ca);
  }
  return detail::make_result(
      "concat", std::move(oshape), std::move(out), {a, b},
      [an = a.node(), bn = b.node(), rows, ca, cb](TensorNode& r) {
        for (int64_t i = 0; i < rows; ++i) {
          for (int j = 0; j < ca; ++j)
            detail::accumulate(an, static_cast<size_t>(i * ca + j),
                               r.grad[static_cast<size_t>(i * (ca + cb) + j)]);
          for (int j = 0; j < cb; ++j)
            detail::accumulate(
                bn, static_cast<size_t>(i * cb + j),
                r.grad[static_cast<size_t>(i * (ca + cb) + ca + j)]);
        }
      });
}

// ---------------------------------------------------------------------------
// convolution / pooling on NHWC tensors
// ---------------------------------------------------------------------------

inline int conv_out_dim(int in, int kernel, int stride, int pad) {
  return (in + 2 * pad - kernel) / stride + 1;
}

namespace detail {

// im2col for one NHWC sample: rows are output pixels, columns (ky,kx,ic).
inline void im2col(const float* x, int h, int w, int c, int kh, int kw,
                   int stride, int pad, int oh, int ow, float* cols) {
  const int k = kh * kw * c;
  for (int oy = 0; oy < oh; ++oy)
    for (int ox = 0; ox < ow; ++ox) {
      float* row = cols + (static_cast<size_t>(oy) * ow + ox) * k;
      for (int ky = 0; ky < kh; ++ky) {
        int iy = oy * stride - pad + ky;
        for (int kx = 0; kx < kw; ++kx) {
          int ix = ox * stride - pad + kx;
          float* dst = row + (ky * kw + kx) * c;
          if (iy >= 0 && iy < h && ix >= 0 && ix < w)
            std::copy_n(x + (static_cast<size_t>(iy) * w + ix) * c, c, dst);
          else
            std::fill_n(dst, c, 0.0f);
        }
      }
    }
}

inline void col2im_add(const float* cols, int h, int w, int c, int kh, int kw,
                       int stride, int pad, int oh, int ow, float* dx) {
  const int k = kh * kw * c;
  for (int oy = 0; oy < oh; ++oy)
    for (int ox = 0; ox < ow; ++ox) {
      const float* row = cols + (static_cast<size_t>(oy) * ow + ox) * k;
      for (int ky = 0; ky < kh; ++ky) {
        int iy = oy * stride - pad + ky;
        if (iy < 0 || iy >= h) continue;
        for (int kx = 0; kx < kw; ++kx) {
          int ix = ox * stride - pad + kx;
          if (ix < 0 || ix >= w) continue;
          const float* src = row + (ky * kw + kx) * c;
          float* dst = dx + (static_cast<size_t>(iy) * w + ix) * c;
          for (int ch = 0; ch < c; ++ch) dst[ch] += src[ch];
        }
      }
    }
}

}  // namespace detail

// x: [N,H,W,C]; weight: [kh,kw,C,OC]; bias: [OC]
inline Tensor conv2d(const Tensor& x, const Tensor& weight, const Tensor& bias,
                     int stride = 1, int pad = 0) {
  if (x.ndim() != 4 || weight.ndim() != 4 || x.dim(3) != weight.dim(2))
    shape_fail("conv2d", x.shape(), weight.shape());
  const int n = x.dim(0), h = x.dim(1), w = x.dim(2), c = x.dim(3);
  const int kh = weight.dim(0), kw = weight.dim(1), oc = weight.dim(3);
  if (bias.ndim() != 1 || bias.dim(0) != oc)
    shape_fail("conv2d bias", bias.shape(), weight.shape());
  const int oh = conv_out_dim(h, kh, stride, pad);
  const int ow = conv_out_dim(w, kw, stride, pad);
  if (oh <= 0 || ow <= 0)
    throw ShapeError("conv2d: kernel " + shape_str(weight.shape()) +
                     " does not fit input " + shape_str(x.shape()));
  const int k = kh * kw * c;
  const int64_t p = static_cast<int64_t>(oh) * ow;

  std::vector<float> out(static_cast<size_t>(n) * p * oc);
  std::vector<float> cols(static_cast<size_t>(p) * k);
  ConstMatMap W(weight.data().data(), k, oc);
  for (int s = 0; s < n; ++s) {
    detail::im2col(x.data().data() + static_cast<size_t>(s) * h * w * c, h, w,
                   c, kh, kw, stride, pad, oh, ow, cols.data());
    MatMap O(out.data() + static_cast<size_t>(s) * p * oc, p, oc);
    O.noalias() = ConstMatMap(cols.data(), p, k) * W;
    for (int64_t i = 0; i < p; ++i)
      for (int j = 0; j < oc; ++j) O(i, j) += bias.data()[static_cast<size_t>(j)];
  }

  return detail::make_result(
      "conv2d", {n, oh, ow, oc}, std::move(out), {x, weight, bias},
      [xn = x.node(), wn = weight.node(), bn = bias.node(), n, h, w, c, kh, kw,
       oc, oh, ow, stride, pad, k, p](TensorNode& r) {
        std::vector<float> cols(static_cast<size_t>(p) * k);
        std::vector<float> dcols(static_cast<size_t>(p) * k);
        ConstMatMap W(wn->data.data(), k, oc);
        if (wn->requires_grad) wn->ensure_grad();
        if (xn->requires_grad) xn->ensure_grad();
        if (bn->requires_grad) bn->ensure_grad();
        for (int s = 0; s < n; ++s) {
          ConstMatMap G(r.grad.data() + static_cast<size_t>(s) * p * oc, p, oc);
          if (wn->requires_grad || bn->requires_grad)
            detail::im2col(xn->data.data() + static_cast<size_t>(s) * h * w * c,
                           h, w, c, kh, kw, stride, pad, oh, ow, cols.data());
          if (wn->requires_grad) {
            MatMap dW(wn->grad.data(), k, oc);
            dW.noalias() += ConstMatMap(cols.data(), p, k).transpose() * G;
          }
          if (bn->requires_grad)
            for (int64_t i = 0; i < p; ++i)
              for (int j = 0; j < oc; ++j) bn->grad[static_cast<size_t>(j)] += G(i, j);
          if (xn->requires_grad) {
            MatMap(dcols.data(), p, k).noalias() = G * W.transpose();
            detail::col2im_add(dcols.data(), h, w, c, kh, kw, stride, pad, oh,
                               ow,
                               xn->grad.data() + static_cast<size_t>(s) * h * w * c);
          }
        }
      });
}

inline Tensor avg_pool2d(const Tensor& x, int kernel, int stride, int pad = 0) {
  if (x.ndim() != 4)
    throw ShapeError("avg_pool2d: expected NHWC input, got " +
                     shape_str(x.shape()));
  const int n = x.dim(0), h = x.dim(1), w = x.dim(2), c = x.dim(3);
  const int oh = conv_out_dim(h, kernel, stride, pad);
  const int ow = conv_out_dim(w, kernel, stride, pad);
  if (oh <= 0 || ow <= 0)
    throw ShapeError("avg_pool2d: window does not fit input " +
                     shape_str(x.shape()));
  const float inv = 1.0f / static_cast<float>(kernel * kernel);
  std::vector<float> out(static_cast<size_t>(n) * oh * ow * c, 0.0f);
  for (int s = 0; s < n; ++s)
    for (int oy = 0; oy < oh; ++oy)
      for (int ox = 0; ox < ow; ++ox)
        for (int ky = 0; ky < kernel; ++ky) {
          int iy = oy * stride - pad + ky;
          if (iy < 0 || iy >= h) continue;
          for (int kx = 0; kx < kernel; ++kx) {
            int ix = ox * stride - pad + kx;
            if (ix < 0 || ix >= w) continue;
            const float* src =
                x.data().data() + ((static_cast<size_t>(s) * h + iy) * w + ix) * c;
            float* dst =
                out.data() + ((static_cast<size_t>(s) * oh + oy) * ow + ox) * c;
            for (int ch = 0; ch < c; ++ch) dst[ch] += src[ch] * inv;
          }
        }
  return detail::make_result(
      "avg_pool2d", {n, oh, ow, c}, std::move(out), {x},
      [xn = x.node(), n, h, w, c, oh, ow, kernel, stride, pad,
       inv](TensorNode& r) {
        if (!xn->requires_grad) return;
        xn->ensure_grad();
        for (int s = 0; s < n; ++s)
          for (int oy = 0; oy < oh; ++oy)
            for (int ox = 0; ox < ow; ++ox)
              for (int ky = 0; ky < kernel; ++ky) {
                int iy = oy * stride - pad + ky;
                if (iy < 0 || iy >= h) continue;
                for (int kx = 0; kx < kernel; ++kx) {
                  int ix = ox * stride - pad + kx;
                  if (ix < 0 || ix >= w) continue;
                  const float* g = r.grad.data() +
                                   ((static_cast<size_t>(s) * oh + oy) * ow + ox) * c;
                  float* dst = xn->grad.data() +
                               ((static_cast<size_t>(s) * h + iy) * w + ix) * c;
                  for (int ch = 0; ch < c; ++ch) dst[ch] += g[ch] * inv;
                }
              }
      });
}

// [N,H,W,C] -> [N,C], mean over spatial positions
inline Tensor global_avg_pool(const Tensor& x) {
  if (x.ndim() != 4)
    throw ShapeError("global_avg_pool: expected NHWC input, got " +
                     shape_str(x.shape()));
  const int n = x.dim(0), h = x.dim(1), w = x.dim(2), c = x.dim(3);
  const float inv = 1.0f / static_cast<float>(h * w);
  std::vector<float> out(static_cast<size_t>(n) * c, 0.0f);
  for (int s = 0; s < n; ++s)
    for (int i = 0; i < h * w; ++i)
      for (int ch = 0; ch < c; ++ch)
        out[static_cast<size_t>(s) * c + ch] +=
            x.data()[(static_cast<size_t>(s) * h * w + i) * c + ch] * inv;
  return detail::make_result(
      "global_avg_pool", {n, c}, std::move(out), {x},
      [xn = x.node(), n, h, w, c, inv](TensorNode& r) {
        for (int s = 0; s < n; ++s)
          for (int i = 0; i < h * w; ++i)
            for (int ch = 0; ch < c; ++ch)
              detail::accumulate(
                  xn, (static_cast<size_t>(s) * h * w + i) * c + ch,
                  r.grad[static_cast<size_t>(s) * c + ch] * inv);
      });
}

// ---------------------------------------------------------------------------
// bilinear resize (corner-aligned sampling grid), NHWC
// ---------------------------------------------------------------------------

namespace detail {

struct LerpCoef {
  int lo;
  int hi;
  float t;  // weight of hi
};

inline std::vector<LerpCoef> lerp_grid(int in, int out) {
  std::vector<LerpCoef> g(static_cast<size_t>(out));
  for (int i = 0; i < out; ++i) {
    float src = (out == 1) ? 0.0f
                           : static_cast<float>(i) * static_cast<float>(in - 1) /
                                 static_cast<float>(out - 1);
    int lo = static_cast<int>(src);
    if (lo >= in - 1) lo = in - 1;
    int hi = std::min(lo + 1, in - 1);
    g[static_cast<size_t>(i)] = {lo, hi, src - static_cast<float>(lo)};
  }
  return g;
}

}  // namespace detail

inline Tensor bilinear_resize(const Tensor& x, int out_h, int out_w) {
  if (x.ndim() != 4)
    throw ShapeError("bilinear_resize: expected NHWC input, got " +
                     shape_str(x.shape()));
  if (out_h < 1 || out_w < 1)
    throw ShapeError("bilinear_resize: invalid target size");
  const int n = x.dim(0), h = x.dim(1), w = x.dim(2), c = x.dim(3);
  auto gy = detail::lerp_grid(h, out_h);
  auto gx = detail::lerp_grid(w, out_w);
  std::vector<float> out(static_cast<size_t>(n) * out_h * out_w * c);
  for (int s = 0; s < n; ++s) {
    const float* src = x.data().data() + static_cast<size_t>(s) * h * w * c;
    for (int oy = 0; oy < out_h; ++oy)
      for (int ox = 0; ox < out_w; ++ox) {
        const auto& cy = gy[static_cast<size_t>(oy)];
        const auto& cx = gx[static_cast<size_t>(ox)];
        float* dst = out.data() +
                     ((static_cast<size_t>(s) * out_h + oy) * out_w + ox) * c;
        for (int ch = 0; ch < c; ++ch) {
          float v00 = src[(static_cast<size_t>(cy.lo) * w + cx.lo) * c + ch];
          float v01 = src[(static_cast<size_t>(cy.lo) * w + cx.hi) * c + ch];
          float v10 = src[(static_cast<size_t>(cy.hi) * w + cx.lo) * c + ch];
          float v11 = src[(static_cast<size_t>(cy.hi) * w + cx.hi) * c + ch];
          float top = v00 + (v01 - v00) * cx.t;
          float bot = v10 + (v11 - v10) * cx.t;
          dst[ch] = top + (bot - top) * cy.t;
        }
      }
  }
  return detail::make_result(
      "bilinear_resize", {n, out_h, out_w, c}, std::move(out), {x},
      [xn = x.node(), n, h, w, c, out_h, out_w, gy, gx](TensorNode& r) {
        if (!xn->requires_grad) return;
        xn->ensure_grad();
        for (int s = 0; s < n; ++s) {
          float* dx = xn->grad.data() + static_cast<size_t>(s) * h * w * c;
          for (int oy = 0; oy < out_h; ++oy)
            for (int ox = 0; ox < out_w; ++ox) {
              const auto& cy = gy[static_cast<size_t>(oy)];
              const auto& cx = gx[static_cast<size_t>(ox)];
              const float* g =
                  r.grad.data() +
                  ((static_cast<size_t>(s) * out_h + oy) * out_w + ox) * c;
              for (int ch = 0; ch < c; ++ch) {
                float w00 = (1 - cy.t) * (1 - cx.t), w01 = (1 - cy.t) * cx.t;
                float w10 = cy.t * (1 - cx.t), w11 = cy.t * cx.t;
                dx[(static_cast<size_t>(cy.lo) * w + cx.lo) * c + ch] += g[ch] * w00;
                dx[(static_cast<size_t>(cy.lo) * w + cx.hi) * c + ch] += g[ch] * w01;
                dx[(static_cast<size_t>(cy.hi) * w + cx.lo) * c + ch] += g[ch] * w10;
                dx[(static_cast<size_t>(cy.hi) * w + cx.hi) * c + ch] += g[ch] * w11;
              }
            }
        }
      });
}

// ---------------------------------------------------------------------------
// embedding-space helpers for the triplet loss
// ---------------------------------------------------------------------------

// U: [B,D] -> [B,B] matrix of squared Euclidean distances
inline Tensor pairwise_sqdist(const Tensor& u) {
  if (u.ndim() != 2)
    throw ShapeError("pairwise_sqdist: expected [B,D] input, got " +
                     shape_str(u.shape()));
  const int b = u.dim(0), d = u.dim(1);
  std::vector<float> out(static_cast<size_t>(b) * b, 0.0f);
  for (int i = 0; i < b; ++i)
    for (int j = 0; j < b; ++j) {
      double acc = 0.0;
      const float* ui = u.data().data() + static_cast<size_t>(i) * d;
      const float* uj = u.data().data() + static_cast<size_t>(j) * d;
      for (int k = 0; k < d; ++k) {
        float diff = ui[k] - uj[k];
        acc += static_cast<double>(diff) * diff;
      }
      out[static_cast<size_t>(i) * b + j] = static_cast<float>(acc);
    }
  return detail::make_result(
      "pairwise_sqdist", {b, b}, std::move(out), {u},
      [un = u.node(), b, d](TensorNode& r) {
        if (!un->requires_grad) return;
        un->ensure_grad();
        for (int i = 0; i < b; ++i)
          for (int j = 0; j < b; ++j) {
            float g = r.grad[static_cast<size_t>(i) * b + j];
            if (g == 0.0f) continue;
            const float* ui = un->data.data() + static_cast<size_t>(i) * d;
            const float* uj = un->data.data() + static_cast<size_t>(j) * d;
            float* gi = un->grad.data() + static_cast<size_t>(i) * d;
            float* gj = un->grad.data() + static_cast<size_t>(j) * d;
            for (int k = 0; k < d; ++k) {
              float diff = 2.0f * (ui[k] - uj[k]) * g;
              gi[k] += diff;
              gj[k] -= diff;
            }
          }
      });
}

// picks flat elements; backward scatter-adds
inline Tensor select_index(const Tensor& x, const std::vector<int64_t>& idx) {
  std::vector<float> out(idx.size());
  for (size_t i = 0; i < idx.size(); ++i) {
    if (idx[i] < 0 || idx[i] >= x.size())
      throw ShapeError("select_index: index " + std::to_string(idx[i]) +
                       " out of range for " + shape_str(x.shape()));
    out[i] = x.data()[static_cast<size_t>(idx[i])];
  }
  return detail::make_result(
      "select_index", {static_cast<int>(idx.size())}, std::move(out), {x},
      [xn = x.node(), idx](TensorNode& r) {
        for (size_t i = 0; i < idx.size(); ++i)
          detail::accumulate(xn, static_cast<size_t>(idx[i]), r.grad[i]);
      });
}

}  // namespace cadnet
