#pragma once

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "cadnet/ops.hpp"

namespace cadnet {

// Plain H×W×3 pixel buffer in [0,1], row-major HWC. This is the raw-image
// side of the pipeline; tensors enter only at batch assembly.
struct Image {
  int h = 0;
  int w = 0;
  std::vector<float> px;  // h*w*3

  float& at(int y, int x, int c) {
    return px[(static_cast<size_t>(y) * w + x) * 3 + c];
  }
  float at(int y, int x, int c) const {
    return px[(static_cast<size_t>(y) * w + x) * 3 + c];
  }

  static Image filled(int h, int w, float v = 0.0f) {
    return Image{h, w, std::vector<float>(static_cast<size_t>(h) * w * 3, v)};
  }
};

struct LabeledImage {
  Image pixels;  // canonical H×W regardless of rate; LR is stored up-resized
  int identity = 0;
  int camera = 0;
  int rate = 1;  // down-sampling rate r; 1 = original HR
};

// Block average over r×r cells, ceil division at the edges (edge cells are
// smaller and averaged over the pixels they actually cover).
inline Image block_downsample(const Image& img, int rate) {
  int dh = (img.h + rate - 1) / rate;
  int dw = (img.w + rate - 1) / rate;
  Image out = Image::filled(dh, dw);
  for (int by = 0; by < dh; ++by)
    for (int bx = 0; bx < dw; ++bx) {
      int y0 = by * rate, y1 = std::min(y0 + rate, img.h);
      int x0 = bx * rate, x1 = std::min(x0 + rate, img.w);
      float inv = 1.0f / static_cast<float>((y1 - y0) * (x1 - x0));
      for (int c = 0; c < 3; ++c) {
        float acc = 0.0f;
        for (int y = y0; y < y1; ++y)
          for (int x = x0; x < x1; ++x) acc += img.at(y, x, c);
        out.at(by, bx, c) = acc * inv;
      }
    }
  return out;
}

// Corner-aligned bilinear resize; shares the sampling grid with the tensor op.
inline Image bilinear_resize(const Image& img, int out_h, int out_w) {
  auto gy = detail::lerp_grid(img.h, out_h);
  auto gx = detail::lerp_grid(img.w, out_w);
  Image out = Image::filled(out_h, out_w);
  for (int y = 0; y < out_h; ++y)
    for (int x = 0; x < out_w; ++x) {
      const auto& cy = gy[static_cast<size_t>(y)];
      const auto& cx = gx[static_cast<size_t>(x)];
      for (int c = 0; c < 3; ++c) {
        float top = img.at(cy.lo, cx.lo, c) +
                    (img.at(cy.lo, cx.hi, c) - img.at(cy.lo, cx.lo, c)) * cx.t;
        float bot = img.at(cy.hi, cx.lo, c) +
                    (img.at(cy.hi, cx.hi, c) - img.at(cy.hi, cx.lo, c)) * cx.t;
        out.at(y, x, c) = top + (bot - top) * cy.t;
      }
    }
  return out;
}

// Synthesizes the LR counterpart: block-average down-sample to ⌈H/r⌉×⌈W/r⌉,
// then bilinear up-resize back to the canonical size.
inline Image synth_lr(const Image& img, int rate) {
  if (rate < 2)
    throw std::invalid_argument("synth_lr: rate must be >= 2, got " +
                                std::to_string(rate));
  Image lr = bilinear_resize(block_downsample(img, rate), img.h, img.w);
  for (float& v : lr.px) v = std::clamp(v, 0.0f, 1.0f);
  return lr;
}

inline LabeledImage synth_lr(const LabeledImage& img, int rate) {
  return LabeledImage{synth_lr(img.pixels, rate), img.identity, img.camera,
                      rate};
}

// Image <-> tensor bridges (NHWC with N = batch).
inline Tensor images_to_tensor(const std::vector<const Image*>& imgs) {
  if (imgs.empty()) throw std::invalid_argument("images_to_tensor: empty batch");
  int h = imgs[0]->h, w = imgs[0]->w;
  Tensor t = Tensor::zeros({static_cast<int>(imgs.size()), h, w, 3});
  size_t stride = static_cast<size_t>(h) * w * 3;
  for (size_t i = 0; i < imgs.size(); ++i) {
    if (imgs[i]->h != h || imgs[i]->w != w)
      throw std::invalid_argument("images_to_tensor: mixed image sizes");
    std::copy(imgs[i]->px.begin(), imgs[i]->px.end(),
              t.data().begin() + static_cast<int64_t>(i * stride));
  }
  return t;
}

inline Tensor image_to_tensor(const Image& img) {
  return images_to_tensor({&img});
}

inline Image tensor_to_image(const Tensor& t, int sample = 0) {
  if (t.ndim() != 4 || t.dim(3) != 3)
    throw std::invalid_argument("tensor_to_image: expected NHWC/3 tensor");
  Image out = Image::filled(t.dim(1), t.dim(2));
  size_t stride = out.px.size();
  std::copy_n(t.data().begin() + static_cast<int64_t>(sample * stride), stride,
              out.px.begin());
  return out;
}

}  // namespace cadnet
