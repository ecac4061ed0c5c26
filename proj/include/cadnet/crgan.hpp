#pragma once

#include <string>
#include <vector>

#include "cadnet/ops.hpp"
#include "cadnet/optim.hpp"
#include "cadnet/rng.hpp"

namespace cadnet {

struct ModelConfig {
  int height = 32;
  int width = 16;
  std::vector<int> channels = {16, 32, 64, 64};  // encoder stack, stride-2 each
  float leaky_slope = 0.2f;
  float disc_eps = 1e-7f;          // clamp before log
  int image_adv_real_weight = 2;   // the printed image-level objective counts
                                   // the real term twice; 1 restores the
                                   // conventional single count

  int feature_dim() const { return channels.back(); }
  int feature_h() const {
    int h = height;
    for (size_t i = 0; i < channels.size(); ++i) h = (h + 1) / 2;
    return h;
  }
  int feature_w() const {
    int w = width;
    for (size_t i = 0; i < channels.size(); ++i) w = (w + 1) / 2;
    return w;
  }
};

namespace detail {

// Kaiming fan-in init for a [kh,kw,ic,oc] conv kernel
inline Tensor conv_weight(int kh, int kw, int ic, int oc, Rng& rng) {
  Tensor w = Tensor::zeros({kh, kw, ic, oc});
  float std = std::sqrt(2.0f / static_cast<float>(kh * kw * ic));
  for (float& v : w.data()) v = std * rng.normal();
  return w;
}

}  // namespace detail

struct ConvLayer {
  Tensor w, b;
  int stride = 1, pad = 1;

  ConvLayer() = default;
  ConvLayer(ParamGroup& group, const std::string& name, int kh, int kw, int ic,
            int oc, int stride, int pad, Rng& rng)
      : stride(stride), pad(pad) {
    w = group.add(name + ".w", detail::conv_weight(kh, kw, ic, oc, rng));
    b = group.add(name + ".b", Tensor::zeros({oc}));
  }

  Tensor operator()(const Tensor& x) const { return conv2d(x, w, b, stride, pad); }
};

// Cross-resolution encoder: stride-2 conv + leaky_relu stack. Also used for
// the HR encoder F (same family, always independent weights).
class Encoder {
 public:
  Encoder(const ModelConfig& cfg, Rng& rng, const std::string& prefix = "E")
      : slope_(cfg.leaky_slope) {
    int in = 3;
    for (size_t i = 0; i < cfg.channels.size(); ++i) {
      layers_.emplace_back(params_, prefix + ".conv" + std::to_string(i), 3, 3,
                           in, cfg.channels[i], 2, 1, rng);
      in = cfg.channels[i];
    }
  }

  struct Out {
    std::vector<Tensor> stages;  // post-activation output of each stage
    Tensor f;                    // final feature map, [N,h,w,d]
  };

  Out forward(const Tensor& x) const {
    Out out;
    Tensor h = x;
    for (const auto& layer : layers_) {
      h = leaky_relu(layer(h), slope_);
      out.stages.push_back(h);
    }
    out.f = h;
    return out;
  }

  ParamGroup& params() { return params_; }
  const ParamGroup& params() const { return params_; }

 private:
  std::vector<ConvLayer> layers_;
  ParamGroup params_;
  float slope_;
};

// HR decoder: mirrors the encoder with bilinear x2 upsampling, channel-concat
// skip connections from the matching encoder stage, and a final sigmoid.
class Decoder {
 public:
  Decoder(const ModelConfig& cfg, Rng& rng) : slope_(cfg.leaky_slope) {
    const auto& ch = cfg.channels;
    int n = static_cast<int>(ch.size());
    int in = ch[static_cast<size_t>(n - 1)];
    for (int i = n - 2; i >= 0; --i) {
      int skip = ch[static_cast<size_t>(i)];
      layers_.emplace_back(params_, "G.conv" + std::to_string(n - 2 - i), 3, 3,
                           in + skip, ch[static_cast<size_t>(i)], 1, 1, rng);
      in = ch[static_cast<size_t>(i)];
    }
    out_layer_ = ConvLayer(params_, "G.out", 3, 3, in, 3, 1, 1, rng);
  }

  // f: encoder output; stages: the same forward pass's encoder stages
  Tensor forward(const Tensor& f, const std::vector<Tensor>& stages,
                 int out_h, int out_w) const {
    Tensor h = f;
    int n = static_cast<int>(stages.size());
    for (size_t i = 0; i < layers_.size(); ++i) {
      const Tensor& skip = stages[static_cast<size_t>(n - 2 - static_cast<int>(i))];
      h = bilinear_resize(h, skip.dim(1), skip.dim(2));
      h = leaky_relu(layers_[i](concat(h, skip)), slope_);
    }
    h = bilinear_resize(h, out_h, out_w);
    return sigmoid(out_layer_(h));
  }

  ParamGroup& params() { return params_; }
  const ParamGroup& params() const { return params_; }

 private:
  std::vector<ConvLayer> layers_;
  ConvLayer out_layer_;
  ParamGroup params_;
  float slope_;
};

// Feature-space resolution discriminator: 3 stride-1 convs to a 1-channel
// patch map, sigmoid per patch; the patch map is averaged to a scalar inside
// the losses.
class FeatureDiscriminator {
 public:
  FeatureDiscriminator(const ModelConfig& cfg, Rng& rng)
      : slope_(cfg.leaky_slope) {
    int d = cfg.feature_dim();
    c1_ = ConvLayer(params_, "DF.conv0", 3, 3, d, 64, 1, 1, rng);
    c2_ = ConvLayer(params_, "DF.conv1", 3, 3, 64, 32, 1, 1, rng);
    c3_ = ConvLayer(params_, "DF.conv2", 3, 3, 32, 1, 1, 1, rng);
  }

  // [N,h,w,d] -> [N,h,w,1] patch probabilities
  Tensor forward(const Tensor& f) const {
    Tensor h = leaky_relu(c1_(f), slope_);
    h = leaky_relu(c2_(h), slope_);
    return sigmoid(c3_(h));
  }

  ParamGroup& params() { return params_; }
  const ParamGroup& params() const { return params_; }

 private:
  ConvLayer c1_, c2_, c3_;
  ParamGroup params_;
  float slope_;
};

// Image-space discriminator: 4 stride-2 convs, global pool, linear, sigmoid.
class ImageDiscriminator {
 public:
  ImageDiscriminator(const ModelConfig& cfg, Rng& rng)
      : slope_(cfg.leaky_slope) {
    int in = 3;
    for (size_t i = 0; i < cfg.channels.size(); ++i) {
      layers_.emplace_back(params_, "DI.conv" + std::to_string(i), 3, 3, in,
                           cfg.channels[i], 2, 1, rng);
      in = cfg.channels[i];
    }
    Tensor w = Tensor::zeros({in, 1});
    Rng wr = rng.split(7);
    float std = std::sqrt(2.0f / static_cast<float>(in));
    for (float& v : w.data()) v = std * wr.normal();
    fc_w_ = params_.add("DI.fc.w", w);
    fc_b_ = params_.add("DI.fc.b", Tensor::zeros({1}));
  }

  // [N,H,W,3] -> [N,1] real/fake probabilities
  Tensor forward(const Tensor& x) const {
    Tensor h = x;
    for (const auto& layer : layers_) h = leaky_relu(layer(h), slope_);
    return sigmoid(add_bias(matmul(global_avg_pool(h), fc_w_), fc_b_));
  }

  ParamGroup& params() { return params_; }
  const ParamGroup& params() const { return params_; }

 private:
  std::vector<ConvLayer> layers_;
  Tensor fc_w_, fc_b_;
  ParamGroup params_;
  float slope_;
};

// The four CRGAN components with non-shared parameters.
struct Crgan {
  ModelConfig config;
  Encoder encoder;
  Decoder decoder;
  FeatureDiscriminator disc_f;
  ImageDiscriminator disc_i;

  Crgan(const ModelConfig& cfg, Rng& rng)
      : config(cfg),
        encoder(cfg, rng, "E"),
        decoder(cfg, rng),
        disc_f(cfg, rng),
        disc_i(cfg, rng) {}

  Tensor recover(const Tensor& x) const {
    auto enc = encoder.forward(x);
    return decoder.forward(enc.f, enc.stages, config.height, config.width);
  }
};

// ---------------------------------------------------------------------------
// adversarial / reconstruction losses
// ---------------------------------------------------------------------------

struct AdvLoss {
  Tensor d_loss;  // what the discriminator minimizes
  Tensor g_loss;  // non-saturating flipped-label term for the generator side
};

namespace detail {

inline Tensor mean_log(const Tensor& p, float eps) {
  return mean_all(log_op(clamp(p, eps, 1.0f - eps)));
}

inline Tensor mean_log_one_minus(const Tensor& p, float eps) {
  return mean_all(log_op(clamp(add_scalar(neg(p), 1.0f), eps, 1.0f - eps)));
}

}  // namespace detail

// probability-level core of the feature adversarial loss
inline AdvLoss adv_feature_from_probs(const Tensor& p_hr, const Tensor& p_lr,
                                      float eps = 1e-7f) {
  AdvLoss out;
  out.d_loss = neg(add(detail::mean_log(p_hr, eps),
                       detail::mean_log_one_minus(p_lr, eps)));
  out.g_loss = neg(detail::mean_log(p_lr, eps));
  return out;
}

// Feature-level adversarial loss. The discriminator maximizes
//   E[log D_F(f_H)] + E[log(1 - D_F(f_L))]
// so d_loss is its negation; g_loss is the non-saturating term for E.
inline AdvLoss loss_adv_feature(const FeatureDiscriminator& disc,
                                const Tensor& f_hr, const Tensor& f_lr,
                                float eps = 1e-7f) {
  if (f_hr.shape() != f_lr.shape())
    shape_fail("loss_adv_feature", f_hr.shape(), f_lr.shape());
  return adv_feature_from_probs(disc.forward(f_hr), disc.forward(f_lr), eps);
}

// HR reconstruction loss: l1 on the HR branch plus l1 on the recovered-LR
// branch against each sample's own HR ground truth.
inline Tensor loss_rec(const Tensor& recovered_hr, const Tensor& truth_hr,
                       const Tensor& recovered_lr, const Tensor& truth_lr) {
  if (recovered_hr.shape() != truth_hr.shape())
    shape_fail("loss_rec (HR branch)", recovered_hr.shape(), truth_hr.shape());
  if (recovered_lr.shape() != truth_lr.shape())
    shape_fail("loss_rec (LR branch)", recovered_lr.shape(), truth_lr.shape());
  return add(l1_mean(sub(recovered_hr, truth_hr)),
             l1_mean(sub(recovered_lr, truth_lr)));
}

// probability-level core of the image adversarial loss
inline AdvLoss adv_image_from_probs(const Tensor& p_real,
                                    const Tensor& p_fake_lr,
                                    const Tensor& p_fake_hr, float eps = 1e-7f,
                                    int real_weight = 2) {
  AdvLoss out;
  out.d_loss =
      neg(add(scale(detail::mean_log(p_real, eps), static_cast<float>(real_weight)),
              add(detail::mean_log_one_minus(p_fake_lr, eps),
                  detail::mean_log_one_minus(p_fake_hr, eps))));
  out.g_loss = neg(add(detail::mean_log(p_fake_lr, eps),
                       detail::mean_log(p_fake_hr, eps)));
  return out;
}

// Image-level adversarial loss, implementing the printed objective literally:
// the real term E[log D_I(x_H)] appears real_weight (default 2) times.
inline AdvLoss loss_adv_image(const ImageDiscriminator& disc,
                              const Tensor& x_hr, const Tensor& recovered_lr,
                              const Tensor& recovered_hr, float eps = 1e-7f,
                              int real_weight = 2) {
  return adv_image_from_probs(disc.forward(x_hr), disc.forward(recovered_lr),
                              disc.forward(recovered_hr), eps, real_weight);
}

}  // namespace cadnet
