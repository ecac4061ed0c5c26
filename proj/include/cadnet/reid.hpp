#pragma once

#include <string>
#include <vector>

#include "cadnet/crgan.hpp"

namespace cadnet {

// Which representation feeds the classifier/embedding (ablation variants).
enum class JointVariant { Full, FOnly, GOnly };

inline std::string to_string(JointVariant v) {
  switch (v) {
    case JointVariant::FOnly: return "f_only";
    case JointVariant::GOnly: return "g_only";
    default: return "full";
  }
}

inline JointVariant joint_variant_from_string(const std::string& s) {
  if (s == "f_only") return JointVariant::FOnly;
  if (s == "g_only") return JointVariant::GOnly;
  if (s == "full") return JointVariant::Full;
  throw std::invalid_argument("unknown joint variant: " + s);
}

// Classifier C: global average pooling + one fully connected layer + softmax.
class Classifier {
 public:
  Classifier(int input_dim, int num_classes, Rng& rng)
      : input_dim_(input_dim) {
    Tensor w = Tensor::zeros({input_dim, num_classes});
    float std = std::sqrt(2.0f / static_cast<float>(input_dim));
    for (float& v : w.data()) v = std * rng.normal();
    w_ = params_.add("C.fc.w", w);
    b_ = params_.add("C.fc.b", Tensor::zeros({num_classes}));
  }

  // u: pooled joint representation, [N, input_dim] -> class probabilities
  Tensor forward(const Tensor& u) const {
    return softmax(add_bias(matmul(u, w_), b_));
  }

  int input_dim() const { return input_dim_; }
  ParamGroup& params() { return params_; }
  const ParamGroup& params() const { return params_; }

 private:
  Tensor w_, b_;
  int input_dim_;
  ParamGroup params_;
};

// The re-ID branch: HR encoder F (same family as E, never shared weights)
// plus the classifier over the pooled joint representation.
struct ReidNet {
  Encoder hr_encoder;
  Classifier classifier;
  JointVariant variant;

  ReidNet(const ModelConfig& cfg, int num_classes, Rng& rng,
          JointVariant variant = JointVariant::Full)
      : hr_encoder(cfg, rng, "F"),
        classifier(variant == JointVariant::Full ? 2 * cfg.feature_dim()
                                                 : cfg.feature_dim(),
                   num_classes, rng),
        variant(variant) {}
};

struct JointOut {
  Tensor f;          // E(x), [N,h,w,d]
  Tensor recovered;  // G(E(x)), [N,H,W,3]
  Tensor g;          // F(G(E(x))), [N,h,w,d]
  Tensor v;          // selected representation, [N,h,w,2d] for the full model
  Tensor u;          // GAP(v)
  Tensor probs;      // C(v), rows sum to 1
};

inline JointOut joint_forward(const Tensor& x, const Crgan& crgan,
                              const ReidNet& reid) {
  JointOut out;
  auto enc = crgan.encoder.forward(x);
  out.f = enc.f;
  out.recovered = crgan.decoder.forward(enc.f, enc.stages, crgan.config.height,
                                        crgan.config.width);
  out.g = reid.hr_encoder.forward(out.recovered).f;
  switch (reid.variant) {
    case JointVariant::FOnly: out.v = out.f; break;
    case JointVariant::GOnly: out.v = out.g; break;
    default: out.v = concat(out.f, out.g); break;  // f first, g second
  }
  out.u = global_avg_pool(out.v);
  out.probs = reid.classifier.forward(out.u);
  return out;
}

// ---------------------------------------------------------------------------
// identity / triplet losses
// ---------------------------------------------------------------------------

// softmax cross entropy against the one-hot label, averaged over the batch
inline Tensor loss_id(const Tensor& probs, const std::vector<int>& labels,
                      float eps = 1e-7f) {
  if (probs.ndim() != 2 ||
      probs.dim(0) != static_cast<int>(labels.size()))
    throw ShapeError("loss_id: probs " + shape_str(probs.shape()) +
                     " vs " + std::to_string(labels.size()) + " labels");
  int k = probs.dim(1);
  std::vector<int64_t> idx(labels.size());
  for (size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || labels[i] >= k)
      throw std::out_of_range("loss_id: label " + std::to_string(labels[i]) +
                              " out of range for " + std::to_string(k) +
                              " classes");
    idx[i] = static_cast<int64_t>(i) * k + labels[i];
  }
  return neg(mean_all(log_op(clamp(select_index(probs, idx), eps, 1.0f))));
}

// Batch-hard triplet loss over one stream: for every anchor the hardest
// positive (max same-label distance) and hardest negative (min different-
// label distance), hinged at the margin and averaged over anchors.
inline Tensor triplet_stream(const Tensor& u, const std::vector<int>& labels,
                             float margin) {
  const int b = u.dim(0);
  if (b != static_cast<int>(labels.size()))
    throw ShapeError("loss_triplet: embeddings " + shape_str(u.shape()) +
                     " vs " + std::to_string(labels.size()) + " labels");
  Tensor dist = sqrt_op(pairwise_sqdist(u));
  std::vector<int64_t> pos_idx(static_cast<size_t>(b)),
      neg_idx(static_cast<size_t>(b));
  for (int i = 0; i < b; ++i) {
    int pos = -1, negk = -1;
    float dpos = -1.0f, dneg = 0.0f;
    for (int j = 0; j < b; ++j) {
      float d = dist.data()[static_cast<size_t>(i) * b + j];
      if (labels[j] == labels[i]) {
        if (j != i && d > dpos) { dpos = d; pos = j; }
      } else if (negk < 0 || d < dneg) {
        dneg = d;
        negk = j;
      }
    }
    if (pos < 0)
      throw std::invalid_argument("loss_triplet: anchor " + std::to_string(i) +
                                  " has no positive in its stream");
    if (negk < 0)
      throw std::invalid_argument("loss_triplet: anchor " + std::to_string(i) +
                                  " has no negative in its stream");
    pos_idx[static_cast<size_t>(i)] = static_cast<int64_t>(i) * b + pos;
    neg_idx[static_cast<size_t>(i)] = static_cast<int64_t>(i) * b + negk;
  }
  Tensor hinge = max_with_scalar(
      add_scalar(sub(select_index(dist, pos_idx), select_index(dist, neg_idx)),
                 margin),
      0.0f);
  return mean_all(hinge);
}

// Two-stream triplet loss: batch-hard per stream, then summed.
inline Tensor loss_triplet(const Tensor& u_hr, const std::vector<int>& hr_labels,
                           const Tensor& u_lr, const std::vector<int>& lr_labels,
                           float margin) {
  if (!(margin > 0.0f))
    throw std::invalid_argument("loss_triplet: margin must be > 0");
  return add(triplet_stream(u_hr, hr_labels, margin),
             triplet_stream(u_lr, lr_labels, margin));
}

// L_cls = L_id + L_tri with unit weights
inline Tensor loss_cls(const Tensor& id_loss, const Tensor& triplet_loss) {
  return add(id_loss, triplet_loss);
}

}  // namespace cadnet
