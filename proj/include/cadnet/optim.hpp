#pragma once

#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "cadnet/tensor.hpp"

namespace cadnet {

struct SgdConfig {
  float learning_rate = 1e-3f;
  float momentum = 0.9f;
  float weight_decay = 5e-4f;

  void validate() const {
    if (learning_rate < 0.0f)
      throw std::invalid_argument("SgdConfig: learning_rate must be >= 0");
    if (momentum < 0.0f || momentum >= 1.0f)
      throw std::invalid_argument("SgdConfig: momentum must be in [0,1)");
    if (weight_decay < 0.0f)
      throw std::invalid_argument("SgdConfig: weight_decay must be >= 0");
  }
};

struct NamedParam {
  std::string name;
  Tensor tensor;
};

// Named, ordered parameter collection. Order is part of the checkpoint
// contract, so insertion order is preserved.
class ParamGroup {
 public:
  Tensor add(const std::string& name, Tensor t) {
    t.set_requires_grad(true);
    params_.push_back({name, t});
    return t;
  }

  void append(const ParamGroup& other, const std::string& prefix) {
    for (const auto& p : other.params_)
      params_.push_back({prefix + "." + p.name, p.tensor});
  }

  void append(const ParamGroup& other) {
    for (const auto& p : other.params_) params_.push_back(p);
  }

  std::vector<NamedParam>& items() { return params_; }
  const std::vector<NamedParam>& items() const { return params_; }
  size_t size() const { return params_.size(); }

  void zero_grads() {
    for (auto& p : params_) p.tensor.zero_grad();
  }

  void set_requires_grad(bool b) {
    for (auto& p : params_) p.tensor.set_requires_grad(b);
  }

  Tensor find(const std::string& name) const {
    for (const auto& p : params_)
      if (p.name == name) return p.tensor;
    throw std::out_of_range("ParamGroup: no parameter named " + name);
  }

 private:
  std::vector<NamedParam> params_;
};

// Classic SGD with momentum and (coupled) weight decay:
//   buf <- momentum*buf + grad + weight_decay*param
//   param <- param - lr*buf
class SgdOptimizer {
 public:
  SgdOptimizer(ParamGroup& group, SgdConfig config)
      : group_(&group), config_(config) {
    config_.validate();
    for (auto& p : group.items())
      buffers_[p.name].assign(p.tensor.data().size(), 0.0f);
  }

  void step() {
    for (auto& p : group_->items()) {
      auto& t = p.tensor;
      if (t.grad().size() != t.data().size())
        throw GraphError("sgd_step: parameter '" + p.name +
                         "' has no gradient");
      auto& buf = buffers_.at(p.name);
      for (size_t i = 0; i < buf.size(); ++i) {
        buf[i] = config_.momentum * buf[i] + t.grad()[i] +
                 config_.weight_decay * t.data()[i];
        t.data()[i] -= config_.learning_rate * buf[i];
      }
    }
  }

  void zero_grads() { group_->zero_grads(); }

  const SgdConfig& config() const { return config_; }
  std::unordered_map<std::string, std::vector<float>>& buffers() {
    return buffers_;
  }

 private:
  ParamGroup* group_;
  SgdConfig config_;
  std::unordered_map<std::string, std::vector<float>> buffers_;
};

}  // namespace cadnet
