#pragma once

#include <cassert>
#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <vector>

namespace cadnet {

struct ShapeError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct GraphError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

using Shape = std::vector<int>;

inline int64_t numel(const Shape& s) {
  int64_t n = 1;
  for (int d : s) n *= d;
  return n;
}

inline std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << "[";
  for (size_t i = 0; i < s.size(); ++i) os << (i ? "x" : "") << s[i];
  os << "]";
  return os.str();
}

[[noreturn]] inline void shape_fail(const std::string& op, const Shape& a,
                                    const Shape& b) {
  throw ShapeError(op + ": incompatible shapes " + shape_str(a) + " and " +
                   shape_str(b));
}

// One node of the define-by-run tape. Forward ops allocate a fresh node;
// the tape is implicit in the parent links and rebuilt every forward pass.
struct TensorNode {
  Shape shape;
  std::vector<float> data;
  std::vector<float> grad;   // allocated lazily by backward()
  bool requires_grad = false;
  bool is_leaf = true;
  std::vector<std::shared_ptr<TensorNode>> parents;
  std::function<void(TensorNode&)> backward_fn;  // pushes grad into parents

  int64_t size() const { return static_cast<int64_t>(data.size()); }

  void ensure_grad() {
    if (grad.size() != data.size()) grad.assign(data.size(), 0.0f);
  }
};

// Value-semantics handle over a shared graph node.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::shared_ptr<TensorNode> n) : node_(std::move(n)) {}

  static Tensor zeros(Shape shape, bool requires_grad = false) {
    auto n = std::make_shared<TensorNode>();
    n->shape = std::move(shape);
    n->data.assign(static_cast<size_t>(numel(n->shape)), 0.0f);
    n->requires_grad = requires_grad;
    return Tensor(std::move(n));
  }

  static Tensor full(Shape shape, float value, bool requires_grad = false) {
    Tensor t = zeros(std::move(shape), requires_grad);
    for (float& v : t.data()) v = value;
    return t;
  }

  static Tensor from_data(Shape shape, std::vector<float> data,
                          bool requires_grad = false) {
    if (numel(shape) != static_cast<int64_t>(data.size()))
      throw ShapeError("from_data: shape " + shape_str(shape) +
                       " does not match data length " +
                       std::to_string(data.size()));
    auto n = std::make_shared<TensorNode>();
    n->shape = std::move(shape);
    n->data = std::move(data);
    n->requires_grad = requires_grad;
    return Tensor(std::move(n));
  }

  static Tensor scalar(float v, bool requires_grad = false) {
    return from_data({1}, {v}, requires_grad);
  }

  bool defined() const { return static_cast<bool>(node_); }
  const Shape& shape() const { return node_->shape; }
  int dim(int i) const { return node_->shape[static_cast<size_t>(i)]; }
  int ndim() const { return static_cast<int>(node_->shape.size()); }
  int64_t size() const { return node_->size(); }
  std::vector<float>& data() { return node_->data; }
  const std::vector<float>& data() const { return node_->data; }
  std::vector<float>& grad() { return node_->grad; }
  const std::vector<float>& grad() const { return node_->grad; }
  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool b) { node_->requires_grad = b; }
  bool is_leaf() const { return node_->is_leaf; }

  float item() const {
    if (node_->size() != 1)
      throw ShapeError("item: tensor has " + std::to_string(node_->size()) +
                       " elements, expected 1");
    return node_->data[0];
  }

  void zero_grad() { node_->grad.assign(node_->data.size(), 0.0f); }

  std::shared_ptr<TensorNode> node() const { return node_; }

 private:
  std::shared_ptr<TensorNode> node_;
};

namespace detail {

inline bool all_finite(const std::vector<float>& v) {
  for (float x : v)
    if (!std::isfinite(x)) return false;
  return true;
}

// Builds a non-leaf result node. The op is taped iff any input needs grad.
inline Tensor make_result(const std::string& op, Shape shape,
                          std::vector<float> data,
                          std::vector<Tensor> parents,
                          std::function<void(TensorNode&)> backward_fn) {
  auto n = std::make_shared<TensorNode>();
  n->shape = std::move(shape);
  n->data = std::move(data);
  n->is_leaf = false;
  bool taped = false;
  for (const Tensor& p : parents)
    if (p.node()->requires_grad) taped = true;
  n->requires_grad = taped;
  if (taped) {
    for (const Tensor& p : parents) n->parents.push_back(p.node());
    n->backward_fn = std::move(backward_fn);
  }
#ifndef NDEBUG
  assert(all_finite(n->data) && "non-finite values in forward op output");
  (void)op;
#endif
  return Tensor(std::move(n));
}

// Grad accumulation respects requires_grad so that frozen parameters
// (e.g. discriminators during the generator step) stay grad-free.
inline void accumulate(const std::shared_ptr<TensorNode>& node, size_t i,
                       float v) {
  if (!node->requires_grad) return;
  node->ensure_grad();
  node->grad[i] += v;
}

}  // namespace detail

// Reverse-mode sweep from a scalar loss. Leaf grads accumulate across calls
// until explicitly zeroed.
inline void backward(const Tensor& loss) {
  if (!loss.defined() || loss.size() != 1)
    throw GraphError("backward: loss must be a defined scalar tensor");
  auto root = loss.node();
  if (!root->requires_grad)
    throw GraphError("backward: loss is not part of a taped computation");

  // Iterative post-order topological sort over parent links.
  std::vector<TensorNode*> order;
  std::unordered_set<TensorNode*> visited;
  std::vector<std::pair<TensorNode*, size_t>> stack;
  stack.emplace_back(root.get(), 0);
  visited.insert(root.get());
  while (!stack.empty()) {
    auto& [node, idx] = stack.back();
    if (idx < node->parents.size()) {
      TensorNode* p = node->parents[idx++].get();
      if (p->requires_grad && !visited.count(p)) {
        visited.insert(p);
        stack.emplace_back(p, 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  // Intermediate grads are scratch space for this sweep; only leaf grads
  // persist and accumulate across calls.
  for (TensorNode* n : order)
    if (!n->is_leaf) n->grad.assign(n->data.size(), 0.0f);

  root->ensure_grad();
  root->grad[0] += 1.0f;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    TensorNode* n = *it;
    if (n->backward_fn) {
      n->ensure_grad();
      n->backward_fn(*n);
    }
  }
}

// Cuts the tape: returns a grad-free leaf sharing the same values.
inline Tensor detach(const Tensor& t) {
  auto n = std::make_shared<TensorNode>();
  n->shape = t.shape();
  n->data = t.data();  // copy; tensors are immutable after forward creation
  n->requires_grad = false;
  return Tensor(std::move(n));
}

}  // namespace cadnet
