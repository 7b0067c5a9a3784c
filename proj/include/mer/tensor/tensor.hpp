#pragma once

// Dense tensors with a dynamic reverse-mode tape.
//
// A Tensor is a cheap shared handle onto a Node. Ops create a new Node whose
// `backward` closure reads the node's own gradient and accumulates into the
// gradients of its parents. Leaves (parameters, inputs) have no closure.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace mer {

using Index = std::int64_t;
using Shape = std::vector<Index>;

std::string to_string(const Shape& shape);
Index numel_of(const Shape& shape);

class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

template <typename T>
struct Node {
  Shape shape;
  std::vector<T> data;
  std::vector<T> grad;  // empty until first accumulation
  bool requires_grad = false;
  const char* op = "leaf";
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward;

  bool has_grad() const { return !grad.empty(); }
  std::vector<T>& ensure_grad() {
    if (grad.empty()) grad.assign(data.size(), T(0));
    return grad;
  }
};

template <typename T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;
  explicit Tensor(std::shared_ptr<Node<T>> node) : node_(std::move(node)) {}

  static Tensor zeros(const Shape& shape, bool requires_grad = false);
  static Tensor full(const Shape& shape, T value, bool requires_grad = false);
  static Tensor from(const Shape& shape, std::vector<T> values, bool requires_grad = false);
  static Tensor scalar(T value, bool requires_grad = false) {
    return from({1}, {value}, requires_grad);
  }

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  Index dim(std::size_t axis) const { return node_->shape.at(axis); }
  std::size_t rank() const { return node_->shape.size(); }
  Index numel() const { return static_cast<Index>(node_->data.size()); }

  std::span<T> data() { return node_->data; }
  std::span<const T> data() const { return node_->data; }
  std::vector<T>& values() { return node_->data; }
  const std::vector<T>& values() const { return node_->data; }

  bool has_grad() const { return node_->has_grad(); }
  // Zeros when no gradient has been accumulated yet.
  std::vector<T> grad() const;
  std::vector<T>& mutable_grad() { return node_->ensure_grad(); }
  void zero_grad() { node_->grad.clear(); }

  bool requires_grad() const { return node_->requires_grad; }
  Tensor& set_requires_grad(bool flag) {
    node_->requires_grad = flag;
    return *this;
  }

  T item() const;
  T& operator[](Index i) { return node_->data[static_cast<std::size_t>(i)]; }
  T operator[](Index i) const { return node_->data[static_cast<std::size_t>(i)]; }
  // 4-d accessor for N×C×H×W tensors.
  T at(Index n, Index c, Index h, Index w) const;

  // Fresh leaf holding a copy of the values; no graph history.
  Tensor detach() const;

  const char* op() const { return node_->op; }
  Node<T>* node() const { return node_.get(); }
  const std::shared_ptr<Node<T>>& node_ptr() const { return node_; }

 private:
  std::shared_ptr<Node<T>> node_;
};

// While alive, ops on this thread do not record history.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

bool grad_mode_enabled();

// Reverse topological ordering of the nodes reachable from a root through
// parents that require gradients. The root comes first.
template <typename T>
class Graph {
 public:
  static Graph build(const Tensor<T>& root);
  const std::vector<Node<T>*>& nodes() const { return order_; }
  std::size_t size() const { return order_.size(); }

 private:
  std::vector<Node<T>*> order_;
};

// Populates gradients of every requires_grad tensor reachable from `loss`.
// Gradients accumulate (sum) across calls until zero_grad().
template <typename T>
void backward(const Tensor<T>& loss);

// Test hook: while alive, every node recorded for `op` on this thread scales
// its incoming gradient by `factor` before propagating, corrupting that op's
// backward. Used as a negative control for gradient checking.
class BackwardFaultGuard {
 public:
  BackwardFaultGuard(std::string op, double factor);
  ~BackwardFaultGuard();
  BackwardFaultGuard(const BackwardFaultGuard&) = delete;
  BackwardFaultGuard& operator=(const BackwardFaultGuard&) = delete;

 private:
  std::string previous_op_;
  double previous_factor_;
};

// Helper used by ops: builds an output node wired to `parents`. The closure
// is attached only when grad mode is on and some parent requires grad.
template <typename T>
Tensor<T> make_result(const char* op, Shape shape, std::vector<T> data,
                      std::vector<std::shared_ptr<Node<T>>> parents,
                      std::function<void(Node<T>&)> backward_fn);

}  // namespace mer
