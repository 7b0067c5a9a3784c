#include "mer/tensor/tensor.hpp"

#include <sstream>
#include <unordered_set>

namespace mer {

namespace {
thread_local bool g_grad_mode = true;
}

std::string to_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

Index numel_of(const Shape& shape) {
  Index n = 1;
  for (Index d : shape) n *= d;
  return n;
}

NoGradGuard::NoGradGuard() : previous_(g_grad_mode) { g_grad_mode = false; }
NoGradGuard::~NoGradGuard() { g_grad_mode = previous_; }
bool grad_mode_enabled() { return g_grad_mode; }

static void check_shape(const Shape& shape) {
  for (Index d : shape) {
    if (d <= 0) throw ShapeError("tensor extents must be positive, got " + to_string(shape));
  }
}

template <typename T>
Tensor<T> Tensor<T>::zeros(const Shape& shape, bool requires_grad) {
  return full(shape, T(0), requires_grad);
}

template <typename T>
Tensor<T> Tensor<T>::full(const Shape& shape, T value, bool requires_grad) {
  check_shape(shape);
  auto node = std::make_shared<Node<T>>();
  node->shape = shape;
  node->data.assign(static_cast<std::size_t>(numel_of(shape)), value);
  node->requires_grad = requires_grad;
  return Tensor(std::move(node));
}

template <typename T>
Tensor<T> Tensor<T>::from(const Shape& shape, std::vector<T> values, bool requires_grad) {
  check_shape(shape);
  if (static_cast<Index>(values.size()) != numel_of(shape)) {
    throw ShapeError("shape " + to_string(shape) + " needs " + std::to_string(numel_of(shape)) +
                     " values, got " + std::to_string(values.size()));
  }
  auto node = std::make_shared<Node<T>>();
  node->shape = shape;
  node->data = std::move(values);
  node->requires_grad = requires_grad;
  return Tensor(std::move(node));
}

template <typename T>
std::vector<T> Tensor<T>::grad() const {
  if (node_->grad.empty()) return std::vector<T>(node_->data.size(), T(0));
  return node_->grad;
}

template <typename T>
T Tensor<T>::item() const {
  if (node_->data.size() != 1) {
    throw ShapeError("item() on tensor of shape " + to_string(node_->shape));
  }
  return node_->data[0];
}

template <typename T>
T Tensor<T>::at(Index n, Index c, Index h, Index w) const {
  const Shape& s = node_->shape;
  if (s.size() != 4) throw ShapeError("at(n,c,h,w) needs a 4-d tensor, got " + to_string(s));
  return node_->data[static_cast<std::size_t>(((n * s[1] + c) * s[2] + h) * s[3] + w)];
}

template <typename T>
Tensor<T> Tensor<T>::detach() const {
  return from(node_->shape, node_->data, false);
}

template <typename T>
Graph<T> Graph<T>::build(const Tensor<T>& root) {
  // Iterative post-order DFS, then reverse: parents after all their consumers.
  Graph g;
  std::vector<Node<T>*> post;
  std::unordered_set<Node<T>*> seen;
  std::vector<std::pair<Node<T>*, std::size_t>> stack;
  stack.emplace_back(root.node(), 0);
  seen.insert(root.node());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node<T>* parent = node->parents[next++].get();
      if (parent->requires_grad && seen.insert(parent).second) stack.emplace_back(parent, 0);
    } else {
      post.push_back(node);
      stack.pop_back();
    }
  }
  g.order_.assign(post.rbegin(), post.rend());
  return g;
}

template <typename T>
void backward(const Tensor<T>& loss) {
  if (loss.numel() != 1) {
    throw ShapeError("backward() needs a scalar loss, got shape " + to_string(loss.shape()));
  }
  if (!loss.requires_grad()) return;
  Graph<T> graph = Graph<T>::build(loss);
  loss.node()->ensure_grad()[0] += T(1);
  for (Node<T>* node : graph.nodes()) {
    if (node->backward && node->has_grad()) node->backward(*node);
  }
  // Intermediate gradients are no longer needed; leaves keep theirs.
  for (Node<T>* node : graph.nodes()) {
    if (node->backward) node->grad.clear();
  }
}

namespace {
thread_local std::string g_fault_op;
thread_local double g_fault_factor = 1.0;
}  // namespace

BackwardFaultGuard::BackwardFaultGuard(std::string op, double factor)
    : previous_op_(std::move(g_fault_op)), previous_factor_(g_fault_factor) {
  g_fault_op = std::move(op);
  g_fault_factor = factor;
}

BackwardFaultGuard::~BackwardFaultGuard() {
  g_fault_op = std::move(previous_op_);
  g_fault_factor = previous_factor_;
}

template <typename T>
Tensor<T> make_result(const char* op, Shape shape, std::vector<T> data,
                      std::vector<std::shared_ptr<Node<T>>> parents,
                      std::function<void(Node<T>&)> backward_fn) {
  auto node = std::make_shared<Node<T>>();
  node->shape = std::move(shape);
  node->data = std::move(data);
  node->op = op;
  bool needs_grad = false;
  if (g_grad_mode) {
    for (const auto& p : parents) needs_grad = needs_grad || p->requires_grad;
  }
  if (needs_grad) {
    node->requires_grad = true;
    node->parents = std::move(parents);
    node->backward = std::move(backward_fn);
    if (!g_fault_op.empty() && g_fault_op == op) {
      node->backward = [inner = std::move(node->backward), factor = static_cast<T>(g_fault_factor)](Node<T>& n) {
        for (T& g : n.grad) g *= factor;
        inner(n);
      };
    }
  }
  return Tensor<T>(std::move(node));
}

template class Tensor<float>;
template class Tensor<double>;
template class Graph<float>;
template class Graph<double>;
template void backward<float>(const Tensor<float>&);
template void backward<double>(const Tensor<double>&);
template Tensor<float> make_result<float>(const char*, Shape, std::vector<float>,
                                          std::vector<std::shared_ptr<Node<float>>>,
                                          std::function<void(Node<float>&)>);
template Tensor<double> make_result<double>(const char*, Shape, std::vector<double>,
                                            std::vector<std::shared_ptr<Node<double>>>,
                                            std::function<void(Node<double>&)>);

}  // namespace mer
