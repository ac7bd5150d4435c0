#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace paramisp {

/// Dimensions of a dense tensor, outermost first. Images are C x H x W.
using Shape = std::vector<int64_t>;

inline constexpr int kMaxRank = 4;

int64_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

namespace detail {

template <class T>
struct Node {
  Shape shape;
  std::vector<T> data;
  std::vector<T> grad;  // empty until something accumulates into it
  bool requires_grad = false;
  uint64_t seq = 0;  // creation order; a valid topological index
  const char* op = "leaf";
  std::vector<std::shared_ptr<Node>> inputs;
  std::function<void(Node&)> backward;

  std::vector<T>& grad_buffer() {
    if (grad.size() != data.size()) grad.assign(data.size(), T(0));
    return grad;
  }
};

uint64_t next_seq() noexcept;

}  // namespace detail

/// Shared handle to a dense tensor node. Copies alias the same storage, so a
/// parameter handed to an optimizer and to a network is one object.
template <class T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;
  Tensor(Shape shape, std::vector<T> data, bool requires_grad = false);

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, T value, bool requires_grad = false);
  static Tensor scalar(T value, bool requires_grad = false);
  static Tensor from_node(std::shared_ptr<detail::Node<T>> node);

  bool defined() const noexcept { return node_ != nullptr; }
  const Shape& shape() const;
  int ndim() const { return static_cast<int>(shape().size()); }
  int64_t dim(int axis) const;
  int64_t numel() const;

  std::span<const T> data() const;
  /// Mutable view of the values. Meant for leaves (parameters, inputs);
  /// mutating an interior node does not re-run anything downstream.
  std::span<T> data_mut();
  T item() const;

  bool requires_grad() const;
  Tensor& set_requires_grad(bool on);
  bool is_leaf() const;

  bool has_grad() const;
  std::span<const T> grad() const;
  std::span<T> grad_mut();
  void zero_grad();

  /// New leaf holding a copy of the values, cut from any graph.
  Tensor detach() const;
  const char* op_name() const;

  detail::Node<T>& node() const;
  const std::shared_ptr<detail::Node<T>>& node_ptr() const { return node_; }

 private:
  std::shared_ptr<detail::Node<T>> node_;
};

/// While alive, ops on this thread record no graph (inference mode).
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

bool grad_enabled() noexcept;

/// Reverse-mode sweep from a one-element root. Leaf gradients accumulate
/// across calls; interior gradients are transient.
template <class T>
void backward(const Tensor<T>& root);

/// Number of nodes reachable from root that participate in differentiation.
template <class T>
size_t graph_size(const Tensor<T>& root);

}  // namespace paramisp
