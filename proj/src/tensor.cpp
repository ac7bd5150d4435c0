#include "paramisp/tensor.hpp"

#include <algorithm>
#include <atomic>
#include <unordered_set>

#include "paramisp/error.hpp"

namespace paramisp {

const char* error_code_name(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::InvalidArgument: return "invalid argument";
    case ErrorCode::ShapeMismatch: return "shape mismatch";
    case ErrorCode::Domain: return "domain error";
    case ErrorCode::NonFinite: return "non-finite value";
    case ErrorCode::Io: return "i/o error";
    case ErrorCode::Format: return "format error";
    case ErrorCode::Direction: return "direction error";
    case ErrorCode::Version: return "version error";
  }
  return "error";
}

int64_t shape_numel(const Shape& shape) {
  int64_t n = 1;
  for (int64_t d : shape) n *= d;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::string s = "[";
  for (size_t i = 0; i < shape.size(); ++i) {
    if (i) s += "x";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

namespace detail {
uint64_t next_seq() noexcept {
  static std::atomic<uint64_t> counter{0};
  return ++counter;
}
}  // namespace detail

template <class T>
Tensor<T>::Tensor(Shape shape, std::vector<T> data, bool requires_grad) {
  if (shape.empty() || shape.size() > kMaxRank)
    raise(ErrorCode::InvalidArgument, "tensor rank must be 1..", kMaxRank, ", got ", shape.size());
  for (int64_t d : shape)
    if (d <= 0) raise(ErrorCode::InvalidArgument, "tensor dimensions must be positive: ", shape_str(shape));
  if (shape_numel(shape) != static_cast<int64_t>(data.size()))
    raise(ErrorCode::ShapeMismatch, "shape ", shape_str(shape), " does not hold ", data.size(), " values");
  node_ = std::make_shared<detail::Node<T>>();
  node_->shape = std::move(shape);
  node_->data = std::move(data);
  node_->requires_grad = requires_grad;
  node_->seq = detail::next_seq();
}

template <class T>
Tensor<T> Tensor<T>::zeros(Shape shape, bool requires_grad) {
  return full(std::move(shape), T(0), requires_grad);
}

template <class T>
Tensor<T> Tensor<T>::full(Shape shape, T value, bool requires_grad) {
  const int64_t n = shape_numel(shape);
  return Tensor(std::move(shape), std::vector<T>(static_cast<size_t>(std::max<int64_t>(n, 0)), value),
                requires_grad);
}

template <class T>
Tensor<T> Tensor<T>::scalar(T value, bool requires_grad) {
  return Tensor({1}, {value}, requires_grad);
}

template <class T>
Tensor<T> Tensor<T>::from_node(std::shared_ptr<detail::Node<T>> node) {
  Tensor t;
  t.node_ = std::move(node);
  return t;
}

template <class T>
detail::Node<T>& Tensor<T>::node() const {
  if (!node_) raise(ErrorCode::InvalidArgument, "use of an undefined tensor");
  return *node_;
}

template <class T>
const Shape& Tensor<T>::shape() const {
  return node().shape;
}

template <class T>
int64_t Tensor<T>::dim(int axis) const {
  const auto& s = shape();
  if (axis < 0) axis += static_cast<int>(s.size());
  if (axis < 0 || axis >= static_cast<int>(s.size()))
    raise(ErrorCode::InvalidArgument, "axis ", axis, " out of range for ", shape_str(s));
  return s[static_cast<size_t>(axis)];
}

template <class T>
int64_t Tensor<T>::numel() const {
  return static_cast<int64_t>(node().data.size());
}

template <class T>
std::span<const T> Tensor<T>::data() const {
  return node().data;
}

template <class T>
std::span<T> Tensor<T>::data_mut() {
  return node().data;
}

template <class T>
T Tensor<T>::item() const {
  if (numel() != 1) raise(ErrorCode::ShapeMismatch, "item() on tensor of shape ", shape_str(shape()));
  return node().data[0];
}

template <class T>
bool Tensor<T>::requires_grad() const {
  return node().requires_grad;
}

template <class T>
Tensor<T>& Tensor<T>::set_requires_grad(bool on) {
  if (!is_leaf()) raise(ErrorCode::InvalidArgument, "requires_grad can only be toggled on leaves");
  node().requires_grad = on;
  return *this;
}

template <class T>
bool Tensor<T>::is_leaf() const {
  return !node().backward;
}

template <class T>
bool Tensor<T>::has_grad() const {
  const auto& n = node();
  return !n.grad.empty() && n.grad.size() == n.data.size();
}

template <class T>
std::span<const T> Tensor<T>::grad() const {
  if (!has_grad()) raise(ErrorCode::InvalidArgument, "tensor has no gradient");
  return node().grad;
}

template <class T>
std::span<T> Tensor<T>::grad_mut() {
  return node().grad_buffer();
}

template <class T>
void Tensor<T>::zero_grad() {
  auto& n = node();
  if (!n.grad.empty()) std::fill(n.grad.begin(), n.grad.end(), T(0));
}

template <class T>
Tensor<T> Tensor<T>::detach() const {
  return Tensor(shape(), node().data, false);
}

template <class T>
const char* Tensor<T>::op_name() const {
  return node().op;
}

namespace {

thread_local bool g_grad_enabled = true;

}  // namespace

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }
bool grad_enabled() noexcept { return g_grad_enabled; }

namespace {

template <class T>
std::vector<detail::Node<T>*> reachable(detail::Node<T>* root) {
  std::vector<detail::Node<T>*> order;
  std::unordered_set<detail::Node<T>*> seen;
  std::vector<detail::Node<T>*> stack{root};
  seen.insert(root);
  while (!stack.empty()) {
    auto* n = stack.back();
    stack.pop_back();
    order.push_back(n);
    for (auto& in : n->inputs) {
      if (!in->requires_grad) continue;
      if (seen.insert(in.get()).second) stack.push_back(in.get());
    }
  }
  // Creation order is topological: an op's output is always younger than its inputs.
  std::sort(order.begin(), order.end(), [](auto* a, auto* b) { return a->seq > b->seq; });
  return order;
}

}  // namespace

template <class T>
void backward(const Tensor<T>& root) {
  if (root.numel() != 1)
    raise(ErrorCode::ShapeMismatch, "backward() needs a one-element root, got ", shape_str(root.shape()));
  auto& r = root.node();
  if (!r.requires_grad) return;
  auto order = reachable(&r);
  for (auto* n : order)
    if (n->backward) n->grad.assign(n->data.size(), T(0));
  r.grad_buffer()[0] += T(1);
  for (auto* n : order) {
    if (!n->backward) continue;
    n->backward(*n);
    std::vector<T>().swap(n->grad);
  }
}

template <class T>
size_t graph_size(const Tensor<T>& root) {
  auto& r = root.node();
  if (!r.requires_grad) return 0;
  return reachable(&r).size();
}

template class Tensor<float>;
template class Tensor<double>;
template void backward(const Tensor<float>&);
template void backward(const Tensor<double>&);
template size_t graph_size(const Tensor<float>&);
template size_t graph_size(const Tensor<double>&);

}  // namespace paramisp
