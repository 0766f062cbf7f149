#pragma once

// Dense float64 tensors with tape-based reverse-mode differentiation.
//
// Layout convention: 4-D image data is always (batch, channel, height, width),
// row-major and contiguous. A Tensor is a cheap handle; copies share the same
// node, the way a framework variable would. Use detach() for an independent
// copy of the values.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace peerstyle {

using Shape = std::vector<std::size_t>;

std::size_t numel_of(const Shape& shape);
std::string to_string(const Shape& shape);

/// Thrown when operand shapes are incompatible; the message names the dimension.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Thrown when a value leaves the finite range or a numeric precondition fails.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

namespace detail {

struct Node {
  Shape shape;
  std::vector<double> data;
  std::vector<double> grad;  // empty until first written
  bool requires_grad = false;
  std::uint64_t seq = 0;
  std::vector<std::shared_ptr<Node>> parents;
  // Reads this->grad and accumulates into the parents' grads.
  std::function<void(Node&)> backward_fn;

  Node();
  ~Node();
  Node(const Node&) = delete;
  Node& operator=(const Node&) = delete;

  bool is_leaf() const { return !backward_fn; }
  std::vector<double>& ensure_grad();
};

}  // namespace detail

class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, double fill = 0.0);
  Tensor(Shape shape, std::vector<double> values);

  static Tensor scalar(double value);
  static Tensor from_node(std::shared_ptr<detail::Node> node);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const;
  std::size_t dim() const { return shape().size(); }
  std::size_t size(std::size_t axis) const;
  std::size_t numel() const;

  /// Views into the node's storage. Not available on temporaries, whose
  /// storage may die before the view does.
  std::span<const double> data() const&;
  std::span<const double> data() const&& = delete;
  /// Mutable access to the values. Intended for leaves (parameters, inputs);
  /// mutating an interior node invalidates any recorded backward pass.
  std::span<double> mutable_data();
  double item() const;
  double at(std::initializer_list<std::size_t> index) const;

  bool requires_grad() const;
  Tensor& set_requires_grad(bool flag);
  bool has_grad() const;
  std::span<const double> grad() const&;
  std::span<const double> grad() const&& = delete;
  std::span<double> mutable_grad();
  void zero_grad();
  void clear_grad();

  bool is_leaf() const;
  /// Independent leaf holding a copy of the values; never requires grad.
  Tensor detach() const;

  const std::shared_ptr<detail::Node>& node() const { return node_; }

 private:
  std::shared_ptr<detail::Node> node_;
};

/// Propagate d(loss)/d(leaf) into every reachable leaf that requires grad.
/// Leaf gradients accumulate across calls; interior buffers are released.
void backward(const Tensor& loss);

bool grad_enabled();

/// Disables graph recording on this thread for the guard's lifetime.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

/// When enabled, every op scans its output and throws NumericError on NaN/Inf.
/// Defaults to on in debug builds, or when PEERSTYLE_CHECK_FINITE=1.
void set_check_finite(bool enabled);
bool check_finite_enabled();

/// Number of graph nodes currently alive; used to audit tape leaks.
std::size_t live_node_count();

namespace detail {

/// Builds an op result and wires its backward closure when recording is on.
Tensor make_result(Shape shape, std::vector<double> data, std::vector<Tensor> inputs,
                   std::function<void(Node&)> backward_fn, const char* op_name);

/// grad buffer of input i, allocated on demand, or nullptr if it needs none.
double* input_grad(Node& self, std::size_t i);

}  // namespace detail

}  // namespace peerstyle
