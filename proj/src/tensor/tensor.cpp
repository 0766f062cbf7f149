#include "peerstyle/tensor.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <numeric>
#include <sstream>
#include <unordered_set>

namespace peerstyle {

namespace {

std::atomic<std::uint64_t> g_next_seq{1};
std::atomic<std::size_t> g_live_nodes{0};
thread_local bool t_grad_enabled = true;

bool initial_check_finite() {
#ifndef NDEBUG
  return true;
#else
  const char* env = std::getenv("PEERSTYLE_CHECK_FINITE");
  return env != nullptr && std::string(env) == "1";
#endif
}

std::atomic<bool> g_check_finite{initial_check_finite()};

}  // namespace

std::size_t numel_of(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string to_string(const Shape& shape) {
  std::ostringstream out;
  out << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i != 0) out << ", ";
    out << shape[i];
  }
  out << ']';
  return out.str();
}

namespace detail {

Node::Node() : seq(g_next_seq.fetch_add(1)) { g_live_nodes.fetch_add(1); }
Node::~Node() { g_live_nodes.fetch_sub(1); }

std::vector<double>& Node::ensure_grad() {
  if (grad.size() != data.size()) grad.assign(data.size(), 0.0);
  return grad;
}

Tensor make_result(Shape shape, std::vector<double> data, std::vector<Tensor> inputs,
                   std::function<void(Node&)> backward_fn, const char* op_name) {
  if (numel_of(shape) != data.size()) {
    throw ShapeError(std::string(op_name) + ": result buffer does not match shape " +
                     to_string(shape));
  }
  if (g_check_finite.load(std::memory_order_relaxed)) {
    for (std::size_t i = 0; i < data.size(); ++i) {
      if (!std::isfinite(data[i])) {
        throw NumericError(std::string(op_name) + ": non-finite output at flat index " +
                           std::to_string(i));
      }
    }
  }
  auto node = std::make_shared<Node>();
  node->shape = std::move(shape);
  node->data = std::move(data);
  bool record = false;
  if (t_grad_enabled) {
    for (const auto& in : inputs) {
      if (in.defined() && in.requires_grad()) {
        record = true;
        break;
      }
    }
  }
  if (record) {
    node->requires_grad = true;
    node->parents.reserve(inputs.size());
    for (auto& in : inputs) node->parents.push_back(in.node());
    node->backward_fn = std::move(backward_fn);
  }
  return Tensor::from_node(std::move(node));
}

double* input_grad(Node& self, std::size_t i) {
  auto& parent = self.parents.at(i);
  if (!parent || !parent->requires_grad) return nullptr;
  return parent->ensure_grad().data();
}

}  // namespace detail

Tensor::Tensor(Shape shape, double fill) : node_(std::make_shared<detail::Node>()) {
  node_->data.assign(numel_of(shape), fill);
  node_->shape = std::move(shape);
}

Tensor::Tensor(Shape shape, std::vector<double> values) : node_(std::make_shared<detail::Node>()) {
  if (numel_of(shape) != values.size()) {
    throw ShapeError("Tensor: " + std::to_string(values.size()) +
                     " values do not fill shape " + to_string(shape));
  }
  node_->shape = std::move(shape);
  node_->data = std::move(values);
}

Tensor Tensor::scalar(double value) { return Tensor(Shape{}, std::vector<double>{value}); }

Tensor Tensor::from_node(std::shared_ptr<detail::Node> node) {
  Tensor t;
  t.node_ = std::move(node);
  return t;
}

const Shape& Tensor::shape() const {
  if (!node_) throw std::logic_error("Tensor: use of undefined tensor");
  return node_->shape;
}

std::size_t Tensor::size(std::size_t axis) const {
  const auto& s = shape();
  if (axis >= s.size()) {
    throw ShapeError("Tensor::size: axis " + std::to_string(axis) + " out of range for shape " +
                     to_string(s));
  }
  return s[axis];
}

std::size_t Tensor::numel() const { return node_ ? node_->data.size() : 0; }

std::span<const double> Tensor::data() const& {
  shape();
  return node_->data;
}

std::span<double> Tensor::mutable_data() {
  shape();
  return node_->data;
}

double Tensor::item() const {
  if (numel() != 1) throw ShapeError("Tensor::item: tensor of shape " + to_string(shape()) + " is not a scalar");
  return node_->data[0];
}

double Tensor::at(std::initializer_list<std::size_t> index) const {
  const auto& s = shape();
  if (index.size() != s.size()) throw ShapeError("Tensor::at: rank mismatch");
  std::size_t flat = 0;
  std::size_t axis = 0;
  for (std::size_t i : index) {
    if (i >= s[axis]) throw ShapeError("Tensor::at: index out of range on axis " + std::to_string(axis));
    flat = flat * s[axis] + i;
    ++axis;
  }
  return node_->data[flat];
}

bool Tensor::requires_grad() const { return node_ && node_->requires_grad; }

Tensor& Tensor::set_requires_grad(bool flag) {
  shape();
  if (!node_->is_leaf()) throw std::logic_error("set_requires_grad: only leaves can be toggled");
  node_->requires_grad = flag;
  return *this;
}

bool Tensor::has_grad() const { return node_ && node_->grad.size() == node_->data.size(); }

std::span<const double> Tensor::grad() const& {
  if (!has_grad()) throw std::logic_error("Tensor::grad: no gradient populated");
  return node_->grad;
}

std::span<double> Tensor::mutable_grad() {
  shape();
  return node_->ensure_grad();
}

void Tensor::zero_grad() {
  if (has_grad()) std::fill(node_->grad.begin(), node_->grad.end(), 0.0);
}

void Tensor::clear_grad() {
  if (node_) {
    node_->grad.clear();
    node_->grad.shrink_to_fit();
  }
}

bool Tensor::is_leaf() const { return node_ && node_->is_leaf(); }

Tensor Tensor::detach() const { return Tensor(shape(), node_->data); }

void backward(const Tensor& loss) {
  if (!loss.defined()) throw std::logic_error("backward: undefined loss");
  if (loss.numel() != 1) {
    throw ShapeError("backward: loss must be a scalar, got shape " + to_string(loss.shape()));
  }
  if (!loss.requires_grad()) throw std::logic_error("backward: loss is not part of a tracked computation");

  // Collect the tape reachable from the loss, then replay it newest-first.
  std::vector<detail::Node*> tape;
  std::unordered_set<detail::Node*> seen;
  std::vector<detail::Node*> stack{loss.node().get()};
  while (!stack.empty()) {
    detail::Node* n = stack.back();
    stack.pop_back();
    if (!seen.insert(n).second) continue;
    tape.push_back(n);
    for (const auto& p : n->parents) {
      if (p && p->requires_grad) stack.push_back(p.get());
    }
  }
  std::sort(tape.begin(), tape.end(),
            [](const detail::Node* a, const detail::Node* b) { return a->seq > b->seq; });

  for (auto* n : tape) {
    if (!n->is_leaf()) n->grad.assign(n->data.size(), 0.0);
  }
  loss.node()->ensure_grad()[0] += 1.0;
  for (auto* n : tape) {
    if (n->is_leaf()) continue;
    n->backward_fn(*n);
    n->grad.clear();
    n->grad.shrink_to_fit();
  }
}

bool grad_enabled() { return t_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(t_grad_enabled) { t_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { t_grad_enabled = previous_; }

void set_check_finite(bool enabled) { g_check_finite.store(enabled); }
bool check_finite_enabled() { return g_check_finite.load(); }

std::size_t live_node_count() { return g_live_nodes.load(); }

}  // namespace peerstyle
