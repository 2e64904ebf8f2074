#pragma once

// Dense arrays with reverse-mode differentiation.
//
// A Var is a shared handle onto a graph node. Ops build new nodes that keep
// their inputs alive and a closure that pushes the output gradient back into
// them; backward() walks the graph in reverse topological order. Leaves
// created with requires_grad accumulate gradients until zero_grad().

#if defined(__GLIBC__)
#include <malloc.h>
#endif
#include <cmath>
#include <cstddef>
#include <functional>
#include <memory>
#include <numeric>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

namespace vqsgen {

using Shape = std::vector<std::size_t>;

inline std::size_t numel(const Shape& s) {
  return std::accumulate(s.begin(), s.end(), std::size_t{1}, std::multiplies<>());
}

inline std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
  os << ']';
  return os.str();
}

class ShapeError : public std::invalid_argument {
 public:
  ShapeError(const std::string& op, const Shape& a, const Shape& b)
      : std::invalid_argument(op + ": shape mismatch " + shape_str(a) + " vs " + shape_str(b)) {}
  explicit ShapeError(const std::string& msg) : std::invalid_argument(msg) {}
};

class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

namespace detail {

struct Node {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;
  bool requires_grad = false;
  const char* op = "leaf";
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward;

  std::vector<double>& ensure_grad() {
    if (grad.size() != value.size()) grad.assign(value.size(), 0.0);
    return grad;
  }
};

struct GradMode {
  static bool& enabled() {
    thread_local bool on = true;
    return on;
  }
};

struct FiniteChecks {
  static bool& enabled() {
    static bool on = true;
    return on;
  }
};

}  // namespace detail

/// Disables graph recording on the current thread for its lifetime.
class NoGradGuard {
 public:
  NoGradGuard() : prev_(detail::GradMode::enabled()) { detail::GradMode::enabled() = false; }
  ~NoGradGuard() { detail::GradMode::enabled() = prev_; }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool prev_;
};

inline bool grad_enabled() { return detail::GradMode::enabled(); }

/// Global switch for the per-op NaN/Inf scan (on by default).
inline void set_finite_checks(bool on) { detail::FiniteChecks::enabled() = on; }

class Var {
 public:
  Var() = default;
  explicit Var(std::shared_ptr<detail::Node> n) : node_(std::move(n)) {}

  static Var zeros(Shape shape, bool requires_grad = false) {
    std::vector<double> v(numel(shape), 0.0);
    return from(std::move(shape), std::move(v), requires_grad);
  }

  static Var full(Shape shape, double x, bool requires_grad = false) {
    std::vector<double> v(numel(shape), x);
    return from(std::move(shape), std::move(v), requires_grad);
  }

  static Var scalar(double x, bool requires_grad = false) { return from({1}, {x}, requires_grad); }

  static Var from(Shape shape, std::vector<double> values, bool requires_grad = false) {
    if (numel(shape) != values.size()) {
      throw ShapeError("Var::from: " + shape_str(shape) + " needs " + std::to_string(numel(shape)) +
                       " values, got " + std::to_string(values.size()));
    }
    auto n = std::make_shared<detail::Node>();
    n->shape = std::move(shape);
    n->value = std::move(values);
    n->requires_grad = requires_grad;
    return Var(std::move(n));
  }

  bool defined() const { return static_cast<bool>(node_); }
  const Shape& shape() const { return node_->shape; }
  std::size_t dim(std::size_t i) const { return node_->shape.at(i); }
  std::size_t rank() const { return node_->shape.size(); }
  std::size_t size() const { return node_->value.size(); }
  bool requires_grad() const { return node_->requires_grad; }

  std::span<const double> values() const { return node_->value; }
  std::span<double> mutable_values() { return node_->value; }
  const std::vector<double>& vec() const { return node_->value; }
  double operator[](std::size_t i) const { return node_->value[i]; }

  /// Gradient buffer; zeros if backward has not touched this node.
  std::span<const double> grad() const { return node_->ensure_grad(); }
  std::span<double> mutable_grad() { return node_->ensure_grad(); }
  void zero_grad() {
    if (!node_->grad.empty()) std::fill(node_->grad.begin(), node_->grad.end(), 0.0);
  }

  double item() const {
    if (size() != 1) throw ShapeError("item() on non-scalar " + shape_str(shape()));
    return node_->value[0];
  }

  detail::Node* node() const { return node_.get(); }
  const std::shared_ptr<detail::Node>& ptr() const { return node_; }

 private:
  std::shared_ptr<detail::Node> node_;
};

namespace detail {

inline void check_finite(const char* op, const std::vector<double>& v) {
  if (!FiniteChecks::enabled()) return;
  for (double x : v) {
    if (!std::isfinite(x)) throw NumericError(std::string(op) + ": non-finite value produced");
  }
}

/// Wraps freshly computed values into a graph node. The backward closure is
/// kept only when some input needs a gradient and recording is enabled.
inline Var make_result(const char* op, Shape shape, std::vector<double> values,
                       std::initializer_list<Var> inputs, std::function<void(Node&)> backward) {
  check_finite(op, values);
  auto n = std::make_shared<Node>();
  n->shape = std::move(shape);
  n->value = std::move(values);
  n->op = op;
  bool needs = false;
  if (GradMode::enabled()) {
    for (const Var& in : inputs) needs = needs || in.requires_grad();
  }
  if (needs) {
    n->requires_grad = true;
    for (const Var& in : inputs) n->parents.push_back(in.ptr());
    n->backward = std::move(backward);
  }
  return Var(std::move(n));
}

inline Var make_result(const char* op, Shape shape, std::vector<double> values,
                       const std::vector<Var>& inputs, std::function<void(Node&)> backward) {
  check_finite(op, values);
  auto n = std::make_shared<Node>();
  n->shape = std::move(shape);
  n->value = std::move(values);
  n->op = op;
  bool needs = false;
  if (GradMode::enabled()) {
    for (const Var& in : inputs) needs = needs || in.requires_grad();
  }
  if (needs) {
    n->requires_grad = true;
    for (const Var& in : inputs) n->parents.push_back(in.ptr());
    n->backward = std::move(backward);
  }
  return Var(std::move(n));
}

}  // namespace detail

/// Keeps freed activation buffers in the heap instead of returning them to
/// the OS; refaulting fresh pages costs more than the arithmetic at desk-scale
/// sizes. Process-wide and idempotent; a no-op outside glibc.
inline void retain_heap_memory() {
#if defined(__GLIBC__)
  static const bool once = [] {
    mallopt(M_MMAP_THRESHOLD, 256 << 20);
    mallopt(M_TRIM_THRESHOLD, 1 << 30);
    return true;
  }();
  (void)once;
#endif
}

/// Reverse-mode accumulation from a scalar loss into every requires_grad leaf.
inline void backward(const Var& loss) {
  if (!loss.defined() || loss.size() != 1) {
    throw ShapeError("backward: loss must be scalar, got " +
                     (loss.defined() ? shape_str(loss.shape()) : std::string("<undefined>")));
  }
  if (!loss.requires_grad()) return;

  std::vector<detail::Node*> order;
  std::unordered_set<detail::Node*> seen;
  std::vector<std::pair<detail::Node*, std::size_t>> stack{{loss.node(), 0}};
  seen.insert(loss.node());
  while (!stack.empty()) {
    auto& [n, next] = stack.back();
    if (next < n->parents.size()) {
      detail::Node* p = n->parents[next++].get();
      if (p->requires_grad && seen.insert(p).second) stack.emplace_back(p, 0);
    } else {
      order.push_back(n);
      stack.pop_back();
    }
  }

  // Interior gradients are scratch space for this pass.
  for (detail::Node* n : order) {
    if (n->backward) n->grad.assign(n->value.size(), 0.0);
  }
  loss.node()->ensure_grad()[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    detail::Node* n = *it;
    if (n->backward) n->backward(*n);
  }
}

}  // namespace vqsgen
