#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace s2w
{

using Shape = std::vector<std::size_t>;

std::size_t numel(const Shape& shape);
std::string to_string(const Shape& shape);

class ShapeError : public std::runtime_error
{
public:
  using std::runtime_error::runtime_error;
};

/// Raised when an op produces NaN/Inf or a loss diverges.
class NumericalError : public std::runtime_error
{
public:
  using std::runtime_error::runtime_error;
};

namespace detail
{
struct Node;
using BackwardFn = std::function<void(Node&)>;

struct Node
{
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  BackwardFn backward_fn;
  std::size_t accounted_bytes = 0;

  Node(Shape s, std::vector<double> v);
  ~Node();
  Node(const Node&) = delete;
  Node& operator=(const Node&) = delete;

  /// Zero-filled on first access.
  std::vector<double>& grad_buffer();
};
} // namespace detail

/// Dense row-major tensor with reverse-mode differentiation.
///
/// A Tensor is a shared handle onto a graph node. Values are immutable once an
/// op has produced them; only leaves (parameters, inputs) may be written in
/// place, and only gradients accumulate after construction.
class Tensor
{
public:
  Tensor() = default;
  explicit Tensor(Shape shape, double fill = 0.0);
  Tensor(Shape shape, std::vector<double> values);

  /// Leaf that accumulates gradients.
  static Tensor parameter(Shape shape, std::vector<double> values);
  static Tensor scalar(double v);

  bool defined() const { return static_cast<bool>(node_); }
  const Shape& shape() const;
  std::size_t rank() const { return shape().size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t numel() const;

  std::span<const double> data() const;
  /// Writable view; only valid on leaves.
  std::span<double> data_mut();
  double item() const;

  bool requires_grad() const;
  void set_requires_grad(bool flag);
  bool has_grad() const;
  std::span<const double> grad() const;
  std::span<double> grad_mut();
  void zero_grad();

  /// Seeds d(this)/d(this) = 1; the tensor must hold exactly one element.
  void backward() const;

  /// Same values, cut from the graph, no gradient.
  Tensor detach() const;
  /// Fresh leaf with copied values and the same requires_grad flag.
  Tensor clone_leaf() const;

  const std::shared_ptr<detail::Node>& node() const { return node_; }
  static Tensor from_node(std::shared_ptr<detail::Node> node);

private:
  std::shared_ptr<detail::Node> node_;
};

/// Builds an op result. Parents are retained only when gradient recording is
/// on and at least one parent requires grad. Throws NumericalError on any
/// non-finite value.
Tensor make_op_result(Shape shape,
                      std::vector<double> value,
                      std::vector<Tensor> parents,
                      detail::BackwardFn backward,
                      const char* op_name);

bool grad_enabled();

/// Disables graph recording on this thread for its lifetime.
class NoGradGuard
{
public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
  bool previous_;
};

/// Bytes held by live tensor values, gradients and op workspaces, process-wide.
namespace memory
{
std::size_t live_bytes();
std::size_t peak_bytes();
void reset_peak();

/// Counts an op's private buffer for as long as the reservation lives.
class Reservation
{
public:
  explicit Reservation(std::size_t bytes);
  ~Reservation();
  Reservation(const Reservation&) = delete;
  Reservation& operator=(const Reservation&) = delete;

private:
  std::size_t bytes_;
};
} // namespace memory

void require_same_shape(const Tensor& a, const Tensor& b, const char* what);

} // namespace s2w
