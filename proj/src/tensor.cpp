#include "s2w/tensor.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <sstream>
#include <unordered_set>

namespace s2w
{

namespace
{
thread_local bool g_grad_enabled = true;

std::atomic<std::size_t> g_live_bytes{0};
std::atomic<std::size_t> g_peak_bytes{0};

void account_alloc(std::size_t bytes)
{
  const std::size_t now = g_live_bytes.fetch_add(bytes) + bytes;
  std::size_t peak = g_peak_bytes.load();
  while (now > peak && !g_peak_bytes.compare_exchange_weak(peak, now)) {
  }
}

void account_free(std::size_t bytes)
{
  g_live_bytes.fetch_sub(bytes);
}
} // namespace

std::size_t numel(const Shape& shape)
{
  std::size_t n = 1;
  for (auto d : shape)
    n *= d;
  return n;
}

std::string to_string(const Shape& shape)
{
  std::ostringstream os;
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i)
      os << 'x';
    os << shape[i];
  }
  return os.str();
}

namespace detail
{
Node::Node(Shape s, std::vector<double> v)
  : shape(std::move(s)), value(std::move(v))
{
  if (shape.size() > 4)
    throw ShapeError("tensor rank " + std::to_string(shape.size()) + " exceeds 4");
  if (value.size() != numel(shape))
    throw ShapeError("data length " + std::to_string(value.size()) +
                     " does not match shape " + to_string(shape));
  accounted_bytes = value.size() * sizeof(double);
  account_alloc(accounted_bytes);
}

Node::~Node()
{
  account_free(accounted_bytes);
}

std::vector<double>& Node::grad_buffer()
{
  if (grad.empty() && !value.empty()) {
    grad.assign(value.size(), 0.0);
    const std::size_t bytes = grad.size() * sizeof(double);
    accounted_bytes += bytes;
    account_alloc(bytes);
  }
  return grad;
}
} // namespace detail

Tensor::Tensor(Shape shape, double fill)
{
  const std::size_t n = s2w::numel(shape);
  node_ = std::make_shared<detail::Node>(std::move(shape), std::vector<double>(n, fill));
}

Tensor::Tensor(Shape shape, std::vector<double> values)
  : node_(std::make_shared<detail::Node>(std::move(shape), std::move(values)))
{
}

Tensor Tensor::parameter(Shape shape, std::vector<double> values)
{
  Tensor t(std::move(shape), std::move(values));
  t.node_->requires_grad = true;
  return t;
}

Tensor Tensor::scalar(double v)
{
  return Tensor(Shape{1}, std::vector<double>{v});
}

Tensor Tensor::from_node(std::shared_ptr<detail::Node> node)
{
  Tensor t;
  t.node_ = std::move(node);
  return t;
}

const Shape& Tensor::shape() const
{
  if (!node_)
    throw std::logic_error("access to undefined tensor");
  return node_->shape;
}

std::size_t Tensor::dim(std::size_t axis) const
{
  const auto& s = shape();
  if (axis >= s.size())
    throw ShapeError("axis " + std::to_string(axis) + " out of range for shape " + to_string(s));
  return s[axis];
}

std::size_t Tensor::numel() const
{
  return node_ ? node_->value.size() : 0;
}

std::span<const double> Tensor::data() const
{
  return node_->value;
}

std::span<double> Tensor::data_mut()
{
  if (node_->backward_fn)
    throw std::logic_error("in-place write to a non-leaf tensor");
  return node_->value;
}

double Tensor::item() const
{
  if (numel() != 1)
    throw ShapeError("item() on tensor of shape " + to_string(shape()));
  return node_->value[0];
}

bool Tensor::requires_grad() const
{
  return node_ && node_->requires_grad;
}

void Tensor::set_requires_grad(bool flag)
{
  if (node_->backward_fn)
    throw std::logic_error("requires_grad can only be toggled on leaves");
  node_->requires_grad = flag;
}

bool Tensor::has_grad() const
{
  return node_ && !node_->grad.empty();
}

std::span<const double> Tensor::grad() const
{
  return node_->grad;
}

std::span<double> Tensor::grad_mut()
{
  return node_->grad_buffer();
}

void Tensor::zero_grad()
{
  if (node_ && !node_->grad.empty())
    std::fill(node_->grad.begin(), node_->grad.end(), 0.0);
}

void Tensor::backward() const
{
  if (numel() != 1)
    throw ShapeError("backward() needs a single-element tensor, got " + to_string(shape()));
  if (!node_->requires_grad)
    return;

  // Iterative post-order DFS; graphs for the full network are thousands deep.
  std::vector<detail::Node*> order;
  std::unordered_set<detail::Node*> visited;
  std::vector<std::pair<detail::Node*, std::size_t>> stack;
  stack.emplace_back(node_.get(), 0);
  visited.insert(node_.get());
  while (!stack.empty()) {
    auto& [n, next] = stack.back();
    if (next < n->parents.size()) {
      detail::Node* p = n->parents[next++].get();
      if (p->requires_grad && visited.insert(p).second)
        stack.emplace_back(p, 0);
    } else {
      order.push_back(n);
      stack.pop_back();
    }
  }

  node_->grad_buffer()[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    detail::Node* n = *it;
    if (n->backward_fn && !n->grad.empty())
      n->backward_fn(*n);
  }
}

Tensor Tensor::detach() const
{
  return Tensor(shape(), node_->value);
}

Tensor Tensor::clone_leaf() const
{
  Tensor t(shape(), node_->value);
  t.node_->requires_grad = node_->requires_grad;
  return t;
}

Tensor make_op_result(Shape shape,
                      std::vector<double> value,
                      std::vector<Tensor> parents,
                      detail::BackwardFn backward,
                      const char* op_name)
{
  for (double v : value) {
    if (!std::isfinite(v))
      throw NumericalError(std::string("non-finite value produced by ") + op_name);
  }
  auto node = std::make_shared<detail::Node>(std::move(shape), std::move(value));
  if (g_grad_enabled) {
    const bool any = std::any_of(parents.begin(), parents.end(),
                                 [](const Tensor& p) { return p.requires_grad(); });
    if (any) {
      node->requires_grad = true;
      node->parents.reserve(parents.size());
      for (auto& p : parents)
        node->parents.push_back(p.node());
      node->backward_fn = std::move(backward);
    }
  }
  return Tensor::from_node(std::move(node));
}

bool grad_enabled()
{
  return g_grad_enabled;
}

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled)
{
  g_grad_enabled = false;
}

NoGradGuard::~NoGradGuard()
{
  g_grad_enabled = previous_;
}

namespace memory
{
std::size_t live_bytes()
{
  return g_live_bytes.load();
}

std::size_t peak_bytes()
{
  return g_peak_bytes.load();
}

void reset_peak()
{
  g_peak_bytes.store(g_live_bytes.load());
}

Reservation::Reservation(std::size_t bytes) : bytes_(bytes)
{
  account_alloc(bytes_);
}

Reservation::~Reservation()
{
  account_free(bytes_);
}
} // namespace memory

void require_same_shape(const Tensor& a, const Tensor& b, const char* what)
{
  if (a.shape() != b.shape())
    throw ShapeError(std::string(what) + ": shape mismatch " + to_string(a.shape()) + " vs " +
                     to_string(b.shape()));
}

} // namespace s2w
