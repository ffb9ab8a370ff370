#include "s2w/ops.hpp"

#include "op_util.hpp"

#include <cmath>

namespace s2w
{

namespace
{
using detail::grad_of;
using detail::value_of;

// Neumaier-compensated running sum. Loss values feed finite-difference
// checks, where rounding in a plain reduction would dominate the difference.
class CompensatedSum
{
public:
  void add(double v)
  {
    const double t = sum_ + v;
    comp_ += std::abs(sum_) >= std::abs(v) ? (sum_ - t) + v : (v - t) + sum_;
    sum_ = t;
  }
  double value() const { return sum_ + comp_; }

private:
  double sum_ = 0.0, comp_ = 0.0;
};

// Unary op helper: f(x) forward, df(x, y) backward from input and output.
template <class F, class DF>
Tensor unary(const Tensor& a, const char* name, F f, DF df)
{
  auto in = a.data();
  std::vector<double> out(in.size());
  for (std::size_t i = 0; i < in.size(); ++i)
    out[i] = f(in[i]);
  return make_op_result(a.shape(), std::move(out), {a},
                        [df](detail::Node& self) {
                          auto* ga = grad_of(self, 0);
                          if (!ga)
                            return;
                          const auto& x = value_of(self, 0);
                          for (std::size_t i = 0; i < x.size(); ++i)
                            (*ga)[i] += self.grad[i] * df(x[i], self.value[i]);
                        },
                        name);
}

constexpr double kGeluC = 0.7978845608028654; // sqrt(2/pi)
constexpr double kGeluA = 0.044715;

double sigmoid_value(double x)
{
  if (x >= 0.0)
    return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}
} // namespace

Tensor add(const Tensor& a, const Tensor& b)
{
  require_same_shape(a, b, "add");
  auto x = a.data(), y = b.data();
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i)
    out[i] = x[i] + y[i];
  return make_op_result(a.shape(), std::move(out), {a, b},
                        [](detail::Node& self) {
                          for (std::size_t p = 0; p < 2; ++p)
                            if (auto* g = grad_of(self, p))
                              for (std::size_t i = 0; i < self.grad.size(); ++i)
                                (*g)[i] += self.grad[i];
                        },
                        "add");
}

Tensor sub(const Tensor& a, const Tensor& b)
{
  require_same_shape(a, b, "sub");
  auto x = a.data(), y = b.data();
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i)
    out[i] = x[i] - y[i];
  return make_op_result(a.shape(), std::move(out), {a, b},
                        [](detail::Node& self) {
                          if (auto* g = grad_of(self, 0))
                            for (std::size_t i = 0; i < self.grad.size(); ++i)
                              (*g)[i] += self.grad[i];
                          if (auto* g = grad_of(self, 1))
                            for (std::size_t i = 0; i < self.grad.size(); ++i)
                              (*g)[i] -= self.grad[i];
                        },
                        "sub");
}

Tensor mul(const Tensor& a, const Tensor& b)
{
  require_same_shape(a, b, "mul");
  auto x = a.data(), y = b.data();
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i)
    out[i] = x[i] * y[i];
  return make_op_result(a.shape(), std::move(out), {a, b},
                        [](detail::Node& self) {
                          const auto& x = value_of(self, 0);
                          const auto& y = value_of(self, 1);
                          if (auto* g = grad_of(self, 0))
                            for (std::size_t i = 0; i < self.grad.size(); ++i)
                              (*g)[i] += self.grad[i] * y[i];
                          if (auto* g = grad_of(self, 1))
                            for (std::size_t i = 0; i < self.grad.size(); ++i)
                              (*g)[i] += self.grad[i] * x[i];
                        },
                        "mul");
}

Tensor scale(const Tensor& a, double k)
{
  return unary(a, "scale", [k](double x) { return k * x; },
               [k](double, double) { return k; });
}

Tensor add_scalar(const Tensor& a, double k)
{
  return unary(a, "add_scalar", [k](double x) { return x + k; },
               [](double, double) { return 1.0; });
}

Tensor one_minus(const Tensor& a)
{
  return unary(a, "one_minus", [](double x) { return 1.0 - x; },
               [](double, double) { return -1.0; });
}

Tensor sigmoid(const Tensor& a)
{
  return unary(a, "sigmoid", sigmoid_value,
               [](double, double y) { return y * (1.0 - y); });
}

Tensor tanh(const Tensor& a)
{
  return unary(a, "tanh", [](double x) { return std::tanh(x); },
               [](double, double y) { return 1.0 - y * y; });
}

Tensor gelu(const Tensor& a)
{
  return unary(
    a, "gelu",
    [](double x) { return 0.5 * x * (1.0 + std::tanh(kGeluC * (x + kGeluA * x * x * x))); },
    [](double x, double) {
      const double t = std::tanh(kGeluC * (x + kGeluA * x * x * x));
      const double dt = (1.0 - t * t) * kGeluC * (1.0 + 3.0 * kGeluA * x * x);
      return 0.5 * (1.0 + t) + 0.5 * x * dt;
    });
}

Tensor silu(const Tensor& a)
{
  return unary(a, "silu", [](double x) { return x * sigmoid_value(x); },
               [](double x, double) {
                 const double s = sigmoid_value(x);
                 return s * (1.0 + x * (1.0 - s));
               });
}

Tensor softplus(const Tensor& a)
{
  return unary(a, "softplus",
               [](double x) { return x > 30.0 ? x : std::log1p(std::exp(x)); },
               [](double x, double) { return sigmoid_value(x); });
}

Tensor mul_scalar(const Tensor& s, const Tensor& a)
{
  if (s.numel() != 1)
    throw ShapeError("mul_scalar: factor must have one element, got " + to_string(s.shape()));
  const double k = s.item();
  auto x = a.data();
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i)
    out[i] = k * x[i];
  return make_op_result(a.shape(), std::move(out), {s, a},
                        [](detail::Node& self) {
                          const double k = value_of(self, 0)[0];
                          const auto& x = value_of(self, 1);
                          if (auto* g = grad_of(self, 0)) {
                            double acc = 0.0;
                            for (std::size_t i = 0; i < x.size(); ++i)
                              acc += self.grad[i] * x[i];
                            (*g)[0] += acc;
                          }
                          if (auto* g = grad_of(self, 1))
                            for (std::size_t i = 0; i < x.size(); ++i)
                              (*g)[i] += self.grad[i] * k;
                        },
                        "mul_scalar");
}

Tensor elementwise(Elementwise op, const Tensor& a, const Tensor& b, double k)
{
  const bool binary = op == Elementwise::add || op == Elementwise::sub || op == Elementwise::mul;
  if (binary && !b.defined())
    throw ShapeError("elementwise: binary op needs a second operand");
  switch (op) {
  case Elementwise::add:
    return add(a, b);
  case Elementwise::sub:
    return sub(a, b);
  case Elementwise::mul:
    return mul(a, b);
  case Elementwise::sigmoid:
    return sigmoid(a);
  case Elementwise::tanh:
    return tanh(a);
  case Elementwise::gelu:
    return gelu(a);
  case Elementwise::scale:
    return scale(a, k);
  }
  throw std::logic_error("unknown elementwise op");
}

Tensor sum(const Tensor& a)
{
  CompensatedSum acc;
  for (double v : a.data())
    acc.add(v);
  return make_op_result(Shape{1}, {acc.value()}, {a},
                        [](detail::Node& self) {
                          if (auto* g = grad_of(self, 0))
                            for (auto& v : *g)
                              v += self.grad[0];
                        },
                        "sum");
}

Tensor mean(const Tensor& a)
{
  return scale(sum(a), 1.0 / static_cast<double>(a.numel()));
}

Tensor l1_loss(const Tensor& pred, const Tensor& target)
{
  require_same_shape(pred, target, "l1_loss");
  auto p = pred.data(), t = target.data();
  CompensatedSum acc;
  for (std::size_t i = 0; i < p.size(); ++i)
    acc.add(std::abs(p[i] - t[i]));
  const double inv_n = 1.0 / static_cast<double>(p.size());
  return make_op_result(Shape{1}, {acc.value() * inv_n}, {pred, target},
                        [inv_n](detail::Node& self) {
                          const auto& p = value_of(self, 0);
                          const auto& t = value_of(self, 1);
                          const double g0 = self.grad[0] * inv_n;
                          auto* gp = grad_of(self, 0);
                          auto* gt = grad_of(self, 1);
                          for (std::size_t i = 0; i < p.size(); ++i) {
                            const double d = p[i] - t[i];
                            const double s = d > 0.0 ? 1.0 : (d < 0.0 ? -1.0 : 0.0);
                            if (gp)
                              (*gp)[i] += g0 * s;
                            if (gt)
                              (*gt)[i] -= g0 * s;
                          }
                        },
                        "l1_loss");
}

Tensor reshape(const Tensor& x, Shape shape)
{
  if (numel(shape) != x.numel())
    throw ShapeError("reshape: " + to_string(x.shape()) + " -> " + to_string(shape));
  auto in = x.data();
  return make_op_result(std::move(shape), std::vector<double>(in.begin(), in.end()), {x},
                        [](detail::Node& self) {
                          if (auto* g = grad_of(self, 0))
                            for (std::size_t i = 0; i < self.grad.size(); ++i)
                              (*g)[i] += self.grad[i];
                        },
                        "reshape");
}

Tensor concat_channels(std::span<const Tensor> parts)
{
  if (parts.empty())
    throw ShapeError("concat_channels: no inputs");
  const auto& s0 = parts.front().shape();
  if (s0.size() != 3)
    throw ShapeError("concat_channels: expected C x H x W, got " + to_string(s0));
  std::size_t channels = 0;
  for (const auto& p : parts) {
    const auto& s = p.shape();
    if (s.size() != 3 || s[1] != s0[1] || s[2] != s0[2])
      throw ShapeError("concat_channels: spatial mismatch " + to_string(s) + " vs " +
                       to_string(s0));
    channels += s[0];
  }
  std::vector<double> out;
  out.reserve(channels * s0[1] * s0[2]);
  std::vector<std::size_t> offsets;
  for (const auto& p : parts) {
    offsets.push_back(out.size());
    out.insert(out.end(), p.data().begin(), p.data().end());
  }
  std::vector<Tensor> parents(parts.begin(), parts.end());
  return make_op_result(Shape{channels, s0[1], s0[2]}, std::move(out), std::move(parents),
                        [offsets](detail::Node& self) {
                          for (std::size_t p = 0; p < self.parents.size(); ++p) {
                            auto* g = grad_of(self, p);
                            if (!g)
                              continue;
                            for (std::size_t i = 0; i < g->size(); ++i)
                              (*g)[i] += self.grad[offsets[p] + i];
                          }
                        },
                        "concat_channels");
}

Tensor slice_channels(const Tensor& x, std::size_t begin, std::size_t count)
{
  const auto& s = x.shape();
  if (s.size() != 3 || begin + count > s[0] || count == 0)
    throw ShapeError("slice_channels: [" + std::to_string(begin) + ", +" + std::to_string(count) +
                     ") out of range for " + to_string(s));
  const std::size_t plane = s[1] * s[2];
  auto in = x.data();
  std::vector<double> out(in.begin() + static_cast<std::ptrdiff_t>(begin * plane),
                          in.begin() + static_cast<std::ptrdiff_t>((begin + count) * plane));
  const std::size_t offset = begin * plane;
  return make_op_result(Shape{count, s[1], s[2]}, std::move(out), {x},
                        [offset](detail::Node& self) {
                          if (auto* g = grad_of(self, 0))
                            for (std::size_t i = 0; i < self.grad.size(); ++i)
                              (*g)[offset + i] += self.grad[i];
                        },
                        "slice_channels");
}

Tensor global_avg_pool(const Tensor& x)
{
  const auto& s = x.shape();
  if (s.size() != 3)
    throw ShapeError("global_avg_pool: expected C x H x W, got " + to_string(s));
  const std::size_t plane = s[1] * s[2];
  auto in = x.data();
  std::vector<double> out(s[0]);
  for (std::size_t c = 0; c < s[0]; ++c) {
    double acc = 0.0;
    for (std::size_t i = 0; i < plane; ++i)
      acc += in[c * plane + i];
    out[c] = acc / static_cast<double>(plane);
  }
  return make_op_result(Shape{s[0]}, std::move(out), {x},
                        [plane](detail::Node& self) {
                          auto* g = grad_of(self, 0);
                          if (!g)
                            return;
                          const double inv = 1.0 / static_cast<double>(plane);
                          for (std::size_t c = 0; c < self.grad.size(); ++c)
                            for (std::size_t i = 0; i < plane; ++i)
                              (*g)[c * plane + i] += self.grad[c] * inv;
                        },
                        "global_avg_pool");
}

Tensor broadcast_spatial(const Tensor& v, std::size_t h, std::size_t w)
{
  if (v.rank() != 1)
    throw ShapeError("broadcast_spatial: expected a vector, got " + to_string(v.shape()));
  const std::size_t c = v.dim(0), plane = h * w;
  std::vector<double> out(c * plane);
  for (std::size_t k = 0; k < c; ++k)
    std::fill(out.begin() + static_cast<std::ptrdiff_t>(k * plane),
              out.begin() + static_cast<std::ptrdiff_t>((k + 1) * plane), v.data()[k]);
  return make_op_result(Shape{c, h, w}, std::move(out), {v},
                        [plane](detail::Node& self) {
                          auto* g = grad_of(self, 0);
                          if (!g)
                            return;
                          for (std::size_t k = 0; k < g->size(); ++k) {
                            double acc = 0.0;
                            for (std::size_t i = 0; i < plane; ++i)
                              acc += self.grad[k * plane + i];
                            (*g)[k] += acc;
                          }
                        },
                        "broadcast_spatial");
}

Tensor avg_pool2d(const Tensor& x, std::size_t r)
{
  const auto& s = x.shape();
  if (s.size() != 3 || r == 0 || s[1] % r || s[2] % r)
    throw ShapeError("avg_pool2d: " + to_string(s) + " not divisible by " + std::to_string(r));
  const std::size_t C = s[0], H = s[1], W = s[2], h = H / r, w = W / r;
  auto in = x.data();
  std::vector<double> out(C * h * w, 0.0);
  const double inv = 1.0 / static_cast<double>(r * r);
  for (std::size_t c = 0; c < C; ++c)
    for (std::size_t y = 0; y < H; ++y)
      for (std::size_t xx = 0; xx < W; ++xx)
        out[(c * h + y / r) * w + xx / r] += in[(c * H + y) * W + xx] * inv;
  return make_op_result(Shape{C, h, w}, std::move(out), {x},
                        [C, H, W, h, w, r, inv](detail::Node& self) {
                          auto* g = grad_of(self, 0);
                          if (!g)
                            return;
                          for (std::size_t c = 0; c < C; ++c)
                            for (std::size_t y = 0; y < H; ++y)
                              for (std::size_t xx = 0; xx < W; ++xx)
                                (*g)[(c * H + y) * W + xx] +=
                                  self.grad[(c * h + y / r) * w + xx / r] * inv;
                        },
                        "avg_pool2d");
}

} // namespace s2w
