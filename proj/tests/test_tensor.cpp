#include "test_support.hpp"

#include <doctest.h>

#include <limits>

using namespace s2w;
using s2w::test::bit_equal;
using s2w::test::project;
using s2w::test::random_leaf;
using s2w::test::random_tensor;

namespace
{
void require_pass(const std::function<Tensor()>& f, std::span<const Parameter> params,
                  const GradCheckOptions& opts = {})
{
  const auto report = check_gradients(f, params, opts);
  INFO("worst parameter: " << report.worst << " rel error " << report.max_rel_error);
  CHECK(report.passed);
}

// Naive direct convolution used as an oracle.
std::vector<double> naive_conv(const Tensor& x, const Tensor& k, const Tensor& b, std::size_t stride,
                               std::size_t pad)
{
  const std::size_t ci = x.dim(0), h = x.dim(1), w = x.dim(2);
  const std::size_t co = k.dim(0), ks = k.dim(2);
  const std::size_t ho = (h + 2 * pad - ks) / stride + 1, wo = (w + 2 * pad - ks) / stride + 1;
  std::vector<double> out(co * ho * wo, 0.0);
  for (std::size_t o = 0; o < co; ++o)
    for (std::size_t y = 0; y < ho; ++y)
      for (std::size_t xx = 0; xx < wo; ++xx) {
        double acc = b.defined() ? b.data()[o] : 0.0;
        for (std::size_t c = 0; c < ci; ++c)
          for (std::size_t i = 0; i < ks; ++i)
            for (std::size_t j = 0; j < ks; ++j) {
              const long yy = long(y * stride + i) - long(pad), xc = long(xx * stride + j) - long(pad);
              if (yy < 0 || xc < 0 || yy >= long(h) || xc >= long(w))
                continue;
              acc += k.data()[((o * ci + c) * ks + i) * ks + j] * x.data()[(c * h + yy) * w + xc];
            }
        out[(o * ho + y) * wo + xx] = acc;
      }
  return out;
}
} // namespace

TEST_SUITE("tensor")
{
  TEST_CASE("construction validates data length and rank")
  {
    CHECK_THROWS_AS(Tensor(Shape{2, 2}, std::vector<double>{1, 2, 3}), ShapeError);
    CHECK_THROWS_AS(Tensor(Shape{1, 1, 1, 1, 1}, 0.0), ShapeError);
    Tensor t(Shape{2, 3}, 1.5);
    CHECK(t.numel() == 6);
    CHECK(t.data()[5] == 1.5);
  }

  TEST_CASE("elementwise examples")
  {
    const Tensor a(Shape{2}, {2, 3}), b(Shape{2}, {4, 5});
    const Tensor m = elementwise(Elementwise::mul, a, b);
    CHECK(m.data()[0] == 8);
    CHECK(m.data()[1] == 15);
    CHECK(sigmoid(Tensor::scalar(0.0)).item() == 0.5);
    CHECK(elementwise(Elementwise::scale, a, {}, 3.0).data()[1] == 9.0);
    Rng rng(3);
    const Tensor x = random_tensor({3, 4, 4}, rng);
    CHECK(bit_equal(add(x, Tensor(x.shape(), 0.0)), x));
  }

  TEST_CASE("add and mul commute bit for bit")
  {
    Rng rng(4);
    const Tensor x = random_tensor({4, 5, 5}, rng), y = random_tensor({4, 5, 5}, rng);
    CHECK(bit_equal(add(x, y), add(y, x)));
    CHECK(bit_equal(mul(x, y), mul(y, x)));
  }

  TEST_CASE("binary ops reject shape mismatch")
  {
    CHECK_THROWS_AS(add(Tensor(Shape{2}, 0.0), Tensor(Shape{3}, 0.0)), ShapeError);
    CHECK_THROWS_AS(mul(Tensor(Shape{2, 2}, 0.0), Tensor(Shape{4}, 0.0)), ShapeError);
  }

  TEST_CASE("non-finite results are errors")
  {
    const Tensor big(Shape{1}, std::numeric_limits<double>::max());
    CHECK_THROWS_AS(add(big, big), NumericalError);
    const Tensor nan(Shape{1}, std::numeric_limits<double>::quiet_NaN());
    CHECK_THROWS_AS(sigmoid(nan), NumericalError);
  }

  TEST_CASE("backward accumulates through shared subgraphs")
  {
    Tensor x = Tensor::parameter({2}, {1.0, 2.0});
    const Tensor y = mul(x, x);
    sum(add(y, y)).backward();
    CHECK(x.grad()[0] == doctest::Approx(4.0));
    CHECK(x.grad()[1] == doctest::Approx(8.0));
  }

  TEST_CASE("no-grad guard stops recording")
  {
    Tensor x = Tensor::parameter({2}, {1.0, 2.0});
    {
      NoGradGuard guard;
      CHECK_FALSE(mul(x, x).requires_grad());
    }
    CHECK(mul(x, x).requires_grad());
  }

  TEST_CASE("conv2d examples")
  {
    Rng rng(5);
    const Tensor x = random_tensor({1, 4, 4}, rng);
    const Tensor identity(Shape{1, 1, 1, 1}, 1.0);
    CHECK(bit_equal(conv2d(x, identity, {}, 1, 0), x));

    const Tensor q(Shape{1, 2, 2}, {1, 2, 3, 4});
    const Tensor box(Shape{1, 1, 2, 2}, 0.25);
    const Tensor y = conv2d(q, box, {}, 2, 0);
    CHECK(y.shape() == Shape{1, 1, 1});
    CHECK(y.item() == 2.5);
    CHECK_THROWS_AS(conv2d(random_tensor({2, 4, 4}, rng), random_tensor({1, 3, 3, 3}, rng), {}, 1, 1),
                    ShapeError);
  }

  TEST_CASE("conv2d matches direct evaluation")
  {
    Rng rng(6);
    for (std::size_t stride : {1, 2})
      for (std::size_t pad : {0, 1}) {
        const Tensor x = random_tensor({3, 7, 6}, rng), k = random_tensor({4, 3, 3, 3}, rng);
        const Tensor b = random_tensor({4}, rng);
        const Tensor y = conv2d(x, k, b, stride, pad);
        const auto ref = naive_conv(x, k, b, stride, pad);
        REQUIRE(y.numel() == ref.size());
        for (std::size_t i = 0; i < ref.size(); ++i)
          CHECK(y.data()[i] == doctest::Approx(ref[i]).epsilon(1e-12));
      }
  }

  TEST_CASE("layernorm examples")
  {
    const Tensor ones(Shape{3}, 1.0), zeros(Shape{3}, 0.0);
    const Tensor flat = layernorm(Tensor(Shape{1, 3}, 1.0), ones, zeros);
    for (double v : flat.data())
      CHECK(v == 0.0);
    const Tensor two = layernorm(Tensor(Shape{1, 2}, {1.0, 3.0}), Tensor(Shape{2}, 1.0),
                                 Tensor(Shape{2}, 0.0));
    // Variance 1 plus eps 1e-5.
    CHECK(two.data()[0] == doctest::Approx(-1.0 / std::sqrt(1.0 + 1e-5)).epsilon(1e-14));
    CHECK(two.data()[1] == doctest::Approx(1.0 / std::sqrt(1.0 + 1e-5)).epsilon(1e-14));
    Rng rng(7);
    const Tensor affine = layernorm(random_tensor({4, 3}, rng), zeros, Tensor(Shape{3}, 5.0));
    for (double v : affine.data())
      CHECK(v == 5.0);
  }

  TEST_CASE("causal depthwise conv sees only the past")
  {
    Rng rng(8);
    const Tensor x = random_tensor({10, 3}, rng), w = random_tensor({3, 4}, rng);
    const Tensor b = random_tensor({3}, rng);
    const Tensor y = causal_dwconv1d(x, w, b);
    for (std::size_t t = 0; t < 10; ++t)
      for (std::size_t c = 0; c < 3; ++c) {
        double ref = b.data()[c];
        for (std::size_t k = 0; k < 4; ++k) {
          const long src = long(t) - 3 + long(k);
          if (src >= 0)
            ref += w.data()[c * 4 + k] * x.data()[std::size_t(src) * 3 + c];
        }
        CHECK(y.data()[t * 3 + c] == doctest::Approx(ref).epsilon(1e-13));
      }
  }

  TEST_CASE("selective scan matches the naive recurrence")
  {
    Rng rng(9);
    const std::size_t n = 150, e = 3, s = 4; // crosses the checkpoint chunk boundary
    const Tensor u = random_tensor({n, e}, rng), delta = random_tensor({n, e}, rng, 0.01, 0.5);
    const Tensor a_log = random_tensor({e, s}, rng), b = random_tensor({n, s}, rng);
    const Tensor c = random_tensor({n, s}, rng), d = random_tensor({e}, rng);
    const Tensor y = selective_scan_core(u, delta, a_log, b, c, d);
    std::vector<double> h(e * s, 0.0);
    for (std::size_t t = 0; t < n; ++t)
      for (std::size_t ch = 0; ch < e; ++ch) {
        double acc = d.data()[ch] * u.data()[t * e + ch];
        for (std::size_t k = 0; k < s; ++k) {
          const double a = -std::exp(a_log.data()[ch * s + k]);
          double& hk = h[ch * s + k];
          hk = std::exp(delta.data()[t * e + ch] * a) * hk +
               delta.data()[t * e + ch] * b.data()[t * s + k] * u.data()[t * e + ch];
          acc += c.data()[t * s + k] * hk;
        }
        CHECK(y.data()[t * e + ch] == doctest::Approx(acc).epsilon(1e-12));
      }
    CHECK_THROWS_AS(selective_scan_core(u, scale(delta, -1.0), a_log, b, c, d), NumericalError);
  }

  TEST_CASE("gradient check harness examples")
  {
    Tensor x = Tensor::parameter({2}, {1.0, 2.0});
    const Parameter params[] = {{"x", x}};
    const auto report = check_gradients([&] { return sum(mul(x, x)); }, params);
    CHECK(report.passed);
    CHECK(report.max_rel_error < 1e-8);
    CHECK(x.grad()[0] == doctest::Approx(2.0));
    CHECK(x.grad()[1] == doctest::Approx(4.0));
  }

  TEST_CASE("gradient check flags a wrong backward")
  {
    Tensor x = Tensor::parameter({3}, {0.3, -0.7, 1.1});
    auto broken_square = [](const Tensor& a) {
      std::vector<double> v(a.data().begin(), a.data().end());
      for (auto& e : v)
        e *= e;
      return make_op_result(a.shape(), std::move(v), {a},
                            [](detail::Node& self) {
                              auto& g = self.parents[0]->grad_buffer();
                              const auto& av = self.parents[0]->value;
                              for (std::size_t i = 0; i < g.size(); ++i)
                                g[i] += 3.0 * av[i] * self.grad[i]; // should be 2
                            },
                            "broken_square");
    };
    const Parameter params[] = {{"x", x}};
    const auto report = check_gradients([&] { return sum(broken_square(x)); }, params);
    CHECK_FALSE(report.passed);
    CHECK(report.worst == "x");
  }

  TEST_CASE("elementwise gradients")
  {
    Rng rng(10);
    Tensor a = random_leaf({2, 3, 3}, rng), b = random_leaf({2, 3, 3}, rng);
    Tensor s = random_leaf({1}, rng);
    const Parameter params[] = {{"a", a}, {"b", b}, {"s", s}};
    require_pass([&] { return project(add(a, b)); }, params);
    require_pass([&] { return project(sub(a, b)); }, params);
    require_pass([&] { return project(mul(a, b)); }, params);
    require_pass([&] { return project(scale(a, -1.7)); }, params);
    require_pass([&] { return project(add_scalar(a, 0.3)); }, params);
    require_pass([&] { return project(sigmoid(a)); }, params);
    require_pass([&] { return project(tanh(a)); }, params);
    require_pass([&] { return project(gelu(a)); }, params);
    require_pass([&] { return project(silu(a)); }, params);
    require_pass([&] { return project(softplus(a)); }, params);
    require_pass([&] { return project(mul_scalar(s, a)); }, params);
    require_pass([&] { return project(one_minus(a)); }, params);
    require_pass([&] { return mean(mul(a, b)); }, params);
  }

  TEST_CASE("l1 loss value and gradient")
  {
    Rng rng(11);
    Tensor p = random_leaf({2, 4, 4}, rng);
    const Tensor gt = random_tensor({2, 4, 4}, rng, 2.0, 3.0); // far from every kink
    const Parameter params[] = {{"p", p}};
    require_pass([&] { return l1_loss(p, gt); }, params);
    CHECK(l1_loss(gt, gt).item() == 0.0);
    CHECK(l1_loss(add_scalar(gt, 0.5), gt).item() == doctest::Approx(0.5).epsilon(1e-15));
    double brute = 0.0;
    for (std::size_t i = 0; i < gt.numel(); ++i)
      brute += std::abs(p.data()[i] - gt.data()[i]);
    CHECK(l1_loss(p, gt).item() == doctest::Approx(brute / double(gt.numel())).epsilon(1e-14));
  }

  TEST_CASE("layout op gradients")
  {
    Rng rng(12);
    Tensor a = random_leaf({2, 4, 4}, rng), b = random_leaf({3, 4, 4}, rng);
    Tensor v = random_leaf({3}, rng);
    const Parameter params[] = {{"a", a}, {"b", b}, {"v", v}};
    require_pass([&] { return project(reshape(a, {4, 8})); }, params);
    require_pass([&] {
      const Tensor parts[] = {a, b};
      return project(concat_channels(parts));
    }, params);
    require_pass([&] { return project(slice_channels(b, 1, 2)); }, params);
    require_pass([&] { return project(global_avg_pool(b)); }, params);
    require_pass([&] { return project(broadcast_spatial(v, 2, 3)); }, params);
    require_pass([&] { return project(avg_pool2d(a, 2)); }, params);
  }

  TEST_CASE("convolution gradients")
  {
    Rng rng(13);
    Tensor x = random_leaf({3, 6, 6}, rng), k = random_leaf({2, 3, 3, 3}, rng);
    Tensor bias = random_leaf({2}, rng);
    Tensor dk = random_leaf({3, 1, 3, 3}, rng), db = random_leaf({3}, rng);
    const Parameter params[] = {{"x", x}, {"k", k}, {"bias", bias}, {"dk", dk}, {"db", db}};
    require_pass([&] { return project(conv2d(x, k, bias, 1, 1)); }, params);
    require_pass([&] { return project(conv2d(x, k, bias, 2, 0)); }, params);
    require_pass([&] { return project(depthwise_conv2d(x, dk, db, 1)); }, params);
    // The example from the operation contract: sum(conv2d(x, k)) w.r.t. x.
    GradCheckOptions tight;
    tight.tolerance = 1e-6;
    require_pass([&] { return sum(conv2d(x, k, {}, 1, 1)); }, params, tight);
  }

  TEST_CASE("sequence op gradients")
  {
    Rng rng(14);
    Tensor x = random_leaf({6, 4}, rng), w = random_leaf({3, 4}, rng), b = random_leaf({3}, rng);
    Tensor gamma = random_leaf({4}, rng), beta = random_leaf({4}, rng);
    Tensor cw = random_leaf({4, 4}, rng), cb = random_leaf({4}, rng);
    const Parameter params[] = {{"x", x},         {"w", w},       {"b", b},  {"gamma", gamma},
                                {"beta", beta},   {"cw", cw},     {"cb", cb}};
    require_pass([&] { return project(linear(x, w, b)); }, params);
    require_pass([&] { return project(layernorm(x, gamma, beta)); }, params);
    require_pass([&] { return project(causal_dwconv1d(x, cw, cb)); }, params);
  }

  TEST_CASE("selective scan gradients across checkpoint chunks")
  {
    Rng rng(15);
    const std::size_t n = 70, e = 2, s = 3;
    Tensor u = random_leaf({n, e}, rng), dpre = random_leaf({n, e}, rng);
    Tensor a_log = random_leaf({e, s}, rng), b = random_leaf({n, s}, rng);
    Tensor c = random_leaf({n, s}, rng), d = random_leaf({e}, rng);
    const Parameter params[] = {{"u", u}, {"delta", dpre}, {"a_log", a_log},
                                {"b", b}, {"c", c},        {"d", d}};
    require_pass([&] { return project(selective_scan_core(u, softplus(dpre), a_log, b, c, d)); },
                 params);
  }

  TEST_CASE("forward evaluation is deterministic")
  {
    Rng r1(16), r2(16);
    const Tensor x1 = random_tensor({3, 8, 8}, r1), x2 = random_tensor({3, 8, 8}, r2);
    Rng rk(17);
    const Tensor k = random_tensor({2, 3, 3, 3}, rk);
    CHECK(bit_equal(gelu(conv2d(x1, k, {}, 1, 1)), gelu(conv2d(x2, k, {}, 1, 1))));
  }

  TEST_CASE("memory accounting tracks live tensors")
  {
    const std::size_t before = memory::live_bytes();
    {
      Tensor t(Shape{1000}, 0.0);
      CHECK(memory::live_bytes() >= before + 8000);
    }
    CHECK(memory::live_bytes() == before);
  }
}
