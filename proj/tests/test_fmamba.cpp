#include "s2w/fmamba.hpp"

#include "test_support.hpp"

#include <doctest.h>

#include <set>

using namespace s2w;
using s2w::test::bit_equal;
using s2w::test::project;
using s2w::test::random_tensor;

namespace
{
SsmConfig small_ssm(std::size_t d)
{
  SsmConfig c;
  c.d_model = d;
  c.d_state = 4;
  return c;
}

void zero(Tensor& t)
{
  auto v = t.data_mut();
  std::fill(v.begin(), v.end(), 0.0);
}

// Parameters of a block as a flat list for the gradient harness.
ParameterList collect(FMambaParams& p)
{
  ParameterList out;
  p.visit_parameters("fm", [&](const std::string& n, Tensor& t) { out.push_back({n, t}); });
  return out;
}
} // namespace

TEST_SUITE("fmamba")
{
  TEST_CASE("rasterization is row-major and invertible")
  {
    const Tensor x(Shape{1, 2, 2}, {1, 2, 3, 4});
    const TokenSeq seq = rasterize(x);
    CHECK(seq.tokens.shape() == Shape{4, 1});
    for (std::size_t i = 0; i < 4; ++i)
      CHECK(seq.tokens.data()[i] == double(i + 1));
    Rng rng(1);
    const Tensor y = random_tensor({8, 8, 8}, rng);
    const TokenSeq s = rasterize(y);
    CHECK(s.tokens.dim(1) == 8);
    CHECK(bit_equal(derasterize(s), y));
    CHECK_THROWS_AS(derasterize({s.tokens, 3, 8}), ShapeError);
  }

  TEST_CASE("default mixer sizes")
  {
    SsmConfig c;
    CHECK(c.d_state == 16);
    CHECK(c.expand == 2);
    CHECK(c.conv_width == 4);
    CHECK(c.inner() == 64);
    CHECK(c.dt_rank() == 2);
    Rng rng(2);
    const SsmParams p = make_ssm(c, rng);
    CHECK(p.in_x.shape() == Shape{64, 32});
    CHECK(p.a_log.shape() == Shape{64, 16});
    CHECK(p.conv_w.shape() == Shape{64, 4});
    // Softplus of the dt bias lands in the initial step-size range.
    for (double b : p.dt_proj_b.data()) {
      const double dt = std::log1p(std::exp(b));
      CHECK(dt >= 1e-3 * (1 - 1e-9));
      CHECK(dt <= 1e-1 * (1 + 1e-9));
    }
  }

  TEST_CASE("vanishing step size leaves only the skip path")
  {
    Rng rng(3);
    const std::size_t n = 12, e = 3, s = 4;
    const Tensor u = random_tensor({n, e}, rng), a_log = random_tensor({e, s}, rng);
    const Tensor b = random_tensor({n, s}, rng), c = random_tensor({n, s}, rng);
    const Tensor d = random_tensor({e}, rng);
    const Tensor tiny = softplus(Tensor(Shape{n, e}, -40.0));
    const Tensor y = selective_scan_core(u, tiny, a_log, b, c, d);
    for (std::size_t t = 0; t < n; ++t)
      for (std::size_t ch = 0; ch < e; ++ch)
        CHECK(y.data()[t * e + ch] == doctest::Approx(d.data()[ch] * u.data()[t * e + ch]).epsilon(1e-12));
  }

  TEST_CASE("single token closed form")
  {
    Rng rng(4);
    const std::size_t e = 2, s = 3;
    const Tensor u = random_tensor({1, e}, rng), delta = random_tensor({1, e}, rng, 0.1, 1.0);
    const Tensor a_log = random_tensor({e, s}, rng), b = random_tensor({1, s}, rng);
    const Tensor c = random_tensor({1, s}, rng), d = random_tensor({e}, rng);
    const Tensor y = selective_scan_core(u, delta, a_log, b, c, d);
    for (std::size_t ch = 0; ch < e; ++ch) {
      double ref = d.data()[ch] * u.data()[ch];
      for (std::size_t k = 0; k < s; ++k)
        ref += c.data()[k] * delta.data()[ch] * b.data()[k] * u.data()[ch];
      CHECK(y.data()[ch] == doctest::Approx(ref).epsilon(1e-14));
    }
  }

  TEST_CASE("mixer is causal")
  {
    Rng rng(5);
    const SsmParams p = make_ssm(small_ssm(6), rng);
    const Tensor tokens = random_tensor({20, 6}, rng);
    const Tensor full = selective_scan({tokens, 4, 5}, p).tokens;
    std::vector<double> head(tokens.data().begin(), tokens.data().begin() + 8 * 6);
    const Tensor part = selective_scan({Tensor(Shape{8, 6}, head), 2, 4}, p).tokens;
    for (std::size_t i = 0; i < part.numel(); ++i)
      CHECK(part.data()[i] == doctest::Approx(full.data()[i]).epsilon(1e-14));
  }

  TEST_CASE("cross mode depends on the modulator")
  {
    Rng rng(6);
    const SsmParams p = make_ssm(small_ssm(4), rng);
    const Tensor x = random_tensor({9, 4}, rng), m1 = random_tensor({9, 4}, rng);
    const Tensor m2 = random_tensor({9, 4}, rng);
    const TokenSeq xs{x, 3, 3}, a{m1, 3, 3}, b{m2, 3, 3};
    const Tensor y1 = selective_scan(xs, p, &a).tokens, y2 = selective_scan(xs, p, &b).tokens;
    CHECK(s2w::test::max_abs_diff(y1, y2) > 1e-6);
    const TokenSeq shorter{random_tensor({6, 4}, rng), 2, 3};
    CHECK_THROWS_AS(selective_scan(xs, p, &shorter), ShapeError);
  }

  TEST_CASE("alpha zero with silenced mixers gives the stream average")
  {
    Rng rng(7);
    FMambaConfig cfg;
    cfg.ssm = small_ssm(4);
    FMambaParams p = make_fmamba(cfg, rng);
    CHECK(p.alpha.item() == 0.0);
    for (SsmParams* s : {&p.self_x, &p.self_y, &p.cross_x, &p.cross_y})
      zero(s->out_proj);
    const Tensor x = random_tensor({4, 3, 3}, rng), y = random_tensor({4, 3, 3}, rng);
    const FMambaOutput out = fmamba_block(x, y, p);
    CHECK(bit_equal(out.fused, add(scale(x, 0.5), scale(y, 0.5))));
    CHECK(bit_equal(out.x_out, x));
    CHECK(bit_equal(out.y_out, y));

    // Skip blend interpolates monotonically between the two streams.
    p.alpha.data_mut()[0] = 2.0;
    const double w = 1.0 / (1.0 + std::exp(-2.0));
    const Tensor blended = fmamba_block(x, y, p).fused;
    for (std::size_t i = 0; i < x.numel(); ++i)
      CHECK(blended.data()[i] ==
            doctest::Approx(w * x.data()[i] + (1 - w) * y.data()[i]).epsilon(1e-14));
  }

  TEST_CASE("raw-input skip variant")
  {
    Rng rng(8);
    FMambaConfig cfg;
    cfg.ssm = small_ssm(4);
    cfg.skip_uses_raw_inputs = true;
    FMambaParams p = make_fmamba(cfg, rng);
    zero(p.cross_x.out_proj);
    zero(p.cross_y.out_proj);
    const Tensor x = random_tensor({4, 2, 2}, rng), y = random_tensor({4, 2, 2}, rng);
    CHECK(bit_equal(fmamba_block(x, y, p).fused, add(scale(x, 0.5), scale(y, 0.5))));
  }

  TEST_CASE("block rejects mismatched inputs")
  {
    Rng rng(9);
    FMambaConfig cfg;
    cfg.ssm = small_ssm(4);
    const FMambaParams p = make_fmamba(cfg, rng);
    CHECK_THROWS_AS(fmamba_block(Tensor(Shape{4, 2, 2}, 0.0), Tensor(Shape{4, 2, 3}, 0.0), p), ShapeError);
    CHECK_THROWS_AS(fmamba_block(Tensor(Shape{3, 2, 2}, 0.0), Tensor(Shape{3, 2, 2}, 0.0), p), ShapeError);
  }

  TEST_CASE("parameter names are unique")
  {
    Rng rng(10);
    FMambaParams p = make_fmamba({}, rng);
    const auto params = collect(p);
    std::set<std::string> names;
    for (const auto& q : params)
      names.insert(q.name);
    CHECK(names.size() == params.size());
    CHECK(names.count("fm.alpha") == 1);
    CHECK(names.count("fm.cross_y.ssm.a_log") == 1);
  }

  TEST_CASE("gradients over every block parameter")
  {
    Rng rng(11);
    FMambaConfig cfg;
    cfg.ssm = small_ssm(8);
    FMambaParams p = make_fmamba(cfg, rng);
    const auto params = collect(p);
    s2w::test::perturb(params, rng);
    const Tensor x = random_tensor({8, 4, 4}, rng), y = random_tensor({8, 4, 4}, rng);
    const Tensor target = random_tensor({8, 4, 4}, rng, 3.0, 4.0);
    const auto report =
      check_gradients([&] { return l1_loss(fmamba_block(x, y, p).fused, target); }, params);
    INFO("worst " << report.worst << " rel error " << report.max_rel_error);
    CHECK(report.passed);
  }

  TEST_CASE("input gradients through the block")
  {
    Rng rng(12);
    FMambaConfig cfg;
    cfg.ssm = small_ssm(4);
    const FMambaParams p = make_fmamba(cfg, rng);
    Tensor x = s2w::test::random_leaf({4, 3, 3}, rng), y = s2w::test::random_leaf({4, 3, 3}, rng);
    const Parameter params[] = {{"x", x}, {"y", y}};
    const auto report = check_gradients([&] {
      const FMambaOutput o = fmamba_block(x, y, p);
      return add(project(o.fused), project(o.y_out, 5));
    }, params);
    INFO("worst " << report.worst << " rel error " << report.max_rel_error);
    CHECK(report.passed);
  }
}
