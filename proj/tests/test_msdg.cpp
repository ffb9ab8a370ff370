#include "s2w/msdg.hpp"

#include "test_support.hpp"

#include <doctest.h>

using namespace s2w;
using s2w::test::bit_equal;
using s2w::test::random_tensor;

namespace
{
template <class P>
ParameterList collect(P& p, const std::string& prefix)
{
  ParameterList out;
  p.visit_parameters(prefix, [&](const std::string& n, Tensor& t) { out.push_back({n, t}); });
  return out;
}

void fill(Tensor& t, double v)
{
  std::fill(t.data_mut().begin(), t.data_mut().end(), v);
}
} // namespace

TEST_SUITE("msdg")
{
  TEST_CASE("zero-initialized head leaves the main stream unchanged")
  {
    Rng rng(1);
    const MsdgParams p = make_msdg(4, rng);
    const Tensor x = random_tensor({4, 6, 5}, rng), e = random_tensor({4, 6, 5}, rng);
    CHECK(bit_equal(msdg_gate(x, e, p), x));
  }

  TEST_CASE("additive gate only shifts the output")
  {
    Rng rng(2);
    MsdgParams p = make_msdg(2, rng);
    fill(p.head.bias, 0.0);
    for (std::size_t i = 4; i < 6; ++i)
      p.head.bias.data_mut()[i] = 0.25; // g_add channels
    const Tensor x = random_tensor({2, 4, 4}, rng), e = random_tensor({2, 4, 4}, rng);
    const Tensor out = msdg_gate(x, e, p);
    for (std::size_t i = 0; i < x.numel(); ++i)
      CHECK(out.data()[i] == doctest::Approx(x.data()[i] + 0.25).epsilon(1e-15));
  }

  TEST_CASE("gate application by hand")
  {
    const Tensor x(Shape{1, 1, 2}, {2.0, -1.0});
    const Tensor e(Shape{1, 1, 2}, {3.0, 0.5});
    const GateBundle g{Tensor(Shape{1, 1, 2}, {0.5, -0.2}), Tensor(Shape{1, 1, 2}, {0.1, 0.3}),
                       Tensor(Shape{1, 1, 2}, {1.0, -2.0})};
    const Tensor out = apply_gates(x, e, g);
    // 2 (1 + 0.1 + 1.5) + 1,  -1 (1 + 0.3 - 0.1) - 2
    CHECK(out.data()[0] == doctest::Approx(6.2));
    CHECK(out.data()[1] == doctest::Approx(-3.2));
  }

  TEST_CASE("gate toggles zero their gate")
  {
    Rng rng(3);
    MsdgParams p = make_msdg(3, rng);
    s2w::test::perturb(collect(p, ""), rng);
    const Tensor x = random_tensor({3, 4, 4}, rng), e = random_tensor({3, 4, 4}, rng);
    const MsdgFeatures all = msdg_features(x, e, p);
    const MsdgFeatures f = msdg_features(x, e, p, {true, false, true});
    for (double v : f.gates.g_mul.data())
      CHECK(v == 0.0);
    for (double v : f.gates.g_add.data())
      CHECK(v == 0.0);
    CHECK(bit_equal(f.gates.g_dec, all.gates.g_dec));
    CHECK(s2w::test::max_abs_diff(all.gates.g_mul, f.gates.g_mul) > 0.0);
    for (double v : all.gates.g_mul.data())
      CHECK(std::abs(v) < 1.0);
  }

  TEST_CASE("global context is spatially constant")
  {
    Rng rng(4);
    MsdgParams p = make_msdg(4, rng);
    s2w::test::perturb(collect(p, ""), rng);
    const MsdgFeatures f = msdg_features(random_tensor({4, 5, 7}, rng), random_tensor({4, 5, 7}, rng), p);
    CHECK(f.gfeb.shape() == Shape{8, 5, 7});
    for (std::size_t ch = 0; ch < 8; ++ch)
      for (std::size_t i = 1; i < 35; ++i)
        CHECK(f.gfeb.data()[ch * 35 + i] == f.gfeb.data()[ch * 35]);
  }

  TEST_CASE("receptive fields of the local branches")
  {
    Rng rng(5);
    MsdgParams p = make_msdg(2, rng);
    s2w::test::perturb(collect(p, ""), rng);
    const Tensor x = random_tensor({2, 7, 7}, rng), e = random_tensor({2, 7, 7}, rng);
    Tensor x2(x.shape(), std::vector<double>(x.data().begin(), x.data().end()));
    x2.data_mut()[3 * 7 + 3] += 0.5; // channel 0, pixel (3, 3)
    const MsdgFeatures a = msdg_features(x, e, p), b = msdg_features(x2, e, p);
    for (std::size_t ch = 0; ch < 4; ++ch)
      for (std::size_t y = 0; y < 7; ++y)
        for (std::size_t xx = 0; xx < 7; ++xx) {
          const std::size_t i = (ch * 7 + y) * 7 + xx;
          const bool centre = y == 3 && xx == 3;
          const bool near = y >= 2 && y <= 4 && xx >= 2 && xx <= 4;
          if (!centre)
            CHECK(a.rfeb1.data()[i] == b.rfeb1.data()[i]);
          if (!near)
            CHECK(a.rfeb3.data()[i] == b.rfeb3.data()[i]);
        }
    CHECK(a.rfeb1.data()[3 * 7 + 3] != b.rfeb1.data()[3 * 7 + 3]);
  }

  TEST_CASE("dual gate blending")
  {
    Rng rng(6);
    DualMsdgParams p = make_dual_msdg(3, rng);
    const Tensor o1 = random_tensor({3, 4, 4}, rng), o2 = random_tensor({3, 4, 4}, rng);
    CHECK(p.rho.data()[0] == 0.0);
    const Tensor mid = dual_msdg(o1, o2, p);
    for (std::size_t i = 0; i < o1.numel(); ++i)
      CHECK(mid.data()[i] == doctest::Approx(0.5 * (o1.data()[i] + o2.data()[i])).epsilon(1e-14));
    fill(p.rho, 40.0);
    CHECK(s2w::test::max_abs_diff(dual_msdg(o1, o2, p), o1) < 1e-12);
    fill(p.rho, -40.0);
    CHECK(s2w::test::max_abs_diff(dual_msdg(o1, o2, p), o2) < 1e-12);
  }

  TEST_CASE("shape validation")
  {
    Rng rng(7);
    const MsdgParams p = make_msdg(4, rng);
    CHECK_THROWS_AS(msdg_gate(Tensor(Shape{4, 4, 4}, 0.0), Tensor(Shape{4, 4, 5}, 0.0), p), ShapeError);
    CHECK_THROWS_AS(msdg_gate(Tensor(Shape{3, 4, 4}, 0.0), Tensor(Shape{3, 4, 4}, 0.0), p), ShapeError);
  }

  TEST_CASE("dual gate gradients on 4 x 8 x 8")
  {
    Rng rng(8);
    DualMsdgParams p = make_dual_msdg(4, rng);
    auto params = collect(p, "gate");
    s2w::test::perturb(params, rng);
    Tensor o1 = s2w::test::random_leaf({4, 8, 8}, rng), o2 = s2w::test::random_leaf({4, 8, 8}, rng);
    params.push_back({"o1", o1});
    params.push_back({"o2", o2});
    const Tensor gt = random_tensor({4, 8, 8}, rng, 4.0, 5.0);
    GradCheckOptions opts;
    opts.max_entries_per_param = 8;
    const auto report = check_gradients([&] { return l1_loss(dual_msdg(o1, o2, p), gt); }, params, opts);
    INFO("worst " << report.worst << " rel error " << report.max_rel_error);
    CHECK(report.passed);
  }
}
