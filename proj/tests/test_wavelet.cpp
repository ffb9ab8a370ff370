#include "s2w/wavelet.hpp"

#include "test_support.hpp"

#include <doctest.h>

using namespace s2w;
using s2w::test::max_abs_diff;
using s2w::test::project;
using s2w::test::random_leaf;
using s2w::test::random_tensor;

TEST_SUITE("wavelet")
{
  TEST_CASE("2x2 block decomposes to the hand-derived quad")
  {
    const Tensor x(Shape{1, 2, 2}, {1, 2, 3, 4});
    const Subbands2D s = dwt2d(x);
    CHECK(s.ll.item() == 2.5);
    CHECK(s.lh.item() == -1.0);
    CHECK(s.hl.item() == -0.5);
    CHECK(s.hh.item() == 0.0); // (1 - 2 - 3 + 4) / 4
    const Tensor back = idwt2d(s);
    CHECK(back.data()[0] == 1.0);
    CHECK(back.data()[1] == 2.0);
    CHECK(back.data()[2] == 3.0);
    CHECK(back.data()[3] == 4.0);
  }

  TEST_CASE("constant image has only an approximation band")
  {
    const Subbands2D s = dwt2d(Tensor(Shape{3, 8, 8}, 0.7));
    for (double v : s.ll.data())
      CHECK(v == 0.7);
    for (const Tensor* t : {&s.lh, &s.hl, &s.hh})
      for (double v : t->data())
        CHECK(v == 0.0);
    const Tensor z(Shape{3, 4, 4}, 0.0);
    const Tensor back = idwt2d({Tensor(Shape{3, 4, 4}, 0.7), z, z, z});
    for (double v : back.data())
      CHECK(v == 0.7);
  }

  TEST_CASE("subband shapes halve and the stacked layout is [LL; LH; HL; HH]")
  {
    Rng rng(1);
    const Tensor x = random_tensor({2, 8, 8}, rng);
    const Subbands2D s = dwt2d(x);
    for (const Tensor* t : {&s.ll, &s.lh, &s.hl, &s.hh})
      CHECK(t->shape() == Shape{2, 4, 4});
    const Tensor stacked = dwt2d_stacked(x);
    CHECK(stacked.shape() == Shape{8, 4, 4});
    CHECK(stacked.data()[3 * 16 + 5] == s.lh.data()[16 + 5]);
    CHECK(stacked.data()[6 * 16 + 3] == s.hh.data()[3]);
  }

  TEST_CASE("2D roundtrip on random images")
  {
    Rng rng(2);
    const Tensor x = random_tensor({1, 32, 32}, rng);
    CHECK(max_abs_diff(idwt2d(dwt2d(x)), x) < 1e-12);
    const Tensor y = random_tensor({5, 6, 10}, rng);
    CHECK(max_abs_diff(idwt2d_stacked(dwt2d_stacked(y)), y) < 1e-12);
  }

  TEST_CASE("1D pairs adjacent channels into a non-interleaved layout")
  {
    const Tensor x(Shape{2, 1, 1}, {3, 5});
    const Subbands1D s = dwt1d(x);
    CHECK(s.low.item() == 4.0);
    CHECK(s.high.item() == -1.0);
    const Tensor back = idwt1d(s.low, s.high);
    CHECK(back.data()[0] == 3.0);
    CHECK(back.data()[1] == 5.0);

    Rng rng(3);
    const Tensor y = random_tensor({8, 2, 2}, rng);
    const Subbands1D t = dwt1d(y);
    CHECK(t.low.shape() == Shape{4, 2, 2});
    CHECK(t.high.shape() == Shape{4, 2, 2});
    // Channel k of L comes from channels 2k and 2k+1.
    CHECK(t.low.data()[2 * 4 + 1] == doctest::Approx((y.data()[4 * 4 + 1] + y.data()[5 * 4 + 1]) / 2));
    const Tensor stacked = dwt1d_stacked(y);
    CHECK(stacked.data()[5 * 4 + 2] == t.high.data()[1 * 4 + 2]);
  }

  TEST_CASE("1D equal channels give zero detail and roundtrip")
  {
    const Subbands1D s = dwt1d(Tensor(Shape{4, 3, 3}, 0.25));
    for (double v : s.high.data())
      CHECK(v == 0.0);
    const Tensor back = idwt1d(Tensor(Shape{1, 1, 1}, 2.0), Tensor(Shape{1, 1, 1}, 0.0));
    CHECK(back.data()[0] == 2.0);
    CHECK(back.data()[1] == 2.0);
    Rng rng(4);
    const Tensor x = random_tensor({8, 16, 16}, rng);
    CHECK(max_abs_diff(idwt1d_stacked(dwt1d_stacked(x)), x) < 1e-12);
  }

  TEST_CASE("odd sizes and mismatched subbands are rejected")
  {
    CHECK_THROWS_AS(dwt2d(Tensor(Shape{1, 3, 4}, 0.0)), ShapeError);
    CHECK_THROWS_AS(dwt2d(Tensor(Shape{1, 4, 5}, 0.0)), ShapeError);
    CHECK_THROWS_AS(dwt1d(Tensor(Shape{3, 4, 4}, 0.0)), ShapeError);
    const Tensor a(Shape{1, 2, 2}, 0.0), b(Shape{1, 2, 3}, 0.0);
    CHECK_THROWS_AS(idwt2d({a, a, a, b}), ShapeError);
    CHECK_THROWS_AS(idwt1d(a, b), ShapeError);
  }

  TEST_CASE("transforms are linear")
  {
    Rng rng(5);
    const Tensor x = random_tensor({2, 8, 8}, rng), y = random_tensor({2, 8, 8}, rng);
    const Tensor lhs = dwt2d_stacked(add(scale(x, 0.3), scale(y, -1.2)));
    const Tensor rhs = add(scale(dwt2d_stacked(x), 0.3), scale(dwt2d_stacked(y), -1.2));
    CHECK(max_abs_diff(lhs, rhs) < 1e-14);
    const Tensor l1 = dwt1d_stacked(add(scale(x, 2.0), y));
    const Tensor r1 = add(scale(dwt1d_stacked(x), 2.0), dwt1d_stacked(y));
    CHECK(max_abs_diff(l1, r1) < 1e-14);
  }

  TEST_CASE("2D pyramid levels and reconstruction")
  {
    Rng rng(6);
    const Tensor feats = random_tensor({32, 64, 64}, rng);
    const Pyramid2D p = build_pyramid2d(feats, 4);
    REQUIRE(p.levels.size() == 2);
    CHECK(p.levels[0].ll.shape() == Shape{32, 32, 32});
    CHECK(p.levels[1].hh.shape() == Shape{32, 16, 16});
    CHECK(max_abs_diff(reconstruct(p), feats) < 1e-12);
    CHECK(build_pyramid2d(random_tensor({2, 8, 8}, rng), 2).levels.size() == 1);
    CHECK_THROWS_AS(build_pyramid2d(feats, 3), ShapeError);
  }

  TEST_CASE("1D pyramid channel counts")
  {
    Rng rng(7);
    const Pyramid1D p8 = build_pyramid1d(random_tensor({8, 4, 4}, rng));
    REQUIRE(p8.levels.size() == 3);
    CHECK(p8.levels[0].low.dim(0) == 4);
    CHECK(p8.levels[1].low.dim(0) == 2);
    CHECK(p8.levels[2].high.dim(0) == 1);
    CHECK(max_abs_diff(reconstruct(p8), p8.root) < 1e-12);
    CHECK(build_pyramid1d(random_tensor({4, 4, 4}, rng)).levels.size() == 2);
    CHECK_THROWS_AS(build_pyramid1d(random_tensor({6, 4, 4}, rng)), ShapeError);

    const Pyramid1D flat = build_pyramid1d(Tensor(Shape{8, 2, 2}, 0.4));
    for (const auto& level : flat.levels)
      for (double v : level.high.data())
        CHECK(v == 0.0);
  }

  TEST_CASE("transform gradients")
  {
    Rng rng(8);
    Tensor x = random_leaf({4, 4, 4}, rng);
    const Parameter params[] = {{"x", x}};
    auto check = [&](const std::function<Tensor()>& f) {
      const auto report = check_gradients(f, params);
      INFO("max rel error " << report.max_rel_error);
      CHECK(report.passed);
    };
    check([&] { return project(dwt2d_stacked(x)); });
    check([&] { return project(idwt2d_stacked(x)); });
    check([&] { return project(dwt1d_stacked(x)); });
    check([&] { return project(idwt1d_stacked(x)); });
    check([&] {
      const Subbands2D s = dwt2d(x);
      return project(idwt2d({s.ll, scale(s.lh, 2.0), s.hl, s.hh}));
    });
  }
}
