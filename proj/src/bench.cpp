#include "s2w/bench.hpp"

#include "s2w/ops.hpp"
#include "s2w/parameter.hpp"
#include "s2w/wavelet.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>

namespace s2w
{

namespace
{
Tensor uniform_leaf(Shape shape, Rng& rng, double lo, double hi)
{
  std::vector<double> v(numel(shape));
  for (auto& x : v)
    x = lo + (hi - lo) * double(rng() >> 11) * 0x1.0p-53;
  Tensor t(std::move(shape), std::move(v));
  t.set_requires_grad(true);
  return t;
}

template <class F>
BenchPoint measure(std::size_t size, std::size_t repeats, F&& run)
{
  std::vector<double> seconds;
  std::size_t peak = 0;
  for (std::size_t r = 0; r < std::max<std::size_t>(1, repeats); ++r) {
    const std::size_t baseline = memory::live_bytes();
    memory::reset_peak();
    const auto start = std::chrono::steady_clock::now();
    run();
    seconds.push_back(std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count());
    peak = std::max(peak, memory::peak_bytes() - baseline);
  }
  std::nth_element(seconds.begin(), seconds.begin() + std::ptrdiff_t(seconds.size() / 2), seconds.end());
  return {size, seconds[seconds.size() / 2], peak};
}
} // namespace

BenchPoint bench_scan(std::size_t tokens, std::size_t channels, std::size_t state,
                      std::size_t repeats, std::uint64_t seed)
{
  return measure(tokens, repeats, [&] {
    Rng rng(seed);
    const Tensor u = uniform_leaf({tokens, channels}, rng, -1.0, 1.0);
    const Tensor delta = uniform_leaf({tokens, channels}, rng, 0.01, 0.2);
    const Tensor a_log = uniform_leaf({channels, state}, rng, -1.0, 1.0);
    const Tensor b = uniform_leaf({tokens, state}, rng, -1.0, 1.0);
    const Tensor c = uniform_leaf({tokens, state}, rng, -1.0, 1.0);
    const Tensor d = uniform_leaf({channels}, rng, -1.0, 1.0);
    sum(selective_scan_core(u, delta, a_log, b, c, d)).backward();
  });
}

BenchPoint bench_dwt(std::size_t pixels, std::size_t bands, std::size_t repeats, std::uint64_t seed)
{
  const auto side = static_cast<std::size_t>(std::llround(std::sqrt(double(pixels))));
  if (side * side != pixels || side % 2)
    throw ShapeError("bench_dwt: " + std::to_string(pixels) + " pixels is not an even square");
  return measure(pixels, repeats, [&] {
    Rng rng(seed);
    NoGradGuard guard;
    const Tensor x = uniform_leaf({bands, side, side}, rng, 0.0, 1.0);
    (void)idwt2d(dwt2d(x));
  });
}

std::vector<double> growth_ratios(const std::vector<BenchPoint>& points)
{
  std::vector<double> out;
  for (std::size_t i = 1; i < points.size(); ++i)
    out.push_back(points[i].median_seconds / points[i - 1].median_seconds);
  return out;
}

} // namespace s2w
