#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

namespace s2w
{

struct BenchPoint
{
  std::size_t size = 0;
  double median_seconds = 0.0;
  std::size_t peak_bytes = 0; // high-water above the pre-run baseline
};

/// Forward and backward of selective_scan_core over `tokens` tokens with
/// `channels` x `state` recurrences, median over `repeats` runs.
BenchPoint bench_scan(std::size_t tokens, std::size_t channels, std::size_t state,
                      std::size_t repeats, std::uint64_t seed);

/// dwt2d followed by idwt2d on a `bands` x s x s image with s*s = pixels.
BenchPoint bench_dwt(std::size_t pixels, std::size_t bands, std::size_t repeats, std::uint64_t seed);

/// ratios[i] = points[i+1].median_seconds / points[i].median_seconds
std::vector<double> growth_ratios(const std::vector<BenchPoint>& points);

} // namespace s2w
