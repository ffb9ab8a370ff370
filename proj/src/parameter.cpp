#include "s2w/parameter.hpp"

#include <cmath>

namespace s2w
{

Tensor uniform_parameter(Shape shape, double bound, Rng& rng)
{
  std::uniform_real_distribution<double> dist(-bound, bound);
  std::vector<double> v(numel(shape));
  for (auto& x : v)
    x = dist(rng);
  return Tensor::parameter(std::move(shape), std::move(v));
}

Tensor fan_in_parameter(Shape shape, std::size_t fan_in, Rng& rng)
{
  return uniform_parameter(std::move(shape), 1.0 / std::sqrt(static_cast<double>(fan_in)), rng);
}

Tensor constant_parameter(Shape shape, double value)
{
  const std::size_t n = numel(shape);
  return Tensor::parameter(std::move(shape), std::vector<double>(n, value));
}

} // namespace s2w
