#pragma once

#include "s2w/tensor.hpp"

#include <cstdint>
#include <functional>
#include <random>
#include <string>
#include <vector>

namespace s2w
{

/// A named trainable leaf. Names are dotted paths, e.g. "spebs1.fm_ll.alpha".
struct Parameter
{
  std::string name;
  Tensor tensor;
};

using ParameterList = std::vector<Parameter>;

/// Called once per trainable tensor with its path relative to the visited
/// block. The reference may be rebound (cloning, loading).
using ParamVisitor = std::function<void(const std::string& name, Tensor& tensor)>;

using Rng = std::mt19937_64;

/// U(-bound, bound) leaf with requires_grad set.
Tensor uniform_parameter(Shape shape, double bound, Rng& rng);
/// U(-1/sqrt(fan_in), 1/sqrt(fan_in)).
Tensor fan_in_parameter(Shape shape, std::size_t fan_in, Rng& rng);
Tensor constant_parameter(Shape shape, double value);

inline std::string join_name(const std::string& prefix, const std::string& leaf)
{
  return prefix.empty() ? leaf : prefix + "." + leaf;
}

} // namespace s2w
