#pragma once

#include "s2w/tensor.hpp"

namespace s2w::detail
{

/// Gradient buffer of parent i, or nullptr when that parent is constant.
inline std::vector<double>* grad_of(Node& self, std::size_t i)
{
  auto& p = self.parents[i];
  return p->requires_grad ? &p->grad_buffer() : nullptr;
}

inline const std::vector<double>& value_of(Node& self, std::size_t i)
{
  return self.parents[i]->value;
}

} // namespace s2w::detail
