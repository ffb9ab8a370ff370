#pragma once

#include "s2w/parameter.hpp"

#include <functional>
#include <span>

namespace s2w
{

struct GradCheckOptions
{
  double step = 1e-5;
  double tolerance = 1e-4;
  /// Denominator floor for the relative error, so exact-zero gradients are
  /// judged on absolute error.
  double magnitude_floor = 1e-6;
  /// 0 checks every entry; otherwise a seeded random subset per parameter.
  std::size_t max_entries_per_param = 0;
  std::uint64_t seed = 1;
};

struct GradCheckEntry
{
  std::string name;
  std::size_t checked = 0;
  double max_rel_error = 0.0;
};

struct GradCheckReport
{
  std::vector<GradCheckEntry> entries;
  double max_rel_error = 0.0;
  std::string worst;
  bool passed = false;
};

/// Compares reverse-mode gradients of the scalar `loss` against central
/// differences, perturbing each parameter leaf in place.
GradCheckReport check_gradients(const std::function<Tensor()>& loss,
                                std::span<const Parameter> params,
                                const GradCheckOptions& options = {});

} // namespace s2w
