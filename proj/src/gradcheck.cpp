#include "s2w/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace s2w
{

namespace
{
double evaluate(const std::function<Tensor()>& loss)
{
  NoGradGuard guard;
  const double v = loss().item();
  if (!std::isfinite(v))
    throw NumericalError("gradient check: non-finite loss");
  return v;
}
} // namespace

GradCheckReport check_gradients(const std::function<Tensor()>& loss,
                                std::span<const Parameter> params,
                                const GradCheckOptions& options)
{
  for (const auto& p : params) {
    for (double v : p.tensor.data())
      if (!std::isfinite(v))
        throw NumericalError("gradient check: parameter " + p.name + " is not finite");
    Tensor t = p.tensor;
    t.zero_grad();
  }

  Tensor value = loss();
  if (!std::isfinite(value.item()))
    throw NumericalError("gradient check: non-finite loss");
  value.backward();

  GradCheckReport report;
  Rng rng(options.seed);
  for (const auto& p : params) {
    Tensor t = p.tensor;
    const std::size_t n = t.numel();
    std::vector<double> analytic(n, 0.0);
    if (t.has_grad())
      std::copy(t.grad().begin(), t.grad().end(), analytic.begin());

    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    if (options.max_entries_per_param && n > options.max_entries_per_param) {
      std::shuffle(idx.begin(), idx.end(), rng);
      idx.resize(options.max_entries_per_param);
    }

    GradCheckEntry entry{p.name, idx.size(), 0.0};
    auto values = t.data_mut();
    for (std::size_t i : idx) {
      const double saved = values[i];
      values[i] = saved + options.step;
      const double up = evaluate(loss);
      values[i] = saved - options.step;
      const double down = evaluate(loss);
      values[i] = saved;
      const double numeric = (up - down) / (2.0 * options.step);
      const double denom =
        std::max({std::abs(analytic[i]), std::abs(numeric), options.magnitude_floor});
      entry.max_rel_error = std::max(entry.max_rel_error, std::abs(analytic[i] - numeric) / denom);
    }
    if (entry.max_rel_error >= report.max_rel_error) {
      report.max_rel_error = entry.max_rel_error;
      report.worst = p.name;
    }
    report.entries.push_back(std::move(entry));
  }
  report.passed = report.max_rel_error < options.tolerance;
  return report;
}

} // namespace s2w
