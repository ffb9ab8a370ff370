#include "s2w/train.hpp"

#include "s2w/checkpoint.hpp"
#include "s2w/metrics.hpp"
#include "s2w/ops.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace s2w
{

double TrainConfig::lr_at(std::size_t step) const
{
  return learning_rate * std::pow(decay, double(step / decay_every));
}

void TrainConfig::validate() const
{
  if (!(learning_rate > 0.0))
    throw ConfigError("learning rate must be positive");
  if (!(decay > 0.0 && decay < 1.0))
    throw ConfigError("lr decay must lie in (0, 1)");
  if (decay_every == 0 || batch == 0)
    throw ConfigError("decay interval and batch size must be positive");
  if (!(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0 && epsilon > 0.0 &&
        weight_decay >= 0.0))
    throw ConfigError("invalid optimizer moments, epsilon or weight decay");
}

AdamW::AdamW(ParameterList params, const TrainConfig& config)
  : params_(std::move(params)), beta1_(config.beta1), beta2_(config.beta2),
    epsilon_(config.epsilon), weight_decay_(config.weight_decay)
{
  for (const auto& p : params_) {
    m_.emplace_back(p.tensor.numel(), 0.0);
    v_.emplace_back(p.tensor.numel(), 0.0);
  }
}

void AdamW::step(double lr)
{
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, double(t_));
  const double c2 = 1.0 - std::pow(beta2_, double(t_));
  for (std::size_t i = 0; i < params_.size(); ++i) {
    Tensor& t = params_[i].tensor;
    auto value = t.data_mut();
    const bool has = t.has_grad();
    auto grad = has ? t.grad() : std::span<const double>{};
    auto& m = m_[i];
    auto& v = v_[i];
    for (std::size_t k = 0; k < value.size(); ++k) {
      const double g = has ? grad[k] : 0.0;
      m[k] = beta1_ * m[k] + (1.0 - beta1_) * g;
      v[k] = beta2_ * v[k] + (1.0 - beta2_) * g * g;
      const double update = (m[k] / c1) / (std::sqrt(v[k] / c2) + epsilon_);
      value[k] -= lr * (update + weight_decay_ * value[k]);
    }
    t.zero_grad();
  }
}

namespace
{
Tensor crop(const Tensor& t, std::size_t y, std::size_t x, std::size_t h, std::size_t w)
{
  const std::size_t c = t.dim(0), th = t.dim(1), tw = t.dim(2);
  if (y + h > th || x + w > tw)
    throw ShapeError("crop " + std::to_string(h) + "x" + std::to_string(w) + " at (" +
                     std::to_string(y) + ", " + std::to_string(x) + ") exceeds " +
                     to_string(t.shape()));
  std::vector<double> out(c * h * w);
  auto src = t.data();
  for (std::size_t b = 0; b < c; ++b)
    for (std::size_t i = 0; i < h; ++i)
      std::copy_n(src.begin() + static_cast<std::ptrdiff_t>((b * th + y + i) * tw + x), w,
                  out.begin() + static_cast<std::ptrdiff_t>((b * h + i) * w));
  return Tensor(Shape{c, h, w}, std::move(out));
}
} // namespace

Triplet crop_triplet(const Triplet& t, std::size_t y, std::size_t x, std::size_t patch,
                     std::size_t ratio)
{
  if (ratio == 0 || y % ratio || x % ratio || patch % ratio)
    throw ShapeError("crop_triplet: offsets and patch size must be multiples of the ratio");
  Triplet out;
  out.gt = crop(t.gt, y, x, patch, patch);
  out.pan = crop(t.pan, y, x, patch, patch);
  out.lrms = crop(t.lrms, y / ratio, x / ratio, patch / ratio, patch / ratio);
  if (t.pan_lp.numel())
    out.pan_lp = crop(t.pan_lp, y / ratio, x / ratio, patch / ratio, patch / ratio);
  return out;
}

double mean_psnr(const S2WMambaModel& model, std::span<const Triplet> data)
{
  NoGradGuard guard;
  double total = 0.0;
  for (const auto& t : data)
    total += psnr(forward(model, t.pan, t.lrms), t.gt);
  return total / double(data.size());
}

double bicubic_psnr(std::span<const Triplet> data, std::size_t ratio)
{
  double total = 0.0;
  for (const auto& t : data)
    total += psnr(bicubic_upsample(t.lrms, ratio), t.gt);
  return total / double(data.size());
}

double evaluate_loss(const S2WMambaModel& model, std::span<const Triplet> data)
{
  NoGradGuard guard;
  double total = 0.0;
  for (const auto& t : data)
    total += l1_loss(forward(model, t.pan, t.lrms), t.gt).item();
  return total / double(data.size());
}

std::vector<TrainRecord> train_toy(S2WMambaModel& model, std::span<const Triplet> train,
                                   std::span<const Triplet> validation, const TrainConfig& config,
                                   const std::function<void(const TrainRecord&)>& on_record)
{
  config.validate();
  if (train.empty())
    throw ConfigError("training set is empty");
  const std::size_t ratio = model.config.ratio;
  if (config.patch && (config.patch % ratio || config.patch > train[0].gt.dim(1) ||
                       config.patch > train[0].gt.dim(2)))
    throw ConfigError("patch size " + std::to_string(config.patch) +
                      " must be a multiple of the ratio and fit the training images");

  AdamW optimizer(model.parameters(), config);
  Rng rng(config.seed);
  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), 0);
  std::size_t cursor = order.size();
  auto next_index = [&] {
    if (cursor == order.size()) {
      // Fisher-Yates with raw engine output keeps the order library-independent.
      for (std::size_t i = order.size(); i > 1; --i)
        std::swap(order[i - 1], order[rng() % i]);
      cursor = 0;
    }
    return order[cursor++];
  };

  std::vector<TrainRecord> history;
  for (std::size_t s = 0; s < config.steps; ++s) {
    TrainRecord rec;
    rec.step = s + 1;
    rec.lr = config.lr_at(s);
    try {
      for (std::size_t b = 0; b < config.batch; ++b) {
        const Triplet& full = train[next_index()];
        Triplet sample = full;
        if (config.patch) {
          const std::size_t ny = (full.gt.dim(1) - config.patch) / ratio + 1;
          const std::size_t nx = (full.gt.dim(2) - config.patch) / ratio + 1;
          const std::size_t y = ratio * (rng() % ny), x = ratio * (rng() % nx);
          sample = crop_triplet(full, y, x, config.patch, ratio);
        }
        // Per-sample backward keeps one graph alive at a time; gradients sum.
        const Tensor loss =
          scale(l1_loss(forward(model, sample.pan, sample.lrms), sample.gt), 1.0 / double(config.batch));
        rec.loss += loss.item();
        loss.backward();
      }
    } catch (const NumericalError& e) {
      throw TrainingDiverged("training diverged at step " + std::to_string(rec.step) + ": " + e.what());
    }
    if (!std::isfinite(rec.loss))
      throw TrainingDiverged("training diverged at step " + std::to_string(rec.step) +
                             ": non-finite loss");
    optimizer.step(rec.lr);
    const bool last = s + 1 == config.steps;
    if (!validation.empty() &&
        (last || (config.validate_every && rec.step % config.validate_every == 0)))
      rec.val_psnr = mean_psnr(model, validation);
    history.push_back(rec);
    if (on_record)
      on_record(rec);
  }
  if (!config.checkpoint.empty())
    save_checkpoint(config.checkpoint, model);
  return history;
}

} // namespace s2w
