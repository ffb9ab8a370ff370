#pragma once

#include "s2w/dataset.hpp"
#include "s2w/network.hpp"

#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <vector>

namespace s2w
{

struct TrainConfig
{
  double learning_rate = 4e-4;
  double decay = 0.7;            // lr multiplier ...
  std::size_t decay_every = 100; // ... every this many steps
  std::size_t steps = 200;
  std::size_t batch = 4;
  std::size_t patch = 16;        // GT crop size; 0 trains on whole images
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double weight_decay = 1e-4;
  std::size_t validate_every = 50; // 0 validates only after the last step
  std::uint64_t seed = 0;
  std::filesystem::path checkpoint; // written after training when set

  double lr_at(std::size_t step) const;
  void validate() const;
};

/// Decoupled-weight-decay Adam over a fixed parameter list.
class AdamW
{
public:
  AdamW(ParameterList params, const TrainConfig& config);
  /// Applies one update from the accumulated gradients, then clears them.
  void step(double lr);
  std::size_t steps_taken() const { return t_; }

private:
  ParameterList params_;
  double beta1_, beta2_, epsilon_, weight_decay_;
  std::vector<std::vector<double>> m_, v_;
  std::size_t t_ = 0;
};

struct TrainRecord
{
  std::size_t step = 0; // 1-based index of the optimizer step
  double loss = 0.0;    // batch loss before the update
  double lr = 0.0;
  std::optional<double> val_psnr;
};

/// Raised when the loss or any intermediate value stops being finite.
class TrainingDiverged : public NumericalError
{
public:
  using NumericalError::NumericalError;
};

/// Aligned random crop: GT and PAN `patch` pixels, LRMS patch / r.
Triplet crop_triplet(const Triplet& t, std::size_t y, std::size_t x, std::size_t patch,
                     std::size_t ratio);

/// Mean PSNR of the model (or of bicubic upsampling) over whole triplets.
double mean_psnr(const S2WMambaModel& model, std::span<const Triplet> data);
double bicubic_psnr(std::span<const Triplet> data, std::size_t ratio);

/// Mean l1 loss of the model over `data` without recording gradients.
double evaluate_loss(const S2WMambaModel& model, std::span<const Triplet> data);

std::vector<TrainRecord> train_toy(S2WMambaModel& model, std::span<const Triplet> train,
                                   std::span<const Triplet> validation, const TrainConfig& config,
                                   const std::function<void(const TrainRecord&)>& on_record = {});

} // namespace s2w
