#pragma once

#include "s2w/branches.hpp"
#include "s2w/msdg.hpp"

#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace s2w
{

/// Invalid or conflicting configuration values.
class ConfigError : public std::invalid_argument
{
public:
  using std::invalid_argument::invalid_argument;
};

enum class Structural
{
  none,
  SpeO,  // spectral branch only
  SpaO,  // spatial branch only
  SeqB1, // spectral then spatial, no gate fusion
  SeqB2, // spatial then spectral, no gate fusion
  CRM,   // FMamba replaced by a conv residual block
  HP,    // Hadamard product instead of the dual gate
  AWS,   // channel-attention weighted sum instead of the dual gate
};

/// At most one structural change; gate toggles combine with each other and
/// with structural changes that keep the dual gate.
struct AblationConfig
{
  Structural structural = Structural::none;
  GateToggles gates;

  bool has_dual_gate() const;
  bool has_spectral() const;
  bool has_spatial() const;
  /// "full", "SpeO", "CRM+no_Gm", ...
  std::string name() const;

  /// Accepts '+' or ',' separated flags; "full" or "none" is the baseline.
  static AblationConfig parse(std::string_view text);
  /// The ten variants of the ablation table, in table order.
  static std::vector<AblationConfig> table_variants();
};

struct ModelConfig
{
  std::size_t ratio = 4;
  std::size_t bands = 8;
  std::size_t width = 32;
  FMambaConfig fmamba;
  AblationConfig ablation;

  BranchConfig branch_config() const;
  void validate() const;
};

/// Per-channel weights w = sigmoid(l1 - l2) from pooled [o1; o2] features;
/// residual = w * o1 + (1 - w) * o2.
struct ChannelAttentionParams
{
  Tensor w1, b1; // hidden x 2c
  Tensor w2, b2; // 2c x hidden

  void visit_parameters(const std::string& prefix, const ParamVisitor& fn);
};

struct S2WMambaModel
{
  ModelConfig config;
  std::uint64_t seed = 0;
  std::optional<SpectralBranchParams> spectral;
  std::optional<SpatialBranchParams> spatial;
  std::optional<DualMsdgParams> gate;
  std::optional<Conv2dParams> residual_head;        // single-path variants
  std::optional<ChannelAttentionParams> attention; // AWS

  void visit_parameters(const ParamVisitor& fn);
  ParameterList parameters();
  std::size_t parameter_count();
};

S2WMambaModel build_model(const ModelConfig& config, std::uint64_t seed);

/// Intermediate tensors of one forward pass; o1/o2 are undefined when the
/// variant has no such branch.
struct ForwardResult
{
  Tensor upsampled, o1, o2, residual, hrms;
};

ForwardResult forward_parts(const S2WMambaModel& model, const Tensor& pan, const Tensor& lrms);
/// HRMS = bicubic(LRMS) + residual.
Tensor forward(const S2WMambaModel& model, const Tensor& pan, const Tensor& lrms);

/// Residual from the two branch outputs for the variants with two branches
/// and no sequential coupling (full, CRM, HP, AWS, gate toggles).
Tensor combine_outputs(const S2WMambaModel& model, const Tensor& o1, const Tensor& o2);

/// Zeroes the last convolution of every path that feeds the residual and
/// the gate heads, so the model reduces to the bicubic upsampler.
void zero_residual_path(S2WMambaModel& model);

/// Mean absolute error over all samples and elements.
Tensor l1_batch_loss(std::span<const Tensor> preds, std::span<const Tensor> targets);

/// Rebuilds `model` as variant `ablation`, carrying over every parameter
/// whose name and shape still exist.
S2WMambaModel apply_ablation(S2WMambaModel& model, const AblationConfig& ablation);

} // namespace s2w
