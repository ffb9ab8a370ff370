#pragma once

#include "s2w/fmamba.hpp"

#include <array>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace s2w
{

/// Same-padded k x k convolution (k odd).
struct Conv2dParams
{
  Tensor weight; // C_out x C_in x k x k
  Tensor bias;   // C_out

  Tensor operator()(const Tensor& x) const;
  void visit_parameters(const std::string& prefix, const ParamVisitor& fn);
};

Conv2dParams make_conv(std::size_t c_in, std::size_t c_out, std::size_t k, Rng& rng);
Conv2dParams make_zero_conv(std::size_t c_in, std::size_t c_out, std::size_t k);

/// Stand-in for FMamba in the conv-replacement ablation:
/// F = X + Y + conv2(GELU(conv1([X; Y]))) with 3x3 convs.
struct ConvFusionParams
{
  Conv2dParams conv1, conv2;
  void visit_parameters(const std::string& prefix, const ParamVisitor& fn);
};

enum class FusionKind
{
  mamba,
  conv,
};

/// One two-stream fusion unit ("FM" in the stage diagrams).
struct FusionBlock
{
  std::optional<FMambaParams> mamba;
  std::optional<ConvFusionParams> conv;

  Tensor operator()(const Tensor& x, const Tensor& y) const;
  void visit_parameters(const std::string& prefix, const ParamVisitor& fn);
};

FusionBlock make_fusion(FusionKind kind, const FMambaConfig& config, Rng& rng);

struct BranchConfig
{
  std::size_t ratio = 4;  // r
  std::size_t bands = 8;  // c
  std::size_t width = 32; // C
  FusionKind fusion = FusionKind::mamba;
  FMambaConfig fmamba;    // d_model is forced to width
};

struct SpectralBranchParams
{
  Conv2dParams pan_in;  // 1 -> C, produces LL_0
  Conv2dParams lrms_in; // c -> C, produces M_0
  std::vector<std::array<FusionBlock, 4>> stages; // LL, LH, HL, HH per stage
  Conv2dParams reduce;  // C -> c

  void visit_parameters(const std::string& prefix, const ParamVisitor& fn);
};

struct SpatialStageParams
{
  Conv2dParams proj_p, proj_l, proj_h; // Conv_C
  FusionBlock fuse_l, fuse_h;
  Conv2dParams back_l, back_h;         // Conv_orig

  void visit_parameters(const std::string& prefix, const ParamVisitor& fn);
};

struct SpatialBranchParams
{
  std::vector<SpatialStageParams> stages;
  void visit_parameters(const std::string& prefix, const ParamVisitor& fn);
};

SpectralBranchParams make_spectral_branch(const BranchConfig& config, Rng& rng);
SpatialBranchParams make_spatial_branch(const BranchConfig& config, Rng& rng);

/// Ordered (label, shape) rows of the stage-wise tensors a branch produced.
struct ShapeTrace
{
  std::vector<std::pair<std::string, Shape>> rows;
  void record(std::string label, Shape shape) { rows.emplace_back(std::move(label), std::move(shape)); }
};

/// Hierarchical spatial-detail injection. Stage i fuses M_{i-1} with the
/// level j = n_r - i + 1 subbands of the PAN feature pyramid and synthesizes
/// M_i at twice the resolution. Returns Output1 (c x H x W).
Tensor spectral_branch(const Tensor& pan, const Tensor& lrms, const SpectralBranchParams& p,
                       ShapeTrace* trace = nullptr);

/// Guided spectral refinement. P_0 is the raw PAN; stage i fuses P_{i-1}
/// with level j = n_c - i + 1 of the channel pyramid of `l0` and doubles
/// the channel count. Returns Output2 (c x H x W).
Tensor spatial_branch(const Tensor& pan, const Tensor& l0, const SpatialBranchParams& p,
                      ShapeTrace* trace = nullptr);

/// Separable bicubic interpolation (a = -0.5, half-pixel centers, clamped
/// borders) by an integer factor. Not differentiable; returns a constant.
Tensor bicubic_upsample(const Tensor& lrms, std::size_t ratio);

} // namespace s2w
