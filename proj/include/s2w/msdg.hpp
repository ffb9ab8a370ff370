#pragma once

#include "s2w/branches.hpp"

namespace s2w
{

/// g_mul and g_dec are tanh-bounded; g_add is linear. All c x H x W.
struct GateBundle
{
  Tensor g_mul, g_dec, g_add;
};

/// Gates forced to zero (and cut from the graph) for the gate ablations.
struct GateToggles
{
  bool no_mul = false;
  bool no_dec = false;
  bool no_add = false;
};

struct MsdgParams
{
  std::size_t bands = 0;
  Conv2dParams ieb_main, ieb_extra; // 1x1, c -> c
  LayerNormParams norm;             // over the 2c concatenated channels
  Conv2dParams rfeb1_dw, rfeb3_dw;  // depthwise 1x1 and 3x3 on 2c channels
  Conv2dParams rfeb1_pw, rfeb3_pw;  // pointwise 2c -> 2c
  Tensor gfeb_w1, gfeb_b1;          // bottleneck 2c -> 2c/4
  Tensor gfeb_w2, gfeb_b2;          // 2c/4 -> 2c
  Conv2dParams head;                // 1x1, 2c -> 3c, zero-initialized

  void visit_parameters(const std::string& prefix, const ParamVisitor& fn);
};

MsdgParams make_msdg(std::size_t bands, Rng& rng);

/// Intermediate tensors of one gate evaluation, exposed for inspection.
struct MsdgFeatures
{
  Tensor main_refined, extra_refined;
  Tensor rfeb1, rfeb3, gfeb; // each 2c x H x W
  GateBundle gates;
};

MsdgFeatures msdg_features(const Tensor& x_main, const Tensor& x_extra, const MsdgParams& p,
                           const GateToggles& toggles = {});

/// out = X_main * (1 + G_dec + G_mul * X_extra) + G_add
Tensor apply_gates(const Tensor& x_main, const Tensor& x_extra, const GateBundle& gates);

Tensor msdg_gate(const Tensor& x_main, const Tensor& x_extra, const MsdgParams& p,
                 const GateToggles& toggles = {});

/// Two gates with swapped roles blended by sigmoid(rho).
struct DualMsdgParams
{
  MsdgParams first, second;
  Tensor rho; // 1 element

  void visit_parameters(const std::string& prefix, const ParamVisitor& fn);
};

DualMsdgParams make_dual_msdg(std::size_t bands, Rng& rng);

/// sigmoid(rho) * msdg(o1, o2; first) + (1 - sigmoid(rho)) * msdg(o2, o1; second)
Tensor dual_msdg(const Tensor& o1, const Tensor& o2, const DualMsdgParams& p,
                 const GateToggles& toggles = {});

} // namespace s2w
