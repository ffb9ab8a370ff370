#pragma once

#include "s2w/parameter.hpp"
#include "s2w/tensor.hpp"

namespace s2w
{

/// Row-major raster of a C x h x w map: N = h*w tokens of width C.
struct TokenSeq
{
  Tensor tokens; // N x d
  std::size_t h = 0, w = 0;
};

TokenSeq rasterize(const Tensor& x);
Tensor derasterize(const TokenSeq& seq);

struct SsmConfig
{
  std::size_t d_model = 32;
  std::size_t expand = 2;
  std::size_t d_state = 16;
  std::size_t conv_width = 4;

  std::size_t inner() const { return expand * d_model; }
  std::size_t dt_rank() const { return (d_model + 15) / 16; }
};

/// Projections and recurrence parameters of one selective-SSM mixer.
struct SsmParams
{
  SsmConfig config;
  Tensor in_x, in_z;           // E x d
  Tensor conv_w, conv_b;       // E x K, E
  Tensor w_delta;              // R x E
  Tensor w_b, w_c;             // S x E
  Tensor dt_proj_w, dt_proj_b; // E x R, E
  Tensor a_log;                // E x S, A = -exp(a_log)
  Tensor d_skip;               // E
  Tensor out_proj;             // d x E

  void visit_parameters(const std::string& prefix, const ParamVisitor& fn);
};

SsmParams make_ssm(const SsmConfig& config, Rng& rng);

/// Selective-SSM mixer. In self mode every input-dependent quantity comes
/// from `x`. With a modulator, the step size delta_t and input matrix B_t are
/// computed from the modulator tokens while u_t, C_t and the output gate
/// come from `x`, so the auxiliary stream decides what enters the state and
/// the main stream decides how it is read out.
TokenSeq selective_scan(const TokenSeq& x, const SsmParams& p, const TokenSeq* modulator = nullptr);

struct LayerNormParams
{
  Tensor gamma, beta;
  void visit_parameters(const std::string& prefix, const ParamVisitor& fn);
};

LayerNormParams make_layernorm(std::size_t d);

struct FMambaConfig
{
  SsmConfig ssm;
  /// Blend the raw streams x, y in the skip term instead of the residual
  /// streams x~, y~.
  bool skip_uses_raw_inputs = false;
};

struct FMambaParams
{
  FMambaConfig config;
  LayerNormParams self_x_norm, self_y_norm;
  SsmParams self_x, self_y;
  LayerNormParams cross_x_main_norm, cross_x_aux_norm, cross_y_main_norm, cross_y_aux_norm;
  SsmParams cross_x, cross_y;
  Tensor alpha; // 1 element, skip blend sigma(alpha)

  void visit_parameters(const std::string& prefix, const ParamVisitor& fn);
};

FMambaParams make_fmamba(const FMambaConfig& config, Rng& rng);

struct FMambaOutput
{
  Tensor fused; // F
  Tensor x_out; // x~ as C x h x w
  Tensor y_out; // y~ as C x h x w
};

/// x~ = x + phi(LN(x)), y~ likewise; x^ = Cross(x~ | y~), y^ = Cross(y~ | x~);
/// F = x^ + y^ + sigmoid(alpha) x~ + (1 - sigmoid(alpha)) y~.
FMambaOutput fmamba_block(const Tensor& x, const Tensor& y, const FMambaParams& p);

} // namespace s2w
