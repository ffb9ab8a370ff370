#include "s2w/fmamba.hpp"

#include "s2w/ops.hpp"

#include "op_util.hpp"

#include <cmath>

namespace s2w
{

namespace
{
using detail::grad_of;

// (C x P) <-> (P x C) transpose shared by rasterize and derasterize.
Tensor transpose2(const Tensor& x, std::size_t rows, std::size_t cols, Shape out_shape,
                  const char* name)
{
  auto in = x.data();
  std::vector<double> out(rows * cols);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c)
      out[c * rows + r] = in[r * cols + c];
  return make_op_result(std::move(out_shape), std::move(out), {x},
                        [rows, cols](detail::Node& self) {
                          if (auto* g = grad_of(self, 0))
                            for (std::size_t r = 0; r < rows; ++r)
                              for (std::size_t c = 0; c < cols; ++c)
                                (*g)[r * cols + c] += self.grad[c * rows + r];
                        },
                        name);
}

Tensor apply_norm(const Tensor& tokens, const LayerNormParams& p)
{
  return layernorm(tokens, p.gamma, p.beta);
}

TokenSeq with_tokens(const TokenSeq& like, Tensor tokens)
{
  return {std::move(tokens), like.h, like.w};
}
} // namespace

TokenSeq rasterize(const Tensor& x)
{
  if (x.rank() != 3)
    throw ShapeError("rasterize: expected C x h x w, got " + to_string(x.shape()));
  const std::size_t c = x.dim(0), h = x.dim(1), w = x.dim(2);
  return {transpose2(x, c, h * w, Shape{h * w, c}, "rasterize"), h, w};
}

Tensor derasterize(const TokenSeq& seq)
{
  const auto& s = seq.tokens.shape();
  if (s.size() != 2 || s[0] != seq.h * seq.w)
    throw ShapeError("derasterize: " + std::to_string(s.empty() ? 0 : s[0]) +
                     " tokens do not match " + std::to_string(seq.h) + "x" +
                     std::to_string(seq.w));
  return transpose2(seq.tokens, s[0], s[1], Shape{s[1], seq.h, seq.w}, "derasterize");
}

void SsmParams::visit_parameters(const std::string& prefix, const ParamVisitor& fn)
{
  fn(join_name(prefix, "in_x"), in_x);
  fn(join_name(prefix, "in_z"), in_z);
  fn(join_name(prefix, "conv_w"), conv_w);
  fn(join_name(prefix, "conv_b"), conv_b);
  fn(join_name(prefix, "w_delta"), w_delta);
  fn(join_name(prefix, "w_b"), w_b);
  fn(join_name(prefix, "w_c"), w_c);
  fn(join_name(prefix, "dt_proj_w"), dt_proj_w);
  fn(join_name(prefix, "dt_proj_b"), dt_proj_b);
  fn(join_name(prefix, "a_log"), a_log);
  fn(join_name(prefix, "d_skip"), d_skip);
  fn(join_name(prefix, "out_proj"), out_proj);
}

SsmParams make_ssm(const SsmConfig& config, Rng& rng)
{
  const std::size_t d = config.d_model, e = config.inner(), s = config.d_state,
                    r = config.dt_rank(), k = config.conv_width;
  SsmParams p;
  p.config = config;
  p.in_x = fan_in_parameter({e, d}, d, rng);
  p.in_z = fan_in_parameter({e, d}, d, rng);
  p.conv_w = fan_in_parameter({e, k}, k, rng);
  p.conv_b = fan_in_parameter({e}, k, rng);
  p.w_delta = fan_in_parameter({r, e}, e, rng);
  p.w_b = fan_in_parameter({s, e}, e, rng);
  p.w_c = fan_in_parameter({s, e}, e, rng);
  p.dt_proj_w = fan_in_parameter({e, r}, r, rng);

  // Initial step sizes log-uniform in [1e-3, 1e-1], stored through the
  // inverse softplus so that softplus(bias) = dt.
  std::uniform_real_distribution<double> u(std::log(1e-3), std::log(1e-1));
  std::vector<double> bias(e);
  for (auto& b : bias) {
    const double dt = std::exp(u(rng));
    b = dt + std::log(-std::expm1(-dt));
  }
  p.dt_proj_b = Tensor::parameter({e}, std::move(bias));

  std::vector<double> a_log(e * s);
  for (std::size_t i = 0; i < e; ++i)
    for (std::size_t j = 0; j < s; ++j)
      a_log[i * s + j] = std::log(static_cast<double>(j + 1));
  p.a_log = Tensor::parameter({e, s}, std::move(a_log));
  p.d_skip = constant_parameter({e}, 1.0);
  p.out_proj = fan_in_parameter({d, e}, e, rng);
  return p;
}

TokenSeq selective_scan(const TokenSeq& x, const SsmParams& p, const TokenSeq* modulator)
{
  if (x.tokens.rank() != 2 || x.tokens.dim(1) != p.config.d_model)
    throw ShapeError("selective_scan: tokens " + to_string(x.tokens.shape()) +
                     " do not match model width " + std::to_string(p.config.d_model));
  if (modulator && modulator->tokens.shape() != x.tokens.shape())
    throw ShapeError("selective_scan: modulator " + to_string(modulator->tokens.shape()) +
                     " vs stream " + to_string(x.tokens.shape()));
  const Tensor none;
  const auto conv_branch = [&](const Tensor& tokens) {
    return silu(causal_dwconv1d(linear(tokens, p.in_x, none), p.conv_w, p.conv_b));
  };
  const Tensor u = conv_branch(x.tokens);
  const Tensor src = modulator ? conv_branch(modulator->tokens) : u;
  const Tensor delta =
    softplus(linear(linear(src, p.w_delta, none), p.dt_proj_w, p.dt_proj_b));
  const Tensor b = linear(src, p.w_b, none);
  const Tensor c = linear(u, p.w_c, none);
  const Tensor y = selective_scan_core(u, delta, p.a_log, b, c, p.d_skip);
  const Tensor gated = mul(y, silu(linear(x.tokens, p.in_z, none)));
  return with_tokens(x, linear(gated, p.out_proj, none));
}

void LayerNormParams::visit_parameters(const std::string& prefix, const ParamVisitor& fn)
{
  fn(join_name(prefix, "gamma"), gamma);
  fn(join_name(prefix, "beta"), beta);
}

LayerNormParams make_layernorm(std::size_t d)
{
  return {constant_parameter({d}, 1.0), constant_parameter({d}, 0.0)};
}

void FMambaParams::visit_parameters(const std::string& prefix, const ParamVisitor& fn)
{
  self_x_norm.visit_parameters(join_name(prefix, "self_x.norm"), fn);
  self_x.visit_parameters(join_name(prefix, "self_x.ssm"), fn);
  self_y_norm.visit_parameters(join_name(prefix, "self_y.norm"), fn);
  self_y.visit_parameters(join_name(prefix, "self_y.ssm"), fn);
  cross_x_main_norm.visit_parameters(join_name(prefix, "cross_x.main_norm"), fn);
  cross_x_aux_norm.visit_parameters(join_name(prefix, "cross_x.aux_norm"), fn);
  cross_x.visit_parameters(join_name(prefix, "cross_x.ssm"), fn);
  cross_y_main_norm.visit_parameters(join_name(prefix, "cross_y.main_norm"), fn);
  cross_y_aux_norm.visit_parameters(join_name(prefix, "cross_y.aux_norm"), fn);
  cross_y.visit_parameters(join_name(prefix, "cross_y.ssm"), fn);
  fn(join_name(prefix, "alpha"), alpha);
}

FMambaParams make_fmamba(const FMambaConfig& config, Rng& rng)
{
  const std::size_t d = config.ssm.d_model;
  FMambaParams p;
  p.config = config;
  p.self_x_norm = make_layernorm(d);
  p.self_x = make_ssm(config.ssm, rng);
  p.self_y_norm = make_layernorm(d);
  p.self_y = make_ssm(config.ssm, rng);
  p.cross_x_main_norm = make_layernorm(d);
  p.cross_x_aux_norm = make_layernorm(d);
  p.cross_x = make_ssm(config.ssm, rng);
  p.cross_y_main_norm = make_layernorm(d);
  p.cross_y_aux_norm = make_layernorm(d);
  p.cross_y = make_ssm(config.ssm, rng);
  p.alpha = constant_parameter({1}, 0.0);
  return p;
}

FMambaOutput fmamba_block(const Tensor& x_map, const Tensor& y_map, const FMambaParams& p)
{
  require_same_shape(x_map, y_map, "fmamba_block");
  if (x_map.rank() != 3 || x_map.dim(0) != p.config.ssm.d_model)
    throw ShapeError("fmamba_block: input " + to_string(x_map.shape()) +
                     " does not match model width " + std::to_string(p.config.ssm.d_model));

  const TokenSeq x = rasterize(x_map);
  const TokenSeq y = rasterize(y_map);

  const TokenSeq x_norm = with_tokens(x, apply_norm(x.tokens, p.self_x_norm));
  const TokenSeq y_norm = with_tokens(y, apply_norm(y.tokens, p.self_y_norm));
  const TokenSeq x_res = with_tokens(x, add(selective_scan(x_norm, p.self_x).tokens, x.tokens));
  const TokenSeq y_res = with_tokens(y, add(selective_scan(y_norm, p.self_y).tokens, y.tokens));

  const auto cross = [](const TokenSeq& main, const TokenSeq& aux, const LayerNormParams& main_n,
                        const LayerNormParams& aux_n, const SsmParams& ssm) {
    const TokenSeq m = with_tokens(main, apply_norm(main.tokens, main_n));
    const TokenSeq a = with_tokens(aux, apply_norm(aux.tokens, aux_n));
    return selective_scan(m, ssm, &a).tokens;
  };
  const Tensor x_hat = cross(x_res, y_res, p.cross_x_main_norm, p.cross_x_aux_norm, p.cross_x);
  const Tensor y_hat = cross(y_res, x_res, p.cross_y_main_norm, p.cross_y_aux_norm, p.cross_y);

  const Tensor& skip_x = p.config.skip_uses_raw_inputs ? x.tokens : x_res.tokens;
  const Tensor& skip_y = p.config.skip_uses_raw_inputs ? y.tokens : y_res.tokens;
  const Tensor weight = sigmoid(p.alpha);
  const Tensor skip = add(mul_scalar(weight, skip_x), mul_scalar(one_minus(weight), skip_y));
  const Tensor fused = add(add(x_hat, y_hat), skip);

  return {derasterize(with_tokens(x, fused)), derasterize(x_res), derasterize(y_res)};
}

} // namespace s2w
