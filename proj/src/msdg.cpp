#include "s2w/msdg.hpp"

#include "s2w/ops.hpp"

#include <algorithm>

namespace s2w
{

namespace
{
std::size_t bottleneck(std::size_t width)
{
  return std::max<std::size_t>(1, width / 4);
}

Tensor depthwise(const Conv2dParams& c, const Tensor& x)
{
  return depthwise_conv2d(x, c.weight, c.bias, c.weight.dim(2) / 2);
}
} // namespace

void MsdgParams::visit_parameters(const std::string& prefix, const ParamVisitor& fn)
{
  ieb_main.visit_parameters(join_name(prefix, "ieb_main"), fn);
  ieb_extra.visit_parameters(join_name(prefix, "ieb_extra"), fn);
  norm.visit_parameters(join_name(prefix, "norm"), fn);
  rfeb1_dw.visit_parameters(join_name(prefix, "rfeb1.dw"), fn);
  rfeb1_pw.visit_parameters(join_name(prefix, "rfeb1.pw"), fn);
  rfeb3_dw.visit_parameters(join_name(prefix, "rfeb3.dw"), fn);
  rfeb3_pw.visit_parameters(join_name(prefix, "rfeb3.pw"), fn);
  fn(join_name(prefix, "gfeb.w1"), gfeb_w1);
  fn(join_name(prefix, "gfeb.b1"), gfeb_b1);
  fn(join_name(prefix, "gfeb.w2"), gfeb_w2);
  fn(join_name(prefix, "gfeb.b2"), gfeb_b2);
  head.visit_parameters(join_name(prefix, "head"), fn);
}

MsdgParams make_msdg(std::size_t bands, Rng& rng)
{
  const std::size_t c2 = 2 * bands, hidden = bottleneck(c2);
  MsdgParams p;
  p.bands = bands;
  p.ieb_main = make_conv(bands, bands, 1, rng);
  p.ieb_extra = make_conv(bands, bands, 1, rng);
  p.norm = make_layernorm(c2);
  p.rfeb1_dw = {fan_in_parameter({c2, 1, 1, 1}, 1, rng), fan_in_parameter({c2}, 1, rng)};
  p.rfeb1_pw = make_conv(c2, c2, 1, rng);
  p.rfeb3_dw = {fan_in_parameter({c2, 1, 3, 3}, 9, rng), fan_in_parameter({c2}, 9, rng)};
  p.rfeb3_pw = make_conv(c2, c2, 1, rng);
  p.gfeb_w1 = fan_in_parameter({hidden, c2}, c2, rng);
  p.gfeb_b1 = fan_in_parameter({hidden}, c2, rng);
  p.gfeb_w2 = fan_in_parameter({c2, hidden}, hidden, rng);
  p.gfeb_b2 = fan_in_parameter({c2}, hidden, rng);
  p.head = make_zero_conv(c2, 3 * bands, 1);
  return p;
}

MsdgFeatures msdg_features(const Tensor& x_main, const Tensor& x_extra, const MsdgParams& p,
                           const GateToggles& toggles)
{
  require_same_shape(x_main, x_extra, "msdg_gate");
  if (x_main.rank() != 3 || x_main.dim(0) != p.bands)
    throw ShapeError("msdg_gate: input " + to_string(x_main.shape()) + " vs " +
                     std::to_string(p.bands) + " bands");
  const std::size_t c = p.bands, h = x_main.dim(1), w = x_main.dim(2);

  MsdgFeatures f;
  // Interactive enhancement: each stream is re-weighted by a gate computed
  // from the other one, around an identity residual.
  f.main_refined = add(x_main, mul(x_main, sigmoid(p.ieb_main(x_extra))));
  f.extra_refined = add(x_extra, mul(x_extra, sigmoid(p.ieb_extra(x_main))));

  const Tensor both[] = {f.main_refined, f.extra_refined};
  const TokenSeq seq = rasterize(concat_channels(both));
  const Tensor normed =
    derasterize({layernorm(seq.tokens, p.norm.gamma, p.norm.beta), seq.h, seq.w});

  f.rfeb1 = gelu(p.rfeb1_pw(depthwise(p.rfeb1_dw, normed)));
  f.rfeb3 = gelu(p.rfeb3_pw(depthwise(p.rfeb3_dw, normed)));

  // Global context: pooled statistics through a bottleneck, broadcast back.
  const std::size_t c2 = 2 * c;
  const Tensor pooled = reshape(global_avg_pool(normed), {1, c2});
  const Tensor context = linear(gelu(linear(pooled, p.gfeb_w1, p.gfeb_b1)), p.gfeb_w2, p.gfeb_b2);
  f.gfeb = broadcast_spatial(reshape(context, {c2}), h, w);

  const Tensor gates = p.head(add(add(f.rfeb1, f.rfeb3), f.gfeb));
  f.gates.g_mul = toggles.no_mul ? Tensor(Shape{c, h, w}, 0.0) : tanh(slice_channels(gates, 0, c));
  f.gates.g_dec = toggles.no_dec ? Tensor(Shape{c, h, w}, 0.0) : tanh(slice_channels(gates, c, c));
  f.gates.g_add = toggles.no_add ? Tensor(Shape{c, h, w}, 0.0) : slice_channels(gates, 2 * c, c);
  return f;
}

Tensor apply_gates(const Tensor& x_main, const Tensor& x_extra, const GateBundle& gates)
{
  require_same_shape(x_main, x_extra, "apply_gates");
  require_same_shape(x_main, gates.g_mul, "apply_gates");
  const Tensor modulation = add(add_scalar(gates.g_dec, 1.0), mul(gates.g_mul, x_extra));
  return add(mul(x_main, modulation), gates.g_add);
}

Tensor msdg_gate(const Tensor& x_main, const Tensor& x_extra, const MsdgParams& p,
                 const GateToggles& toggles)
{
  return apply_gates(x_main, x_extra, msdg_features(x_main, x_extra, p, toggles).gates);
}

void DualMsdgParams::visit_parameters(const std::string& prefix, const ParamVisitor& fn)
{
  first.visit_parameters(join_name(prefix, "first"), fn);
  second.visit_parameters(join_name(prefix, "second"), fn);
  fn(join_name(prefix, "rho"), rho);
}

DualMsdgParams make_dual_msdg(std::size_t bands, Rng& rng)
{
  DualMsdgParams p;
  p.first = make_msdg(bands, rng);
  p.second = make_msdg(bands, rng);
  p.rho = constant_parameter({1}, 0.0);
  return p;
}

Tensor dual_msdg(const Tensor& o1, const Tensor& o2, const DualMsdgParams& p,
                 const GateToggles& toggles)
{
  require_same_shape(o1, o2, "dual_msdg");
  const Tensor rate = sigmoid(p.rho);
  return add(mul_scalar(rate, msdg_gate(o1, o2, p.first, toggles)),
             mul_scalar(one_minus(rate), msdg_gate(o2, o1, p.second, toggles)));
}

} // namespace s2w
