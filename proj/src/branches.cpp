#include "s2w/branches.hpp"

#include "s2w/ops.hpp"
#include "s2w/wavelet.hpp"

#include <algorithm>
#include <cmath>

namespace s2w
{

Tensor Conv2dParams::operator()(const Tensor& x) const
{
  return conv2d(x, weight, bias, 1, weight.dim(2) / 2);
}

void Conv2dParams::visit_parameters(const std::string& prefix, const ParamVisitor& fn)
{
  fn(join_name(prefix, "weight"), weight);
  fn(join_name(prefix, "bias"), bias);
}

Conv2dParams make_conv(std::size_t c_in, std::size_t c_out, std::size_t k, Rng& rng)
{
  const std::size_t fan_in = c_in * k * k;
  return {fan_in_parameter({c_out, c_in, k, k}, fan_in, rng), fan_in_parameter({c_out}, fan_in, rng)};
}

Conv2dParams make_zero_conv(std::size_t c_in, std::size_t c_out, std::size_t k)
{
  return {constant_parameter({c_out, c_in, k, k}, 0.0), constant_parameter({c_out}, 0.0)};
}

void ConvFusionParams::visit_parameters(const std::string& prefix, const ParamVisitor& fn)
{
  conv1.visit_parameters(join_name(prefix, "conv1"), fn);
  conv2.visit_parameters(join_name(prefix, "conv2"), fn);
}

Tensor FusionBlock::operator()(const Tensor& x, const Tensor& y) const
{
  if (mamba)
    return fmamba_block(x, y, *mamba).fused;
  require_same_shape(x, y, "conv fusion");
  const Tensor both[] = {x, y};
  const Tensor local = (*conv).conv2(gelu((*conv).conv1(concat_channels(both))));
  return add(add(x, y), local);
}

void FusionBlock::visit_parameters(const std::string& prefix, const ParamVisitor& fn)
{
  if (mamba)
    mamba->visit_parameters(prefix, fn);
  if (conv)
    conv->visit_parameters(prefix, fn);
}

FusionBlock make_fusion(FusionKind kind, const FMambaConfig& config, Rng& rng)
{
  FusionBlock b;
  const std::size_t c = config.ssm.d_model;
  if (kind == FusionKind::mamba)
    b.mamba = make_fmamba(config, rng);
  else
    b.conv = ConvFusionParams{make_conv(2 * c, c, 3, rng), make_conv(c, c, 3, rng)};
  return b;
}

namespace
{
FMambaConfig fmamba_config(const BranchConfig& config)
{
  FMambaConfig fm = config.fmamba;
  fm.ssm.d_model = config.width;
  return fm;
}

const char* kSubbandNames[4] = {"fm_ll", "fm_lh", "fm_hl", "fm_hh"};
} // namespace

void SpectralBranchParams::visit_parameters(const std::string& prefix, const ParamVisitor& fn)
{
  pan_in.visit_parameters(join_name(prefix, "pan_in"), fn);
  lrms_in.visit_parameters(join_name(prefix, "lrms_in"), fn);
  for (std::size_t i = 0; i < stages.size(); ++i)
    for (std::size_t s = 0; s < 4; ++s)
      stages[i][s].visit_parameters(
        join_name(prefix, "spebs" + std::to_string(i + 1) + "." + kSubbandNames[s]), fn);
  reduce.visit_parameters(join_name(prefix, "reduce"), fn);
}

void SpatialStageParams::visit_parameters(const std::string& prefix, const ParamVisitor& fn)
{
  proj_p.visit_parameters(join_name(prefix, "proj_p"), fn);
  proj_l.visit_parameters(join_name(prefix, "proj_l"), fn);
  proj_h.visit_parameters(join_name(prefix, "proj_h"), fn);
  fuse_l.visit_parameters(join_name(prefix, "fm_l"), fn);
  fuse_h.visit_parameters(join_name(prefix, "fm_h"), fn);
  back_l.visit_parameters(join_name(prefix, "back_l"), fn);
  back_h.visit_parameters(join_name(prefix, "back_h"), fn);
}

void SpatialBranchParams::visit_parameters(const std::string& prefix, const ParamVisitor& fn)
{
  for (std::size_t i = 0; i < stages.size(); ++i)
    stages[i].visit_parameters(join_name(prefix, "spabs" + std::to_string(i + 1)), fn);
}

SpectralBranchParams make_spectral_branch(const BranchConfig& config, Rng& rng)
{
  const std::size_t n_r = exact_log2(config.ratio, "resolution ratio");
  exact_log2(config.bands, "band count");
  const FMambaConfig fm = fmamba_config(config);
  SpectralBranchParams p;
  p.pan_in = make_conv(1, config.width, 3, rng);
  p.lrms_in = make_conv(config.bands, config.width, 3, rng);
  for (std::size_t i = 0; i < n_r; ++i)
    p.stages.push_back({make_fusion(config.fusion, fm, rng), make_fusion(config.fusion, fm, rng),
                        make_fusion(config.fusion, fm, rng), make_fusion(config.fusion, fm, rng)});
  p.reduce = make_conv(config.width, config.bands, 3, rng);
  return p;
}

SpatialBranchParams make_spatial_branch(const BranchConfig& config, Rng& rng)
{
  const std::size_t n_c = exact_log2(config.bands, "band count");
  const FMambaConfig fm = fmamba_config(config);
  SpatialBranchParams p;
  for (std::size_t i = 1; i <= n_c; ++i) {
    const std::size_t ch = std::size_t{1} << (i - 1); // channels of P_{i-1}, L_j and H_j
    SpatialStageParams s;
    s.proj_p = make_conv(ch, config.width, 3, rng);
    s.proj_l = make_conv(ch, config.width, 3, rng);
    s.proj_h = make_conv(ch, config.width, 3, rng);
    s.fuse_l = make_fusion(config.fusion, fm, rng);
    s.fuse_h = make_fusion(config.fusion, fm, rng);
    s.back_l = make_conv(config.width, ch, 3, rng);
    s.back_h = make_conv(config.width, ch, 3, rng);
    p.stages.push_back(std::move(s));
  }
  return p;
}

Tensor spectral_branch(const Tensor& pan, const Tensor& lrms, const SpectralBranchParams& p,
                       ShapeTrace* trace)
{
  if (pan.rank() != 3 || pan.dim(0) != 1 || lrms.rank() != 3)
    throw ShapeError("spectral_branch: expected 1 x H x W PAN and c x h x w LRMS, got " +
                     to_string(pan.shape()) + " and " + to_string(lrms.shape()));
  const std::size_t n_r = p.stages.size();
  const std::size_t ratio = std::size_t{1} << n_r;
  if (pan.dim(1) != lrms.dim(1) * ratio || pan.dim(2) != lrms.dim(2) * ratio)
    throw ShapeError("spectral_branch: PAN " + to_string(pan.shape()) + " is not " +
                     std::to_string(ratio) + "x the LRMS " + to_string(lrms.shape()));

  const Tensor pan_features = p.pan_in(pan);
  if (trace)
    trace->record("Input PAN conv", pan_features.shape());
  const Pyramid2D pyramid = build_pyramid2d(pan_features, ratio);
  if (trace)
    for (std::size_t i = 0; i < pyramid.levels.size(); ++i) {
      const auto& s = pyramid.levels[i].ll.shape();
      trace->record("Level-" + std::to_string(i + 1) + " DWT2D", {4 * s[0], s[1], s[2]});
    }

  Tensor m = p.lrms_in(lrms);
  for (std::size_t i = 1; i <= n_r; ++i) {
    const std::size_t j = n_r - i + 1;
    const Subbands2D& level = pyramid.levels[j - 1];
    const auto& stage = p.stages[i - 1];
    const Subbands2D fused{stage[0](m, level.ll), stage[1](m, level.lh), stage[2](m, level.hl),
                           stage[3](m, level.hh)};
    if (trace) {
      const auto& s = fused.ll.shape();
      trace->record("FMamba (SpeBS-" + std::to_string(i) + ")", {4 * s[0], s[1], s[2]});
    }
    m = idwt2d(fused);
    if (trace)
      trace->record("IDWT2D (SpeBS-" + std::to_string(i) + ")", m.shape());
  }
  Tensor out = p.reduce(m);
  if (trace)
    trace->record("Reduce to c", out.shape());
  return out;
}

Tensor spatial_branch(const Tensor& pan, const Tensor& l0, const SpatialBranchParams& p,
                      ShapeTrace* trace)
{
  if (pan.rank() != 3 || pan.dim(0) != 1 || l0.rank() != 3 || pan.dim(1) != l0.dim(1) ||
      pan.dim(2) != l0.dim(2))
    throw ShapeError("spatial_branch: PAN " + to_string(pan.shape()) + " and L_0 " +
                     to_string(l0.shape()) + " must share H x W");
  const Pyramid1D pyramid = build_pyramid1d(l0);
  const std::size_t n_c = pyramid.levels.size();
  if (p.stages.size() != n_c)
    throw ShapeError("spatial_branch: " + std::to_string(p.stages.size()) +
                     " stages for a band count needing " + std::to_string(n_c));

  Tensor current = pan;
  for (std::size_t i = 1; i <= n_c; ++i) {
    const std::size_t j = n_c - i + 1;
    const Subbands1D& level = pyramid.levels[j - 1];
    if (trace)
      trace->record("Level-" + std::to_string(j) + " DWT1D (SpaBS-" + std::to_string(i) + " input)",
                    level.low.shape());
    const auto& stage = p.stages[i - 1];
    const Tensor projected = stage.proj_p(current);
    const Tensor f_low = stage.fuse_l(projected, stage.proj_l(level.low));
    const Tensor f_high = stage.fuse_h(projected, stage.proj_h(level.high));
    current = idwt1d(stage.back_l(f_low), stage.back_h(f_high));
    if (trace)
      trace->record("IDWT1D (SpaBS-" + std::to_string(i) + ")", current.shape());
  }
  return current;
}

namespace
{
double cubic_weight(double x)
{
  constexpr double a = -0.5;
  x = std::abs(x);
  if (x <= 1.0)
    return ((a + 2.0) * x - (a + 3.0)) * x * x + 1.0;
  if (x < 2.0)
    return ((a * x - 5.0 * a) * x + 8.0 * a) * x - 4.0 * a;
  return 0.0;
}

// Four source indices and weights per output sample along one axis.
struct Taps
{
  std::array<std::size_t, 4> index;
  std::array<double, 4> weight;
};

std::vector<Taps> make_taps(std::size_t n_in, std::size_t r)
{
  std::vector<Taps> taps(n_in * r);
  for (std::size_t o = 0; o < taps.size(); ++o) {
    const double src = (static_cast<double>(o) + 0.5) / static_cast<double>(r) - 0.5;
    const double base = std::floor(src);
    const double t = src - base;
    for (int k = 0; k < 4; ++k) {
      const auto idx = static_cast<std::ptrdiff_t>(base) + k - 1;
      taps[o].index[k] =
        static_cast<std::size_t>(std::clamp<std::ptrdiff_t>(idx, 0, static_cast<std::ptrdiff_t>(n_in) - 1));
      taps[o].weight[k] = cubic_weight(t - static_cast<double>(k - 1));
    }
  }
  return taps;
}
} // namespace

Tensor bicubic_upsample(const Tensor& lrms, std::size_t ratio)
{
  exact_log2(ratio, "resolution ratio");
  if (lrms.rank() != 3)
    throw ShapeError("bicubic_upsample: expected c x h x w, got " + to_string(lrms.shape()));
  const std::size_t c = lrms.dim(0), h = lrms.dim(1), w = lrms.dim(2);
  const std::size_t H = h * ratio, W = w * ratio;
  const auto row_taps = make_taps(w, ratio);
  const auto col_taps = make_taps(h, ratio);
  auto in = lrms.data();
  std::vector<double> wide(c * h * W), out(c * H * W);
  for (std::size_t ch = 0; ch < c; ++ch)
    for (std::size_t y = 0; y < h; ++y) {
      const double* src = in.data() + (ch * h + y) * w;
      double* dst = wide.data() + (ch * h + y) * W;
      for (std::size_t x = 0; x < W; ++x) {
        const Taps& t = row_taps[x];
        dst[x] = t.weight[0] * src[t.index[0]] + t.weight[1] * src[t.index[1]] +
                 t.weight[2] * src[t.index[2]] + t.weight[3] * src[t.index[3]];
      }
    }
  for (std::size_t ch = 0; ch < c; ++ch)
    for (std::size_t y = 0; y < H; ++y) {
      const Taps& t = col_taps[y];
      double* dst = out.data() + (ch * H + y) * W;
      const double* rows[4];
      for (int k = 0; k < 4; ++k)
        rows[k] = wide.data() + (ch * h + t.index[k]) * W;
      for (std::size_t x = 0; x < W; ++x)
        dst[x] = t.weight[0] * rows[0][x] + t.weight[1] * rows[1][x] + t.weight[2] * rows[2][x] +
                 t.weight[3] * rows[3][x];
    }
  return Tensor(Shape{c, H, W}, std::move(out));
}

} // namespace s2w
