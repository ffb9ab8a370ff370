#include "s2w/network.hpp"

#include "s2w/ops.hpp"
#include "s2w/wavelet.hpp"

#include <algorithm>
#include <map>

namespace s2w
{

namespace
{
struct FlagName
{
  Structural value;
  const char* name;
};

constexpr FlagName kStructuralNames[] = {
  {Structural::SpeO, "SpeO"},   {Structural::SpaO, "SpaO"}, {Structural::SeqB1, "SeqB1"},
  {Structural::SeqB2, "SeqB2"}, {Structural::CRM, "CRM"},   {Structural::HP, "HP"},
  {Structural::AWS, "AWS"},
};

std::string trim(std::string_view s)
{
  const auto b = s.find_first_not_of(" \t");
  if (b == std::string_view::npos)
    return {};
  const auto e = s.find_last_not_of(" \t");
  return std::string(s.substr(b, e - b + 1));
}
} // namespace

bool AblationConfig::has_dual_gate() const
{
  return structural == Structural::none || structural == Structural::CRM;
}

bool AblationConfig::has_spectral() const
{
  return structural != Structural::SpaO;
}

bool AblationConfig::has_spatial() const
{
  return structural != Structural::SpeO;
}

std::string AblationConfig::name() const
{
  std::vector<std::string> parts;
  for (const auto& f : kStructuralNames)
    if (f.value == structural)
      parts.emplace_back(f.name);
  if (gates.no_mul)
    parts.emplace_back("no_Gm");
  if (gates.no_dec)
    parts.emplace_back("no_Gc");
  if (gates.no_add)
    parts.emplace_back("no_Ga");
  if (parts.empty())
    return "full";
  std::string out = parts[0];
  for (std::size_t i = 1; i < parts.size(); ++i)
    out += "+" + parts[i];
  return out;
}

AblationConfig AblationConfig::parse(std::string_view text)
{
  AblationConfig a;
  bool structural_set = false;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const std::size_t end = std::min(text.find_first_of("+,", pos), text.size());
    const std::string token = trim(text.substr(pos, end - pos));
    pos = end + 1;
    if (token.empty() || token == "full" || token == "none")
      continue;
    if (token == "no_Gm") {
      a.gates.no_mul = true;
      continue;
    }
    if (token == "no_Gc") {
      a.gates.no_dec = true;
      continue;
    }
    if (token == "no_Ga") {
      a.gates.no_add = true;
      continue;
    }
    const auto* it = std::find_if(std::begin(kStructuralNames), std::end(kStructuralNames),
                                  [&](const FlagName& f) { return token == f.name; });
    if (it == std::end(kStructuralNames))
      throw ConfigError("unknown ablation flag '" + token +
                        "' (expected SpeO, SpaO, SeqB1, SeqB2, CRM, HP, AWS, no_Gm, no_Gc, no_Ga)");
    if (structural_set && a.structural != it->value)
      throw ConfigError("conflicting ablation flags: " + std::string(text) +
                        " (at most one structural flag)");
    a.structural = it->value;
    structural_set = true;
  }
  const bool any_toggle = a.gates.no_mul || a.gates.no_dec || a.gates.no_add;
  if (any_toggle && !a.has_dual_gate())
    throw ConfigError("conflicting ablation flags: " + std::string(text) +
                      " (gate toggles need the dual gate)");
  return a;
}

std::vector<AblationConfig> AblationConfig::table_variants()
{
  std::vector<AblationConfig> v;
  for (const auto& f : kStructuralNames)
    v.push_back({f.value, {}});
  v.push_back({Structural::none, {true, false, false}});
  v.push_back({Structural::none, {false, true, false}});
  v.push_back({Structural::none, {false, false, true}});
  return v;
}

BranchConfig ModelConfig::branch_config() const
{
  BranchConfig b;
  b.ratio = ratio;
  b.bands = bands;
  b.width = width;
  b.fusion = ablation.structural == Structural::CRM ? FusionKind::conv : FusionKind::mamba;
  b.fmamba = fmamba;
  return b;
}

void ModelConfig::validate() const
{
  if (ratio < 2)
    throw ConfigError("ratio must be at least 2");
  if (bands < 2)
    throw ConfigError("band count must be at least 2");
  if (width == 0 || fmamba.ssm.expand == 0 || fmamba.ssm.d_state == 0 || fmamba.ssm.conv_width == 0)
    throw ConfigError("model widths must be positive");
  try {
    exact_log2(ratio, "resolution ratio");
    exact_log2(bands, "band count");
  } catch (const ShapeError& e) {
    throw ConfigError(e.what());
  }
}

void ChannelAttentionParams::visit_parameters(const std::string& prefix, const ParamVisitor& fn)
{
  fn(join_name(prefix, "w1"), w1);
  fn(join_name(prefix, "b1"), b1);
  fn(join_name(prefix, "w2"), w2);
  fn(join_name(prefix, "b2"), b2);
}

void S2WMambaModel::visit_parameters(const ParamVisitor& fn)
{
  if (spectral)
    spectral->visit_parameters("spectral", fn);
  if (spatial)
    spatial->visit_parameters("spatial", fn);
  if (gate)
    gate->visit_parameters("gate", fn);
  if (residual_head)
    residual_head->visit_parameters("head", fn);
  if (attention)
    attention->visit_parameters("attention", fn);
}

ParameterList S2WMambaModel::parameters()
{
  ParameterList out;
  visit_parameters([&](const std::string& name, Tensor& t) { out.push_back({name, t}); });
  return out;
}

std::size_t S2WMambaModel::parameter_count()
{
  std::size_t n = 0;
  visit_parameters([&](const std::string&, Tensor& t) { n += t.numel(); });
  return n;
}

S2WMambaModel build_model(const ModelConfig& config, std::uint64_t seed)
{
  config.validate();
  Rng rng(seed);
  S2WMambaModel m;
  m.config = config;
  m.seed = seed;
  const BranchConfig branch = config.branch_config();
  const AblationConfig& a = config.ablation;
  if (a.has_spectral())
    m.spectral = make_spectral_branch(branch, rng);
  if (a.has_spatial())
    m.spatial = make_spatial_branch(branch, rng);
  if (a.has_dual_gate())
    m.gate = make_dual_msdg(config.bands, rng);
  switch (a.structural) {
  case Structural::SpeO:
  case Structural::SpaO:
  case Structural::SeqB1:
  case Structural::SeqB2:
    m.residual_head = make_conv(config.bands, config.bands, 3, rng);
    break;
  case Structural::AWS: {
    const std::size_t c2 = 2 * config.bands, hidden = std::max<std::size_t>(1, c2 / 4);
    m.attention = ChannelAttentionParams{
      fan_in_parameter({hidden, c2}, c2, rng), fan_in_parameter({hidden}, c2, rng),
      fan_in_parameter({c2, hidden}, hidden, rng), fan_in_parameter({c2}, hidden, rng)};
    break;
  }
  default:
    break;
  }
  return m;
}

Tensor combine_outputs(const S2WMambaModel& model, const Tensor& o1, const Tensor& o2)
{
  require_same_shape(o1, o2, "combine_outputs");
  switch (model.config.ablation.structural) {
  case Structural::none:
  case Structural::CRM:
    return dual_msdg(o1, o2, *model.gate, model.config.ablation.gates);
  case Structural::HP:
    return mul(o1, o2);
  case Structural::AWS: {
    const auto& p = *model.attention;
    const std::size_t c = o1.dim(0);
    const Tensor both[] = {o1, o2};
    const Tensor pooled = reshape(global_avg_pool(concat_channels(both)), {1, 2 * c});
    const Tensor logits = reshape(linear(gelu(linear(pooled, p.w1, p.b1)), p.w2, p.b2), {2 * c, 1, 1});
    const Tensor weight = reshape(
      sigmoid(sub(slice_channels(logits, 0, c), slice_channels(logits, c, c))), {c});
    const Tensor w = broadcast_spatial(weight, o1.dim(1), o1.dim(2));
    return add(mul(w, o1), mul(one_minus(w), o2));
  }
  default:
    throw ConfigError("combine_outputs: variant " + model.config.ablation.name() +
                      " has no two-branch combination");
  }
}

ForwardResult forward_parts(const S2WMambaModel& model, const Tensor& pan, const Tensor& lrms)
{
  const ModelConfig& cfg = model.config;
  if (pan.rank() != 3 || pan.dim(0) != 1 || lrms.rank() != 3 || lrms.dim(0) != cfg.bands ||
      pan.dim(1) != lrms.dim(1) * cfg.ratio || pan.dim(2) != lrms.dim(2) * cfg.ratio)
    throw ShapeError("forward: PAN " + to_string(pan.shape()) + " and LRMS " +
                     to_string(lrms.shape()) + " do not match c=" + std::to_string(cfg.bands) +
                     ", r=" + std::to_string(cfg.ratio));

  ForwardResult r;
  r.upsampled = bicubic_upsample(lrms, cfg.ratio);
  switch (cfg.ablation.structural) {
  case Structural::SpeO:
    r.o1 = spectral_branch(pan, lrms, *model.spectral);
    r.residual = (*model.residual_head)(r.o1);
    break;
  case Structural::SpaO:
    r.o2 = spatial_branch(pan, r.upsampled, *model.spatial);
    r.residual = (*model.residual_head)(r.o2);
    break;
  case Structural::SeqB1:
    r.o1 = spectral_branch(pan, lrms, *model.spectral);
    r.o2 = spatial_branch(pan, add(r.upsampled, r.o1), *model.spatial);
    r.residual = (*model.residual_head)(r.o2);
    break;
  case Structural::SeqB2:
    r.o2 = spatial_branch(pan, r.upsampled, *model.spatial);
    r.o1 = spectral_branch(pan, avg_pool2d(add(r.upsampled, r.o2), cfg.ratio), *model.spectral);
    r.residual = (*model.residual_head)(r.o1);
    break;
  default:
    r.o1 = spectral_branch(pan, lrms, *model.spectral);
    r.o2 = spatial_branch(pan, add(r.upsampled, r.o1), *model.spatial);
    r.residual = combine_outputs(model, r.o1, r.o2);
    break;
  }
  r.hrms = add(r.upsampled, r.residual);
  return r;
}

Tensor forward(const S2WMambaModel& model, const Tensor& pan, const Tensor& lrms)
{
  return forward_parts(model, pan, lrms).hrms;
}

namespace
{
void zero(Tensor& t)
{
  auto v = t.data_mut();
  std::fill(v.begin(), v.end(), 0.0);
}

void zero(Conv2dParams& c)
{
  zero(c.weight);
  zero(c.bias);
}
} // namespace

void zero_residual_path(S2WMambaModel& model)
{
  if (model.spectral)
    zero(model.spectral->reduce);
  if (model.spatial && !model.spatial->stages.empty()) {
    zero(model.spatial->stages.back().back_l);
    zero(model.spatial->stages.back().back_h);
  }
  if (model.gate) {
    zero(model.gate->first.head);
    zero(model.gate->second.head);
  }
  if (model.residual_head)
    zero(*model.residual_head);
}

Tensor l1_batch_loss(std::span<const Tensor> preds, std::span<const Tensor> targets)
{
  if (preds.empty() || preds.size() != targets.size())
    throw ShapeError("l1_batch_loss: " + std::to_string(preds.size()) + " predictions for " +
                     std::to_string(targets.size()) + " targets");
  Tensor total = l1_loss(preds[0], targets[0]);
  for (std::size_t k = 1; k < preds.size(); ++k) {
    require_same_shape(preds[k], preds[0], "l1_batch_loss");
    total = add(total, l1_loss(preds[k], targets[k]));
  }
  return scale(total, 1.0 / double(preds.size()));
}

S2WMambaModel apply_ablation(S2WMambaModel& model, const AblationConfig& ablation)
{
  ModelConfig cfg = model.config;
  cfg.ablation = ablation;
  S2WMambaModel out = build_model(cfg, model.seed);
  std::map<std::string, Tensor> source;
  model.visit_parameters([&](const std::string& name, Tensor& t) { source.emplace(name, t); });
  out.visit_parameters([&](const std::string& name, Tensor& t) {
    auto it = source.find(name);
    if (it != source.end() && it->second.shape() == t.shape())
      t = it->second.clone_leaf();
  });
  return out;
}

} // namespace s2w
