#include "s2w/wavelet.hpp"

#include "s2w/ops.hpp"

#include "op_util.hpp"

namespace s2w
{

namespace
{
using detail::grad_of;

// In-place 4-point Haar butterfly with output scale k:
//   (p, q, r, s) -> k * (p+q+r+s, p+q-r-s, p-q+r-s, p-q-r+s)
// It is its own transpose, so analysis, synthesis and both backward passes
// reuse it with k in {1/4, 1}.
inline void butterfly(double p, double q, double r, double s, double k, double& o0, double& o1,
                      double& o2, double& o3)
{
  const double a = p + q, b = p - q, c = r + s, d = r - s;
  o0 = k * (a + c);
  o1 = k * (a - c);
  o2 = k * (b + d);
  o3 = k * (b - d);
}

// Maps spatial blocks (C x 2h x 2w) to/from stacked bands (4C x h x w).
void blocks_to_bands(const double* in, double* out, std::size_t c, std::size_t h, std::size_t w,
                     double k, bool accumulate)
{
  const std::size_t W = 2 * w, band = c * h * w;
  for (std::size_t ch = 0; ch < c; ++ch)
    for (std::size_t y = 0; y < h; ++y)
      for (std::size_t x = 0; x < w; ++x) {
        const double* r0 = in + (ch * 2 * h + 2 * y) * W + 2 * x;
        const double* r1 = r0 + W;
        double o[4];
        butterfly(r0[0], r0[1], r1[0], r1[1], k, o[0], o[1], o[2], o[3]);
        const std::size_t at = (ch * h + y) * w + x;
        for (std::size_t b = 0; b < 4; ++b) {
          if (accumulate)
            out[b * band + at] += o[b];
          else
            out[b * band + at] = o[b];
        }
      }
}

void bands_to_blocks(const double* in, double* out, std::size_t c, std::size_t h, std::size_t w,
                     double k, bool accumulate)
{
  const std::size_t W = 2 * w, band = c * h * w;
  for (std::size_t ch = 0; ch < c; ++ch)
    for (std::size_t y = 0; y < h; ++y)
      for (std::size_t x = 0; x < w; ++x) {
        const std::size_t at = (ch * h + y) * w + x;
        double o[4];
        butterfly(in[at], in[band + at], in[2 * band + at], in[3 * band + at], k, o[0], o[1],
                  o[2], o[3]);
        double* r0 = out + (ch * 2 * h + 2 * y) * W + 2 * x;
        double* r1 = r0 + W;
        if (accumulate) {
          r0[0] += o[0];
          r0[1] += o[1];
          r1[0] += o[2];
          r1[1] += o[3];
        } else {
          r0[0] = o[0];
          r0[1] = o[1];
          r1[0] = o[2];
          r1[1] = o[3];
        }
      }
}

// Channel pairs (2k, 2k+1) <-> (k, k + C/2).
void pairs_to_bands(const double* in, double* out, std::size_t half, std::size_t plane, double k,
                    bool accumulate)
{
  for (std::size_t ch = 0; ch < half; ++ch) {
    const double* c1 = in + 2 * ch * plane;
    const double* c2 = c1 + plane;
    double* lo = out + ch * plane;
    double* hi = out + (half + ch) * plane;
    for (std::size_t i = 0; i < plane; ++i) {
      const double l = k * (c1[i] + c2[i]), h = k * (c1[i] - c2[i]);
      lo[i] = accumulate ? lo[i] + l : l;
      hi[i] = accumulate ? hi[i] + h : h;
    }
  }
}

void bands_to_pairs(const double* in, double* out, std::size_t half, std::size_t plane, double k,
                    bool accumulate)
{
  for (std::size_t ch = 0; ch < half; ++ch) {
    const double* lo = in + ch * plane;
    const double* hi = in + (half + ch) * plane;
    double* c1 = out + 2 * ch * plane;
    double* c2 = c1 + plane;
    for (std::size_t i = 0; i < plane; ++i) {
      const double a = k * (lo[i] + hi[i]), b = k * (lo[i] - hi[i]);
      c1[i] = accumulate ? c1[i] + a : a;
      c2[i] = accumulate ? c2[i] + b : b;
    }
  }
}

void require_chw(const Tensor& x, const char* what)
{
  if (x.rank() != 3)
    throw ShapeError(std::string(what) + ": expected C x H x W, got " + to_string(x.shape()));
}
} // namespace

std::size_t exact_log2(std::size_t value, const char* what)
{
  if (value == 0 || (value & (value - 1)) != 0)
    throw ShapeError(std::string(what) + " must be a power of two, got " + std::to_string(value));
  std::size_t n = 0;
  while ((std::size_t{1} << n) < value)
    ++n;
  return n;
}

Tensor dwt2d_stacked(const Tensor& x)
{
  require_chw(x, "dwt2d");
  const std::size_t c = x.dim(0), H = x.dim(1), W = x.dim(2);
  if (H % 2 || W % 2)
    throw ShapeError("dwt2d: H and W must be even, got " + to_string(x.shape()));
  const std::size_t h = H / 2, w = W / 2;
  std::vector<double> out(4 * c * h * w);
  blocks_to_bands(x.data().data(), out.data(), c, h, w, 0.25, false);
  return make_op_result(Shape{4 * c, h, w}, std::move(out), {x},
                        [c, h, w](detail::Node& self) {
                          if (auto* g = grad_of(self, 0))
                            bands_to_blocks(self.grad.data(), g->data(), c, h, w, 0.25, true);
                        },
                        "dwt2d");
}

Tensor idwt2d_stacked(const Tensor& bands)
{
  require_chw(bands, "idwt2d");
  if (bands.dim(0) % 4)
    throw ShapeError("idwt2d: channel count must be a multiple of 4, got " +
                     to_string(bands.shape()));
  const std::size_t c = bands.dim(0) / 4, h = bands.dim(1), w = bands.dim(2);
  std::vector<double> out(c * 4 * h * w);
  bands_to_blocks(bands.data().data(), out.data(), c, h, w, 1.0, false);
  return make_op_result(Shape{c, 2 * h, 2 * w}, std::move(out), {bands},
                        [c, h, w](detail::Node& self) {
                          if (auto* g = grad_of(self, 0))
                            blocks_to_bands(self.grad.data(), g->data(), c, h, w, 1.0, true);
                        },
                        "idwt2d");
}

Subbands2D dwt2d(const Tensor& x)
{
  const Tensor s = dwt2d_stacked(x);
  const std::size_t c = x.dim(0);
  return {slice_channels(s, 0, c), slice_channels(s, c, c), slice_channels(s, 2 * c, c),
          slice_channels(s, 3 * c, c)};
}

Tensor idwt2d(const Subbands2D& bands)
{
  const auto& s = bands.ll.shape();
  for (const Tensor* t : {&bands.lh, &bands.hl, &bands.hh})
    if (t->shape() != s)
      throw ShapeError("idwt2d: subband shapes differ: " + to_string(s) + " vs " +
                       to_string(t->shape()));
  const Tensor parts[] = {bands.ll, bands.lh, bands.hl, bands.hh};
  return idwt2d_stacked(concat_channels(parts));
}

Tensor dwt1d_stacked(const Tensor& x)
{
  require_chw(x, "dwt1d");
  const std::size_t c = x.dim(0), plane = x.dim(1) * x.dim(2);
  if (c % 2)
    throw ShapeError("dwt1d: channel count must be even, got " + std::to_string(c));
  std::vector<double> out(x.numel());
  pairs_to_bands(x.data().data(), out.data(), c / 2, plane, 0.5, false);
  return make_op_result(x.shape(), std::move(out), {x},
                        [half = c / 2, plane](detail::Node& self) {
                          if (auto* g = grad_of(self, 0))
                            bands_to_pairs(self.grad.data(), g->data(), half, plane, 0.5, true);
                        },
                        "dwt1d");
}

Tensor idwt1d_stacked(const Tensor& bands)
{
  require_chw(bands, "idwt1d");
  const std::size_t c = bands.dim(0), plane = bands.dim(1) * bands.dim(2);
  if (c % 2)
    throw ShapeError("idwt1d: channel count must be even, got " + std::to_string(c));
  std::vector<double> out(bands.numel());
  bands_to_pairs(bands.data().data(), out.data(), c / 2, plane, 1.0, false);
  return make_op_result(bands.shape(), std::move(out), {bands},
                        [half = c / 2, plane](detail::Node& self) {
                          if (auto* g = grad_of(self, 0))
                            pairs_to_bands(self.grad.data(), g->data(), half, plane, 1.0, true);
                        },
                        "idwt1d");
}

Subbands1D dwt1d(const Tensor& x)
{
  const Tensor s = dwt1d_stacked(x);
  const std::size_t half = x.dim(0) / 2;
  return {slice_channels(s, 0, half), slice_channels(s, half, half)};
}

Tensor idwt1d(const Tensor& low, const Tensor& high)
{
  require_same_shape(low, high, "idwt1d");
  const Tensor parts[] = {low, high};
  return idwt1d_stacked(concat_channels(parts));
}

Pyramid2D build_pyramid2d(const Tensor& pan_features, std::size_t ratio)
{
  require_chw(pan_features, "build_pyramid2d");
  const std::size_t levels = exact_log2(ratio, "resolution ratio");
  if (pan_features.dim(1) % ratio || pan_features.dim(2) % ratio)
    throw ShapeError("build_pyramid2d: " + to_string(pan_features.shape()) +
                     " not divisible by ratio " + std::to_string(ratio));
  Pyramid2D p{pan_features, {}};
  Tensor current = pan_features;
  for (std::size_t i = 0; i < levels; ++i) {
    p.levels.push_back(dwt2d(current));
    current = p.levels.back().ll;
  }
  return p;
}

Pyramid1D build_pyramid1d(const Tensor& l0)
{
  require_chw(l0, "build_pyramid1d");
  const std::size_t levels = exact_log2(l0.dim(0), "band count");
  Pyramid1D p{l0, {}};
  Tensor current = l0;
  for (std::size_t i = 0; i < levels; ++i) {
    p.levels.push_back(dwt1d(current));
    current = p.levels.back().low;
  }
  return p;
}

Tensor reconstruct(const Pyramid2D& pyramid)
{
  if (pyramid.levels.empty())
    return pyramid.root;
  Tensor current = pyramid.levels.back().ll;
  for (auto it = pyramid.levels.rbegin(); it != pyramid.levels.rend(); ++it)
    current = idwt2d({current, it->lh, it->hl, it->hh});
  return current;
}

Tensor reconstruct(const Pyramid1D& pyramid)
{
  if (pyramid.levels.empty())
    return pyramid.root;
  Tensor current = pyramid.levels.back().low;
  for (auto it = pyramid.levels.rbegin(); it != pyramid.levels.rend(); ++it)
    current = idwt1d(current, it->high);
  return current;
}

} // namespace s2w
