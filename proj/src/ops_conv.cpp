#include "s2w/ops.hpp"

#include "op_util.hpp"

#include <algorithm>

namespace s2w
{

namespace
{
using detail::grad_of;
using detail::value_of;

struct ConvGeometry
{
  std::size_t c_in, h, w, c_out, k, stride, pad, h_out, w_out;
};

// Output columns ox with 0 <= ox*stride - pad + kx < w.
std::pair<std::size_t, std::size_t> valid_range(std::size_t n_out, std::size_t n_in,
                                                std::size_t stride, std::size_t pad,
                                                std::size_t kk)
{
  std::size_t lo = 0;
  if (kk < pad)
    lo = (pad - kk + stride - 1) / stride;
  // ox*stride + kk - pad <= n_in - 1
  const std::ptrdiff_t top = static_cast<std::ptrdiff_t>(n_in) - 1 +
                             static_cast<std::ptrdiff_t>(pad) - static_cast<std::ptrdiff_t>(kk);
  if (top < 0)
    return {0, 0};
  const std::size_t hi = std::min(n_out, static_cast<std::size_t>(top) / stride + 1);
  return {std::min(lo, hi), hi};
}

ConvGeometry geometry(const Tensor& x, const Tensor& kernels, std::size_t stride,
                      std::size_t pad, bool depthwise)
{
  const auto& xs = x.shape();
  const auto& ks = kernels.shape();
  if (xs.size() != 3)
    throw ShapeError("conv2d: input must be C x H x W, got " + to_string(xs));
  if (ks.size() != 4 || ks[2] != ks[3])
    throw ShapeError("conv2d: kernels must be C_out x C_in x k x k, got " + to_string(ks));
  if (stride == 0)
    throw ShapeError("conv2d: stride must be positive");
  ConvGeometry g{};
  g.c_in = xs[0];
  g.h = xs[1];
  g.w = xs[2];
  g.c_out = ks[0];
  g.k = ks[2];
  g.stride = stride;
  g.pad = pad;
  if (depthwise) {
    if (ks[1] != 1 || ks[0] != xs[0])
      throw ShapeError("depthwise_conv2d: kernels " + to_string(ks) + " do not match input " +
                       to_string(xs));
  } else if (ks[1] != xs[0]) {
    throw ShapeError("conv2d: channel mismatch, kernels expect " + std::to_string(ks[1]) +
                     " input channels, got " + std::to_string(xs[0]));
  }
  if (g.h + 2 * pad < g.k || g.w + 2 * pad < g.k)
    throw ShapeError("conv2d: kernel " + std::to_string(g.k) + " larger than padded input " +
                     to_string(xs));
  g.h_out = (g.h + 2 * pad - g.k) / stride + 1;
  g.w_out = (g.w + 2 * pad - g.k) / stride + 1;
  return g;
}

void check_bias(const Tensor& bias, std::size_t c_out)
{
  if (bias.defined() && (bias.rank() != 1 || bias.dim(0) != c_out))
    throw ShapeError("conv2d: bias shape " + to_string(bias.shape()) + " for " +
                     std::to_string(c_out) + " outputs");
}

// Accumulates one (input plane, kernel) pair into one output plane, and the
// matching backward pieces. Shared by dense and depthwise convolution.
struct PlaneKernel
{
  const ConvGeometry& g;

  void forward(const double* in, const double* ker, double* out) const
  {
    for (std::size_t ky = 0; ky < g.k; ++ky) {
      auto [oy0, oy1] = valid_range(g.h_out, g.h, g.stride, g.pad, ky);
      for (std::size_t kx = 0; kx < g.k; ++kx) {
        const double wv = ker[ky * g.k + kx];
        auto [ox0, ox1] = valid_range(g.w_out, g.w, g.stride, g.pad, kx);
        for (std::size_t oy = oy0; oy < oy1; ++oy) {
          const double* row = in + (oy * g.stride + ky - g.pad) * g.w;
          double* orow = out + oy * g.w_out;
          if (g.stride == 1) {
            const double* src = row + kx - g.pad;
            for (std::size_t ox = ox0; ox < ox1; ++ox)
              orow[ox] += wv * src[ox];
          } else {
            for (std::size_t ox = ox0; ox < ox1; ++ox)
              orow[ox] += wv * row[ox * g.stride + kx - g.pad];
          }
        }
      }
    }
  }

  void backward(const double* in, const double* ker, const double* gout, double* gin,
                double* gker) const
  {
    for (std::size_t ky = 0; ky < g.k; ++ky) {
      auto [oy0, oy1] = valid_range(g.h_out, g.h, g.stride, g.pad, ky);
      for (std::size_t kx = 0; kx < g.k; ++kx) {
        const double wv = ker[ky * g.k + kx];
        auto [ox0, ox1] = valid_range(g.w_out, g.w, g.stride, g.pad, kx);
        double acc = 0.0;
        for (std::size_t oy = oy0; oy < oy1; ++oy) {
          const std::size_t iy = oy * g.stride + ky - g.pad;
          const double* grow = gout + oy * g.w_out;
          for (std::size_t ox = ox0; ox < ox1; ++ox) {
            const std::size_t ix = ox * g.stride + kx - g.pad;
            acc += grow[ox] * in[iy * g.w + ix];
            if (gin)
              gin[iy * g.w + ix] += wv * grow[ox];
          }
        }
        if (gker)
          gker[ky * g.k + kx] += acc;
      }
    }
  }
};

Tensor conv_impl(const Tensor& x, const Tensor& kernels, const Tensor& bias, std::size_t stride,
                 std::size_t pad, bool depthwise)
{
  const ConvGeometry g = geometry(x, kernels, stride, pad, depthwise);
  check_bias(bias, g.c_out);
  const std::size_t in_plane = g.h * g.w, out_plane = g.h_out * g.w_out, kk = g.k * g.k;
  std::vector<double> out(g.c_out * out_plane, 0.0);
  auto xv = x.data();
  auto kv = kernels.data();
  const PlaneKernel pk{g};
  for (std::size_t co = 0; co < g.c_out; ++co) {
    double* o = out.data() + co * out_plane;
    if (bias.defined())
      std::fill(o, o + out_plane, bias.data()[co]);
    if (depthwise) {
      pk.forward(xv.data() + co * in_plane, kv.data() + co * kk, o);
    } else {
      for (std::size_t ci = 0; ci < g.c_in; ++ci)
        pk.forward(xv.data() + ci * in_plane, kv.data() + (co * g.c_in + ci) * kk, o);
    }
  }

  std::vector<Tensor> parents{x, kernels};
  if (bias.defined())
    parents.push_back(bias);
  const bool has_bias = bias.defined();
  return make_op_result(
    Shape{g.c_out, g.h_out, g.w_out}, std::move(out), std::move(parents),
    [g, depthwise, has_bias](detail::Node& self) {
      const std::size_t in_plane = g.h * g.w, out_plane = g.h_out * g.w_out, kk = g.k * g.k;
      const auto& xv = value_of(self, 0);
      const auto& kv = value_of(self, 1);
      auto* gx = grad_of(self, 0);
      auto* gk = grad_of(self, 1);
      const PlaneKernel pk{g};
      for (std::size_t co = 0; co < g.c_out; ++co) {
        const double* go = self.grad.data() + co * out_plane;
        const std::size_t ci_begin = depthwise ? co : 0;
        const std::size_t ci_end = depthwise ? co + 1 : g.c_in;
        for (std::size_t ci = ci_begin; ci < ci_end; ++ci) {
          const std::size_t kidx = depthwise ? co * kk : (co * g.c_in + ci) * kk;
          pk.backward(xv.data() + ci * in_plane, kv.data() + kidx, go,
                      gx ? gx->data() + ci * in_plane : nullptr,
                      gk ? gk->data() + kidx : nullptr);
        }
      }
      if (has_bias)
        if (auto* gb = grad_of(self, 2))
          for (std::size_t co = 0; co < g.c_out; ++co) {
            double acc = 0.0;
            for (std::size_t i = 0; i < out_plane; ++i)
              acc += self.grad[co * out_plane + i];
            (*gb)[co] += acc;
          }
    },
    depthwise ? "depthwise_conv2d" : "conv2d");
}
} // namespace

Tensor conv2d(const Tensor& x, const Tensor& kernels, const Tensor& bias, std::size_t stride,
              std::size_t pad)
{
  return conv_impl(x, kernels, bias, stride, pad, false);
}

Tensor depthwise_conv2d(const Tensor& x, const Tensor& kernels, const Tensor& bias,
                        std::size_t pad)
{
  return conv_impl(x, kernels, bias, 1, pad, true);
}

} // namespace s2w
