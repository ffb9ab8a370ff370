#include "s2w/ops.hpp"

#include "op_util.hpp"

#include <algorithm>
#include <cmath>

namespace s2w
{

namespace
{
using detail::grad_of;
using detail::value_of;

void require_matrix(const Tensor& t, const char* what)
{
  if (t.rank() != 2)
    throw ShapeError(std::string(what) + ": expected N x d, got " + to_string(t.shape()));
}

void require_vector(const Tensor& t, std::size_t n, const char* what)
{
  if (t.rank() != 1 || t.dim(0) != n)
    throw ShapeError(std::string(what) + ": expected vector of " + std::to_string(n) + ", got " +
                     to_string(t.shape()));
}
// Dot products of two input rows with four weight rows at a time. Each output
// is still summed over i in order, so results match the plain loop exactly.
void linear_rows(const double* x, const double* w, const double* bias, double* out, std::size_t n,
                 std::size_t d_in, std::size_t d_out)
{
  auto dot = [&](std::size_t t, std::size_t o) {
    const double* xr = x + t * d_in;
    const double* wr = w + o * d_in;
    double acc = bias ? bias[o] : 0.0;
    for (std::size_t i = 0; i < d_in; ++i)
      acc += xr[i] * wr[i];
    return acc;
  };
  std::size_t t = 0;
  for (; t + 2 <= n; t += 2) {
    const double* x0 = x + t * d_in;
    const double* x1 = x0 + d_in;
    std::size_t o = 0;
    for (; o + 4 <= d_out; o += 4) {
      const double* w0 = w + o * d_in;
      const double* w1 = w0 + d_in;
      const double* w2 = w1 + d_in;
      const double* w3 = w2 + d_in;
      double a[2][4] = {};
      if (bias)
        for (std::size_t k = 0; k < 4; ++k)
          a[0][k] = a[1][k] = bias[o + k];
      for (std::size_t i = 0; i < d_in; ++i) {
        const double u = x0[i], v = x1[i];
        a[0][0] += u * w0[i];
        a[0][1] += u * w1[i];
        a[0][2] += u * w2[i];
        a[0][3] += u * w3[i];
        a[1][0] += v * w0[i];
        a[1][1] += v * w1[i];
        a[1][2] += v * w2[i];
        a[1][3] += v * w3[i];
      }
      for (std::size_t k = 0; k < 4; ++k) {
        out[t * d_out + o + k] = a[0][k];
        out[(t + 1) * d_out + o + k] = a[1][k];
      }
    }
    for (; o < d_out; ++o) {
      out[t * d_out + o] = dot(t, o);
      out[(t + 1) * d_out + o] = dot(t + 1, o);
    }
  }
  for (; t < n; ++t)
    for (std::size_t o = 0; o < d_out; ++o)
      out[t * d_out + o] = dot(t, o);
}
} // namespace

Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias)
{
  require_matrix(x, "linear");
  require_matrix(weight, "linear weight");
  const std::size_t n = x.dim(0), d_in = x.dim(1), d_out = weight.dim(0);
  if (weight.dim(1) != d_in)
    throw ShapeError("linear: weight " + to_string(weight.shape()) + " vs input " +
                     to_string(x.shape()));
  if (bias.defined())
    require_vector(bias, d_out, "linear bias");

  std::vector<double> out(n * d_out);
  linear_rows(x.data().data(), weight.data().data(), bias.defined() ? bias.data().data() : nullptr,
              out.data(), n, d_in, d_out);
  std::vector<Tensor> parents{x, weight};
  if (bias.defined())
    parents.push_back(bias);
  const bool has_bias = bias.defined();
  return make_op_result(
    Shape{n, d_out}, std::move(out), std::move(parents),
    [n, d_in, d_out, has_bias](detail::Node& self) {
      const auto& xv = value_of(self, 0);
      const auto& wv = value_of(self, 1);
      auto* gx = grad_of(self, 0);
      auto* gw = grad_of(self, 1);
      auto* gb = has_bias ? grad_of(self, 2) : nullptr;
      for (std::size_t t = 0; t < n; ++t) {
        const double* xr = xv.data() + t * d_in;
        for (std::size_t o = 0; o < d_out; ++o) {
          const double go = self.grad[t * d_out + o];
          if (go == 0.0)
            continue;
          const double* wr = wv.data() + o * d_in;
          if (gx) {
            double* gxr = gx->data() + t * d_in;
            for (std::size_t i = 0; i < d_in; ++i)
              gxr[i] += go * wr[i];
          }
          if (gw) {
            double* gwr = gw->data() + o * d_in;
            for (std::size_t i = 0; i < d_in; ++i)
              gwr[i] += go * xr[i];
          }
          if (gb)
            (*gb)[o] += go;
        }
      }
    },
    "linear");
}

Tensor layernorm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps)
{
  require_matrix(x, "layernorm");
  const std::size_t n = x.dim(0), d = x.dim(1);
  if (d == 0)
    throw ShapeError("layernorm: d must be at least 1");
  require_vector(gamma, d, "layernorm gamma");
  require_vector(beta, d, "layernorm beta");

  auto xv = x.data(), gv = gamma.data(), bv = beta.data();
  std::vector<double> out(n * d), xhat(n * d), rstd(n);
  for (std::size_t t = 0; t < n; ++t) {
    const double* xr = xv.data() + t * d;
    double mu = 0.0;
    for (std::size_t i = 0; i < d; ++i)
      mu += xr[i];
    mu /= static_cast<double>(d);
    double var = 0.0;
    for (std::size_t i = 0; i < d; ++i)
      var += (xr[i] - mu) * (xr[i] - mu);
    var /= static_cast<double>(d);
    rstd[t] = 1.0 / std::sqrt(var + eps);
    for (std::size_t i = 0; i < d; ++i) {
      const double xh = (xr[i] - mu) * rstd[t];
      xhat[t * d + i] = xh;
      out[t * d + i] = gv[i] * xh + bv[i];
    }
  }
  return make_op_result(
    Shape{n, d}, std::move(out), {x, gamma, beta},
    [n, d, xhat = std::move(xhat), rstd = std::move(rstd)](detail::Node& self) {
      const auto& gv = value_of(self, 1);
      auto* gx = grad_of(self, 0);
      auto* gg = grad_of(self, 1);
      auto* gb = grad_of(self, 2);
      std::vector<double> gxh(d);
      for (std::size_t t = 0; t < n; ++t) {
        const double* go = self.grad.data() + t * d;
        const double* xh = xhat.data() + t * d;
        double mean_g = 0.0, mean_gx = 0.0;
        for (std::size_t i = 0; i < d; ++i) {
          if (gg)
            (*gg)[i] += go[i] * xh[i];
          if (gb)
            (*gb)[i] += go[i];
          gxh[i] = go[i] * gv[i];
          mean_g += gxh[i];
          mean_gx += gxh[i] * xh[i];
        }
        if (!gx)
          continue;
        mean_g /= static_cast<double>(d);
        mean_gx /= static_cast<double>(d);
        double* gxr = gx->data() + t * d;
        for (std::size_t i = 0; i < d; ++i)
          gxr[i] += rstd[t] * (gxh[i] - mean_g - xh[i] * mean_gx);
      }
    },
    "layernorm");
}

Tensor causal_dwconv1d(const Tensor& x, const Tensor& weight, const Tensor& bias)
{
  require_matrix(x, "causal_dwconv1d");
  require_matrix(weight, "causal_dwconv1d weight");
  const std::size_t n = x.dim(0), ch = x.dim(1), k = weight.dim(1);
  if (weight.dim(0) != ch)
    throw ShapeError("causal_dwconv1d: weight " + to_string(weight.shape()) + " vs input " +
                     to_string(x.shape()));
  require_vector(bias, ch, "causal_dwconv1d bias");

  auto xv = x.data(), wv = weight.data(), bv = bias.data();
  std::vector<double> out(n * ch);
  for (std::size_t t = 0; t < n; ++t) {
    double* orow = out.data() + t * ch;
    for (std::size_t e = 0; e < ch; ++e)
      orow[e] = bv[e];
    for (std::size_t j = 0; j < k; ++j) {
      // tap j reads x[t - (k - 1) + j]
      if (t + j + 1 < k)
        continue;
      const double* xr = xv.data() + (t + j + 1 - k) * ch;
      for (std::size_t e = 0; e < ch; ++e)
        orow[e] += wv[e * k + j] * xr[e];
    }
  }
  return make_op_result(
    Shape{n, ch}, std::move(out), {x, weight, bias},
    [n, ch, k](detail::Node& self) {
      const auto& xv = value_of(self, 0);
      const auto& wv = value_of(self, 1);
      auto* gx = grad_of(self, 0);
      auto* gw = grad_of(self, 1);
      auto* gb = grad_of(self, 2);
      for (std::size_t t = 0; t < n; ++t) {
        const double* go = self.grad.data() + t * ch;
        if (gb)
          for (std::size_t e = 0; e < ch; ++e)
            (*gb)[e] += go[e];
        for (std::size_t j = 0; j < k; ++j) {
          if (t + j + 1 < k)
            continue;
          const std::size_t src = (t + j + 1 - k) * ch;
          for (std::size_t e = 0; e < ch; ++e) {
            if (gw)
              (*gw)[e * k + j] += go[e] * xv[src + e];
            if (gx)
              (*gx)[src + e] += go[e] * wv[e * k + j];
          }
        }
      }
    },
    "causal_dwconv1d");
}

} // namespace s2w
