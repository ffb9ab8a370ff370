#pragma once

#include "s2w/tensor.hpp"

#include <span>

namespace s2w
{

// Elementwise. Binary ops require equal shapes; the only broadcast is the
// explicit scalar form mul_scalar().

enum class Elementwise
{
  add,
  sub,
  mul,
  sigmoid,
  tanh,
  gelu,
  scale,
};

/// Tag-dispatched entry; `b` is required for add/sub/mul, `k` is the factor for scale.
Tensor elementwise(Elementwise op, const Tensor& a, const Tensor& b = {}, double k = 1.0);

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double k);
Tensor add_scalar(const Tensor& a, double k);
Tensor sigmoid(const Tensor& a);
Tensor tanh(const Tensor& a);
/// Tanh approximation: 0.5 x (1 + tanh(sqrt(2/pi) (x + 0.044715 x^3))).
Tensor gelu(const Tensor& a);
Tensor silu(const Tensor& a);
Tensor softplus(const Tensor& a);
/// s * a for a one-element tensor s.
Tensor mul_scalar(const Tensor& s, const Tensor& a);
/// 1 - a
Tensor one_minus(const Tensor& a);

// Reductions to a one-element tensor.

Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);
/// Mean absolute error; the subgradient of |x| at 0 is taken as 0.
Tensor l1_loss(const Tensor& pred, const Tensor& target);

// Layout ops on C x H x W maps.

/// Same values under a new shape with equal element count.
Tensor reshape(const Tensor& x, Shape shape);
Tensor concat_channels(std::span<const Tensor> parts);
Tensor slice_channels(const Tensor& x, std::size_t begin, std::size_t count);
/// C x H x W -> C
Tensor global_avg_pool(const Tensor& x);
/// C -> C x h x w, constant over space.
Tensor broadcast_spatial(const Tensor& v, std::size_t h, std::size_t w);
/// Non-overlapping r x r box average.
Tensor avg_pool2d(const Tensor& x, std::size_t r);

// Convolutions on C x H x W maps with zero padding.

/// kernels: C_out x C_in x k x k, bias: C_out (may be undefined).
Tensor conv2d(const Tensor& x, const Tensor& kernels, const Tensor& bias,
              std::size_t stride, std::size_t pad);
/// kernels: C x 1 x k x k, stride 1.
Tensor depthwise_conv2d(const Tensor& x, const Tensor& kernels, const Tensor& bias,
                        std::size_t pad);

// Token sequences (N x d).

/// x: N x d_in, weight: d_out x d_in, bias: d_out (may be undefined).
Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias);
/// Per-token normalization over d with biased variance.
Tensor layernorm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps = 1e-5);
/// y[t] = b + sum_k w[k] x[t - K + 1 + k], zero history before t = 0.
/// x: N x D, weight: D x K, bias: D.
Tensor causal_dwconv1d(const Tensor& x, const Tensor& weight, const Tensor& bias);

/// Diagonal selective state-space recurrence, one direction:
///   h_t = exp(delta_t * A) h_{t-1} + delta_t * B_t * u_t
///   y_t = <C_t, h_t> + D * u_t,     A = -exp(a_log)
/// u, delta: N x E; a_log: E x S; b, c: N x S; d: E. Returns N x E.
/// Live state during the forward pass is E x S regardless of N. The backward
/// pass recomputes states chunk by chunk from saved checkpoints.
Tensor selective_scan_core(const Tensor& u, const Tensor& delta, const Tensor& a_log,
                           const Tensor& b, const Tensor& c, const Tensor& d);

} // namespace s2w
