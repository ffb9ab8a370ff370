#pragma once

#include "s2w/tensor.hpp"

#include <vector>

namespace s2w
{

/// One-level 2D Haar decomposition; each band is C x H/2 x W/2.
struct Subbands2D
{
  Tensor ll, lh, hl, hh;
};

/// levels[i - 1] holds DWT2D(LL_{i-1}); root is LL_0.
struct Pyramid2D
{
  Tensor root;
  std::vector<Subbands2D> levels;
};

/// One-level channel-axis Haar decomposition; each band is C/2 x H x W.
struct Subbands1D
{
  Tensor low, high;
};

/// levels[i - 1] holds DWT1D(L_{i-1}); root is L_0.
struct Pyramid1D
{
  Tensor root;
  std::vector<Subbands1D> levels;
};

/// log2 of a power of two; throws ShapeError otherwise.
std::size_t exact_log2(std::size_t value, const char* what);

// The analysis side averages (1/4 in 2D, 1/2 in 1D) and the synthesis side
// uses unit coefficients, so a constant image maps to LL = value with zero
// detail bands. For a 2x2 block [a11 a12; a21 a22]:
//   LL = (a11 + a12 + a21 + a22) / 4     LH = (a11 + a12 - a21 - a22) / 4
//   HL = (a11 - a12 + a21 - a22) / 4     HH = (a11 - a12 - a21 + a22) / 4

/// C x H x W -> 4C x H/2 x W/2 stacked as [LL; LH; HL; HH].
Tensor dwt2d_stacked(const Tensor& x);
/// Inverse of dwt2d_stacked.
Tensor idwt2d_stacked(const Tensor& bands);
Subbands2D dwt2d(const Tensor& x);
Tensor idwt2d(const Subbands2D& bands);

/// C x H x W -> C x H x W stacked as [L; H] with L = (c_2k + c_2k+1)/2 and
/// H = (c_2k - c_2k+1)/2. Channel k of L pairs with channel k + C/2.
Tensor dwt1d_stacked(const Tensor& x);
Tensor idwt1d_stacked(const Tensor& bands);
Subbands1D dwt1d(const Tensor& x);
Tensor idwt1d(const Tensor& low, const Tensor& high);

/// log2(ratio) levels of dwt2d starting from the already convolved PAN features.
Pyramid2D build_pyramid2d(const Tensor& pan_features, std::size_t ratio);
/// log2(C) levels of dwt1d; the deepest level has one channel per band.
Pyramid1D build_pyramid1d(const Tensor& l0);

/// Bottom-up synthesis of the root from the deepest LL and all detail bands.
Tensor reconstruct(const Pyramid2D& pyramid);
Tensor reconstruct(const Pyramid1D& pyramid);

} // namespace s2w
