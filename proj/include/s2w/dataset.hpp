#pragma once

#include "s2w/tensor.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace s2w
{

/// Synthetic multispectral scenes: smooth illumination gradients, sharp
/// polygons of distinct materials and band-correlated textures in [0, 1].
struct SceneSpec
{
  std::size_t bands = 8;
  std::size_t height = 64;
  std::size_t width = 64;
  std::size_t count = 64;
  std::uint64_t seed = 7;
};

/// Scene `index` of the family defined by `spec`; independent of `spec.count`.
Tensor generate_scene(const SceneSpec& spec, std::size_t index);
std::vector<Tensor> generate_scenes(const SceneSpec& spec);

/// Reduced-resolution training triplet. `pan_lp` is the PAN degraded to the
/// LRMS grid, used by the spatial distortion index.
struct Triplet
{
  Tensor gt;     // c x H x W
  Tensor lrms;   // c x H/r x W/r
  Tensor pan;    // 1 x H x W
  Tensor pan_lp; // 1 x H/r x W/r
};

/// Normalized 1D Gaussian (sigma = r/2, support 4 sigma) sampled at integer
/// pixel offsets from the centre of each r-pixel cell.
struct GaussianTaps
{
  std::vector<double> weights;
  std::ptrdiff_t first = 0; // input index of tap 0 for output index 0
};

GaussianTaps gaussian_taps(std::size_t ratio);

/// Separable Gaussian blur followed by decimation by `ratio`; borders replicate.
Tensor blur_decimate(const Tensor& image, std::size_t ratio);

/// Weighted band sum; empty weights mean the uniform average.
Tensor synthesize_pan(const Tensor& gt, const std::vector<double>& weights = {});

Triplet wald_degrade(const Tensor& gt, std::size_t ratio, const std::vector<double>& pan_weights = {});

// Split directories hold <index>.gt.s2wt, <index>.lrms.s2wt, <index>.pan.s2wt.

std::filesystem::path triplet_path(const std::filesystem::path& split_dir, std::size_t index,
                                   const std::string& kind);
void save_triplet(const std::filesystem::path& split_dir, std::size_t index, const Triplet& t);
/// Loads all complete triplets in index order and recomputes pan_lp.
std::vector<Triplet> load_split(const std::filesystem::path& split_dir);

} // namespace s2w
