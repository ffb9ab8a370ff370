#pragma once

#include "s2w/tensor.hpp"

#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace s2w
{

/// A metric is undefined for the given inputs (zero-mean band, all pixels
/// degenerate, ...).
class MetricError : public std::domain_error
{
public:
  using std::domain_error::domain_error;
};

/// 10 log10(peak^2 / MSE) over all bands; +infinity when MSE is 0.
double psnr(const Tensor& pred, const Tensor& gt, double peak = 1.0);

struct SamResult
{
  double degrees = 0.0;
  std::size_t skipped = 0; // pixels with a zero-norm spectrum
};

/// Mean spectral angle in degrees over pixels with nonzero spectra.
SamResult sam_detail(const Tensor& pred, const Tensor& gt);
double sam(const Tensor& pred, const Tensor& gt);

/// 100/r * sqrt(mean_b (RMSE_b / mean(gt_b))^2)
double ergas(const Tensor& pred, const Tensor& gt, std::size_t ratio);

/// Universal image quality index of two equally sized sample sets.
/// Undefined (nullopt) when both variances or both means vanish.
std::optional<double> uiqi(const std::vector<double>& x, const std::vector<double>& y);

/// Mean UIQI over non-overlapping block x block windows of two single bands
/// (H x W planes given as 1 x H x W or H x W). A plane smaller than the block
/// is one window. Undefined windows are skipped; nullopt if all are.
std::optional<double> q_index(const Tensor& a, const Tensor& b, std::size_t block);

// Cayley-Dickson hypercomplex numbers of dimension 2^n.

/// Product in the algebra; a and b have equal power-of-two length.
std::vector<double> hypercomplex_mul(const std::vector<double>& a, const std::vector<double>& b);
std::vector<double> hypercomplex_conj(const std::vector<double>& a);

/// Q2^n index: bands zero-padded to the next power of two, block-wise
/// hypercomplex quality averaged over block x block windows (stride = block).
/// With one band it is the signed UIQI.
double q2n(const Tensor& pred, const Tensor& gt, std::size_t block = 32);

/// Mean over band pairs of |Q(F_i, F_j) - Q(L_i, L_j)|, windows of `block`
/// at full resolution and block/r on the LRMS grid.
double d_lambda(const Tensor& fused, const Tensor& lrms, std::size_t block = 32);
/// Mean over bands of |Q(F_i, PAN) - Q(L_i, PAN_lp)|.
double d_s(const Tensor& fused, const Tensor& lrms, const Tensor& pan, const Tensor& pan_lp,
           std::size_t block = 32);
double hqnr(double d_lambda, double d_s);

struct MetricsReport
{
  std::optional<double> psnr, sam, ergas, q2n;
  std::optional<double> d_lambda, d_s, hqnr;
};

MetricsReport reduced_resolution_report(const Tensor& pred, const Tensor& gt, std::size_t ratio,
                                        double peak = 1.0);
MetricsReport full_resolution_report(const Tensor& fused, const Tensor& lrms, const Tensor& pan,
                                     const Tensor& pan_lp);

/// One "key=value" line per field that is set.
std::string format_report(const MetricsReport& report);

} // namespace s2w
