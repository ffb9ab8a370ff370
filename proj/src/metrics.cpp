#include "s2w/metrics.hpp"

#include <cmath>
#include <iomanip>
#include <limits>
#include <numbers>
#include <sstream>

namespace s2w
{

namespace
{
void require_image_pair(const Tensor& a, const Tensor& b, const char* what)
{
  if (a.rank() != 3)
    throw ShapeError(std::string(what) + ": expected C x H x W, got " + to_string(a.shape()));
  require_same_shape(a, b, what);
}

std::size_t next_pow2(std::size_t n)
{
  std::size_t p = 1;
  while (p < n)
    p <<= 1;
  return p;
}

double norm_sq(const std::vector<double>& v)
{
  double s = 0.0;
  for (double x : v)
    s += x * x;
  return s;
}

// Plane view of a 1 x H x W or H x W tensor, or of band `band` of C x H x W.
struct Plane
{
  const double* data;
  std::size_t h, w;
  double at(std::size_t y, std::size_t x) const { return data[y * w + x]; }
};

Plane band_plane(const Tensor& t, std::size_t band)
{
  if (t.rank() == 2)
    return {t.data().data(), t.dim(0), t.dim(1)};
  if (t.rank() != 3)
    throw ShapeError("expected an image plane, got " + to_string(t.shape()));
  const std::size_t h = t.dim(1), w = t.dim(2);
  return {t.data().data() + band * h * w, h, w};
}

std::optional<double> q_planes(const Plane& a, const Plane& b, std::size_t block)
{
  if (a.h != b.h || a.w != b.w)
    throw ShapeError("q_index: plane sizes differ");
  const std::size_t bh = std::min(block, a.h), bw = std::min(block, a.w);
  double total = 0.0;
  std::size_t used = 0;
  std::vector<double> xs(bh * bw), ys(bh * bw);
  for (std::size_t by = 0; by + bh <= a.h; by += bh)
    for (std::size_t bx = 0; bx + bw <= a.w; bx += bw) {
      for (std::size_t y = 0; y < bh; ++y)
        for (std::size_t x = 0; x < bw; ++x) {
          xs[y * bw + x] = a.at(by + y, bx + x);
          ys[y * bw + x] = b.at(by + y, bx + x);
        }
      if (auto q = uiqi(xs, ys)) {
        total += *q;
        ++used;
      }
    }
  if (used == 0)
    return std::nullopt;
  return total / double(used);
}

std::optional<double> quality(const Tensor& a, std::size_t ia, const Tensor& b, std::size_t ib,
                              std::size_t block)
{
  return q_planes(band_plane(a, ia), band_plane(b, ib), block);
}

std::size_t lowres_ratio(const Tensor& fused, const Tensor& lrms, const char* what)
{
  if (fused.rank() != 3 || lrms.rank() != 3 || fused.dim(0) != lrms.dim(0) || lrms.dim(1) == 0 ||
      fused.dim(1) % lrms.dim(1) || fused.dim(1) / lrms.dim(1) * lrms.dim(2) != fused.dim(2))
    throw ShapeError(std::string(what) + ": fused " + to_string(fused.shape()) +
                     " is not an integer upscale of LRMS " + to_string(lrms.shape()));
  return fused.dim(1) / lrms.dim(1);
}
} // namespace

double psnr(const Tensor& pred, const Tensor& gt, double peak)
{
  require_same_shape(pred, gt, "psnr");
  if (!(peak > 0.0))
    throw MetricError("psnr: peak must be positive");
  double sse = 0.0;
  auto p = pred.data(), g = gt.data();
  for (std::size_t i = 0; i < p.size(); ++i)
    sse += (p[i] - g[i]) * (p[i] - g[i]);
  const double mse = sse / double(p.size());
  if (mse == 0.0)
    return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(peak * peak / mse);
}

SamResult sam_detail(const Tensor& pred, const Tensor& gt)
{
  require_image_pair(pred, gt, "sam");
  const std::size_t c = pred.dim(0), n = pred.dim(1) * pred.dim(2);
  auto p = pred.data(), g = gt.data();
  SamResult r;
  double total = 0.0;
  std::vector<double> u(c), v(c);
  for (std::size_t i = 0; i < n; ++i) {
    double np = 0.0, ng = 0.0;
    for (std::size_t b = 0; b < c; ++b) {
      np += p[b * n + i] * p[b * n + i];
      ng += g[b * n + i] * g[b * n + i];
    }
    if (np == 0.0 || ng == 0.0) {
      ++r.skipped;
      continue;
    }
    np = std::sqrt(np);
    ng = std::sqrt(ng);
    // Angle between unit vectors from the chord lengths; accurate near 0 and pi.
    double diff = 0.0, sum = 0.0;
    for (std::size_t b = 0; b < c; ++b) {
      const double pu = p[b * n + i] / np, gu = g[b * n + i] / ng;
      diff += (pu - gu) * (pu - gu);
      sum += (pu + gu) * (pu + gu);
    }
    total += 2.0 * std::atan2(std::sqrt(diff), std::sqrt(sum));
  }
  if (r.skipped == n)
    throw MetricError("sam: every pixel has a zero-norm spectrum");
  r.degrees = total / double(n - r.skipped) * 180.0 / std::numbers::pi;
  return r;
}

double sam(const Tensor& pred, const Tensor& gt)
{
  return sam_detail(pred, gt).degrees;
}

double ergas(const Tensor& pred, const Tensor& gt, std::size_t ratio)
{
  require_image_pair(pred, gt, "ergas");
  if (ratio == 0)
    throw MetricError("ergas: ratio must be positive");
  const std::size_t c = pred.dim(0), n = pred.dim(1) * pred.dim(2);
  auto p = pred.data(), g = gt.data();
  double acc = 0.0;
  for (std::size_t b = 0; b < c; ++b) {
    double sse = 0.0, mean = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double d = p[b * n + i] - g[b * n + i];
      sse += d * d;
      mean += g[b * n + i];
    }
    mean /= double(n);
    if (mean == 0.0)
      throw MetricError("ergas: band " + std::to_string(b) + " of the reference has zero mean");
    acc += (sse / double(n)) / (mean * mean);
  }
  return 100.0 / double(ratio) * std::sqrt(acc / double(c));
}

std::optional<double> uiqi(const std::vector<double>& x, const std::vector<double>& y)
{
  if (x.size() != y.size() || x.empty())
    throw ShapeError("uiqi: sample sets must be equal and nonempty");
  const double n = double(x.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double vx = 0.0, vy = 0.0, cxy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    vx += (x[i] - mx) * (x[i] - mx);
    vy += (y[i] - my) * (y[i] - my);
    cxy += (x[i] - mx) * (y[i] - my);
  }
  vx /= n;
  vy /= n;
  cxy /= n;
  const double den = (vx + vy) * (mx * mx + my * my);
  if (den == 0.0)
    return std::nullopt;
  return 4.0 * cxy * mx * my / den;
}

std::optional<double> q_index(const Tensor& a, const Tensor& b, std::size_t block)
{
  if (block == 0)
    throw MetricError("q_index: block must be positive");
  return q_planes(band_plane(a, 0), band_plane(b, 0), block);
}

std::vector<double> hypercomplex_conj(const std::vector<double>& a)
{
  std::vector<double> out(a.size());
  if (a.empty())
    return out;
  out[0] = a[0];
  for (std::size_t i = 1; i < a.size(); ++i)
    out[i] = -a[i];
  return out;
}

std::vector<double> hypercomplex_mul(const std::vector<double>& a, const std::vector<double>& b)
{
  const std::size_t n = a.size();
  if (n != b.size() || n == 0 || (n & (n - 1)))
    throw ShapeError("hypercomplex_mul: operands must share a power-of-two length");
  if (n == 1)
    return {a[0] * b[0]};
  // (p, q)(r, s) = (p r - s* q, s p + q r*)
  const std::size_t h = n / 2;
  const std::vector<double> p(a.begin(), a.begin() + h), q(a.begin() + h, a.end());
  const std::vector<double> r(b.begin(), b.begin() + h), s(b.begin() + h, b.end());
  const auto pr = hypercomplex_mul(p, r), sq = hypercomplex_mul(hypercomplex_conj(s), q);
  const auto sp = hypercomplex_mul(s, p), qr = hypercomplex_mul(q, hypercomplex_conj(r));
  std::vector<double> out(n);
  for (std::size_t i = 0; i < h; ++i) {
    out[i] = pr[i] - sq[i];
    out[h + i] = sp[i] + qr[i];
  }
  return out;
}

double q2n(const Tensor& pred, const Tensor& gt, std::size_t block)
{
  require_image_pair(pred, gt, "q2n");
  if (block == 0)
    throw MetricError("q2n: block must be positive");
  const std::size_t c = pred.dim(0), h = pred.dim(1), w = pred.dim(2), plane = h * w;
  const std::size_t dim = next_pow2(c);
  const std::size_t bh = std::min(block, h), bw = std::min(block, w), count = bh * bw;
  auto zd = pred.data(), xd = gt.data();

  double total = 0.0;
  std::size_t used = 0;
  for (std::size_t by = 0; by + bh <= h; by += bh)
    for (std::size_t bx = 0; bx + bw <= w; bx += bw) {
      auto pixel = [&](std::span<const double> src, std::size_t y, std::size_t x) {
        std::vector<double> v(dim, 0.0);
        for (std::size_t b = 0; b < c; ++b)
          v[b] = src[b * plane + (by + y) * w + bx + x];
        return v;
      };
      std::vector<double> mz(dim, 0.0), mx(dim, 0.0);
      for (std::size_t y = 0; y < bh; ++y)
        for (std::size_t x = 0; x < bw; ++x) {
          const auto z = pixel(zd, y, x), g = pixel(xd, y, x);
          for (std::size_t k = 0; k < dim; ++k) {
            mz[k] += z[k] / double(count);
            mx[k] += g[k] / double(count);
          }
        }
      double vz = 0.0, vx = 0.0;
      std::vector<double> cov(dim, 0.0);
      for (std::size_t y = 0; y < bh; ++y)
        for (std::size_t x = 0; x < bw; ++x) {
          auto z = pixel(zd, y, x), g = pixel(xd, y, x);
          for (std::size_t k = 0; k < dim; ++k) {
            z[k] -= mz[k];
            g[k] -= mx[k];
          }
          vz += norm_sq(z);
          vx += norm_sq(g);
          const auto prod = hypercomplex_mul(g, hypercomplex_conj(z));
          for (std::size_t k = 0; k < dim; ++k)
            cov[k] += prod[k];
        }
      vz /= double(count);
      vx /= double(count);
      const double den = (vz + vx) * (norm_sq(mz) + norm_sq(mx));
      if (den == 0.0)
        continue;
      // One band: keep the sign of the covariance so the index is the UIQI.
      const double cov_term = dim == 1 ? cov[0] / double(count) : std::sqrt(norm_sq(cov)) / double(count);
      const double mean_term = dim == 1 ? mz[0] * mx[0] : std::sqrt(norm_sq(mz) * norm_sq(mx));
      total += 4.0 * cov_term * mean_term / den;
      ++used;
    }
  if (used == 0)
    throw MetricError("q2n: every window is degenerate (constant images)");
  return total / double(used);
}

double d_lambda(const Tensor& fused, const Tensor& lrms, std::size_t block)
{
  const std::size_t r = lowres_ratio(fused, lrms, "d_lambda");
  const std::size_t c = fused.dim(0), low_block = std::max<std::size_t>(1, block / r);
  double total = 0.0;
  std::size_t used = 0;
  for (std::size_t i = 0; i < c; ++i)
    for (std::size_t j = i + 1; j < c; ++j) {
      const auto qf = quality(fused, i, fused, j, block);
      const auto ql = quality(lrms, i, lrms, j, low_block);
      if (qf && ql) {
        total += std::abs(*qf - *ql);
        ++used;
      }
    }
  if (used == 0)
    throw MetricError("d_lambda: no band pair has a defined quality index");
  return total / double(used);
}

double d_s(const Tensor& fused, const Tensor& lrms, const Tensor& pan, const Tensor& pan_lp,
           std::size_t block)
{
  const std::size_t r = lowres_ratio(fused, lrms, "d_s");
  if (pan.rank() != 3 || pan.dim(0) != 1 || pan.dim(1) != fused.dim(1) || pan.dim(2) != fused.dim(2) ||
      pan_lp.rank() != 3 || pan_lp.dim(0) != 1 || pan_lp.dim(1) != lrms.dim(1) ||
      pan_lp.dim(2) != lrms.dim(2))
    throw ShapeError("d_s: PAN " + to_string(pan.shape()) + " / low-pass PAN " +
                     to_string(pan_lp.shape()) + " do not match the fused and LRMS grids");
  const std::size_t c = fused.dim(0), low_block = std::max<std::size_t>(1, block / r);
  double total = 0.0;
  std::size_t used = 0;
  for (std::size_t i = 0; i < c; ++i) {
    const auto qf = quality(fused, i, pan, 0, block);
    const auto ql = quality(lrms, i, pan_lp, 0, low_block);
    if (qf && ql) {
      total += std::abs(*qf - *ql);
      ++used;
    }
  }
  if (used == 0)
    throw MetricError("d_s: no band has a defined quality index");
  return total / double(used);
}

double hqnr(double d_lambda, double d_s)
{
  return (1.0 - d_lambda) * (1.0 - d_s);
}

MetricsReport reduced_resolution_report(const Tensor& pred, const Tensor& gt, std::size_t ratio,
                                        double peak)
{
  MetricsReport r;
  r.psnr = psnr(pred, gt, peak);
  r.sam = sam(pred, gt);
  r.ergas = ergas(pred, gt, ratio);
  r.q2n = q2n(pred, gt);
  return r;
}

MetricsReport full_resolution_report(const Tensor& fused, const Tensor& lrms, const Tensor& pan,
                                     const Tensor& pan_lp)
{
  MetricsReport r;
  r.d_lambda = d_lambda(fused, lrms);
  r.d_s = d_s(fused, lrms, pan, pan_lp);
  r.hqnr = hqnr(*r.d_lambda, *r.d_s);
  return r;
}

std::string format_report(const MetricsReport& report)
{
  std::ostringstream os;
  auto line = [&](const char* key, const std::optional<double>& v, int precision) {
    if (!v)
      return;
    os << key << '=';
    if (std::isinf(*v))
      os << (*v > 0 ? "inf" : "-inf");
    else
      os << std::fixed << std::setprecision(precision) << *v;
    os << '\n';
  };
  line("psnr", report.psnr, 4);
  line("sam", report.sam, 4);
  line("ergas", report.ergas, 4);
  line("q2n", report.q2n, 4);
  line("d_lambda", report.d_lambda, 4);
  line("d_s", report.d_s, 4);
  line("hqnr", report.hqnr, 3);
  return os.str();
}

} // namespace s2w
