#pragma once

#include "s2w/tensor.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <numbers>
#include <vector>

// Straightforward reference implementations of the quality metrics, written
// independently of the library code they check.
namespace s2w::oracle
{

using Quat = std::array<double, 4>; // w + x i + y j + z k

inline Quat hamilton(const Quat& a, const Quat& b)
{
  return {a[0] * b[0] - a[1] * b[1] - a[2] * b[2] - a[3] * b[3],
          a[0] * b[1] + a[1] * b[0] + a[2] * b[3] - a[3] * b[2],
          a[0] * b[2] - a[1] * b[3] + a[2] * b[0] + a[3] * b[1],
          a[0] * b[3] + a[1] * b[2] - a[2] * b[1] + a[3] * b[0]};
}

inline double qnorm(const Quat& q)
{
  return std::sqrt(q[0] * q[0] + q[1] * q[1] + q[2] * q[2] + q[3] * q[3]);
}

// Q4 over a single window covering the whole image, bands 0..3 as w, x, y, z.
inline double q4_oracle(const Tensor& z, const Tensor& x)
{
  const std::size_t c = z.dim(0), n = z.dim(1) * z.dim(2);
  auto pix = [&](const Tensor& t, std::size_t i) {
    Quat q{};
    for (std::size_t b = 0; b < c; ++b)
      q[b] = t.data()[b * n + i];
    return q;
  };
  Quat mz{}, mx{};
  for (std::size_t i = 0; i < n; ++i)
    for (int k = 0; k < 4; ++k) {
      mz[k] += pix(z, i)[k] / double(n);
      mx[k] += pix(x, i)[k] / double(n);
    }
  double vz = 0, vx = 0;
  Quat cov{};
  for (std::size_t i = 0; i < n; ++i) {
    Quat dz = pix(z, i), dx = pix(x, i);
    for (int k = 0; k < 4; ++k) {
      dz[k] -= mz[k];
      dx[k] -= mx[k];
    }
    vz += qnorm(dz) * qnorm(dz) / double(n);
    vx += qnorm(dx) * qnorm(dx) / double(n);
    const Quat conj{dx[0], -dx[1], -dx[2], -dx[3]};
    const Quat p = hamilton(dz, conj);
    for (int k = 0; k < 4; ++k)
      cov[k] += p[k] / double(n);
  }
  return 4 * qnorm(cov) * qnorm(mz) * qnorm(mx) /
         ((vz + vx) * (qnorm(mz) * qnorm(mz) + qnorm(mx) * qnorm(mx)));
}

inline double q2_oracle(const Tensor& z, const Tensor& x)
{
  const std::size_t n = z.dim(1) * z.dim(2);
  std::vector<std::complex<double>> a(n), b(n);
  std::complex<double> ma, mb;
  for (std::size_t i = 0; i < n; ++i) {
    a[i] = {z.data()[i], z.data()[n + i]};
    b[i] = {x.data()[i], x.data()[n + i]};
    ma += a[i] / double(n);
    mb += b[i] / double(n);
  }
  double va = 0, vb = 0;
  std::complex<double> cov;
  for (std::size_t i = 0; i < n; ++i) {
    va += std::norm(a[i] - ma) / double(n);
    vb += std::norm(b[i] - mb) / double(n);
    cov += (a[i] - ma) * std::conj(b[i] - mb) / double(n);
  }
  return 4 * std::abs(cov) * std::abs(ma) * std::abs(mb) / ((va + vb) * (std::norm(ma) + std::norm(mb)));
}

inline double uiqi_oracle(const std::vector<double>& x, const std::vector<double>& y)
{
  const double n = double(x.size());
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i] / n;
    my += y[i] / n;
  }
  double vx = 0, vy = 0, cxy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    vx += (x[i] - mx) * (x[i] - mx) / n;
    vy += (y[i] - my) * (y[i] - my) / n;
    cxy += (x[i] - mx) * (y[i] - my) / n;
  }
  return 4 * cxy * mx * my / ((vx + vy) * (mx * mx + my * my));
}

// Mean UIQI over full block x block windows of band ia of a and band ib of b.
inline double block_q_oracle(const Tensor& a, std::size_t ia, const Tensor& b, std::size_t ib, std::size_t block)
{
  const std::size_t h = a.dim(1), w = a.dim(2);
  double total = 0;
  std::size_t used = 0;
  for (std::size_t by = 0; by + block <= h; by += block)
    for (std::size_t bx = 0; bx + block <= w; bx += block) {
      std::vector<double> x, y;
      for (std::size_t i = 0; i < block; ++i)
        for (std::size_t j = 0; j < block; ++j) {
          x.push_back(a.data()[(ia * h + by + i) * w + bx + j]);
          y.push_back(b.data()[(ib * h + by + i) * w + bx + j]);
        }
      total += uiqi_oracle(x, y);
      ++used;
    }
  return total / double(used);
}

inline double psnr(const Tensor& pred, const Tensor& gt)
{
  double mse = 0;
  for (std::size_t i = 0; i < pred.numel(); ++i)
    mse += (pred.data()[i] - gt.data()[i]) * (pred.data()[i] - gt.data()[i]);
  mse /= double(pred.numel());
  return 10 * std::log10(1.0 / mse);
}

inline double sam_degrees(const Tensor& pred, const Tensor& gt)
{
  const std::size_t c = pred.dim(0), n = pred.dim(1) * pred.dim(2);
  double total = 0;
  for (std::size_t p = 0; p < n; ++p) {
    double dot = 0, na = 0, nb = 0;
    for (std::size_t b = 0; b < c; ++b) {
      const double u = pred.data()[b * n + p], v = gt.data()[b * n + p];
      dot += u * v;
      na += u * u;
      nb += v * v;
    }
    total += std::acos(std::clamp(dot / std::sqrt(na * nb), -1.0, 1.0)) * 180.0 / std::numbers::pi;
  }
  return total / double(n);
}

inline double ergas(const Tensor& pred, const Tensor& gt, std::size_t ratio)
{
  const std::size_t c = pred.dim(0), n = pred.dim(1) * pred.dim(2);
  double acc = 0;
  for (std::size_t b = 0; b < c; ++b) {
    double mse = 0, mean = 0;
    for (std::size_t i = 0; i < n; ++i) {
      mse += std::pow(pred.data()[b * n + i] - gt.data()[b * n + i], 2) / double(n);
      mean += gt.data()[b * n + i] / double(n);
    }
    acc += mse / (mean * mean) / double(c);
  }
  return 100.0 / double(ratio) * std::sqrt(acc);
}

} // namespace s2w::oracle
