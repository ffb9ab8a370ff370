#include "s2w/dataset.hpp"

#include "s2w/io.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <iomanip>
#include <set>
#include <numbers>
#include <random>
#include <sstream>

namespace s2w
{

namespace
{
using Rng = std::mt19937_64;

// Bit patterns are fixed by mt19937_64; avoid the implementation-defined
// standard distributions so scenes match across standard libraries.
double uniform(Rng& rng, double lo, double hi)
{
  return lo + (hi - lo) * static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

std::size_t pick(Rng& rng, std::size_t lo, std::size_t hi)
{
  return lo + static_cast<std::size_t>(rng() % (hi - lo + 1));
}

struct Polygon
{
  std::vector<double> xs, ys;
  std::size_t material;

  bool contains(double x, double y) const
  {
    bool inside = false;
    for (std::size_t i = 0, j = xs.size() - 1; i < xs.size(); j = i++) {
      if ((ys[i] > y) != (ys[j] > y) &&
          x < (xs[j] - xs[i]) * (y - ys[i]) / (ys[j] - ys[i]) + xs[i])
        inside = !inside;
    }
    return inside;
  }
};

struct Wave
{
  double fx, fy, phase, amplitude;
};

// A spectral signature: smooth random walk over bands.
std::vector<double> signature(Rng& rng, std::size_t bands)
{
  std::vector<double> s(bands);
  double v = uniform(rng, 0.15, 0.75);
  for (auto& x : s) {
    x = std::clamp(v, 0.05, 0.9);
    v += uniform(rng, -0.08, 0.08);
  }
  return s;
}

Polygon random_polygon(Rng& rng, double h, double w, double min_radius, std::size_t material)
{
  const double cx = uniform(rng, 0.2, 0.8) * w, cy = uniform(rng, 0.2, 0.8) * h;
  const double radius = uniform(rng, min_radius, 0.35) * std::min(h, w);
  const std::size_t n = pick(rng, 3, 7);
  std::vector<double> angles(n);
  for (auto& a : angles)
    a = uniform(rng, 0.0, 2.0 * std::numbers::pi);
  std::sort(angles.begin(), angles.end());
  Polygon p{{}, {}, material};
  for (double a : angles) {
    const double r = radius * uniform(rng, 0.6, 1.0);
    p.xs.push_back(cx + r * std::cos(a));
    p.ys.push_back(cy + r * std::sin(a));
  }
  return p;
}
} // namespace

Tensor generate_scene(const SceneSpec& spec, std::size_t index)
{
  if (spec.bands == 0 || spec.height == 0 || spec.width == 0)
    throw ShapeError("generate_scene: empty scene dimensions");
  std::seed_seq seq{static_cast<std::uint32_t>(spec.seed), static_cast<std::uint32_t>(spec.seed >> 32),
                    static_cast<std::uint32_t>(index), static_cast<std::uint32_t>(index >> 32)};
  Rng rng(seq);
  const std::size_t c = spec.bands, h = spec.height, w = spec.width;

  std::vector<std::vector<double>> materials;
  const std::size_t n_materials = pick(rng, 4, 6);
  for (std::size_t m = 0; m < n_materials; ++m)
    materials.push_back(signature(rng, c));
  // The first polygon uses a material shifted away from the background so at
  // least one clear step edge exists.
  for (auto& v : materials[1])
    v = std::clamp(materials[0][0] > 0.45 ? v - 0.3 : v + 0.3, 0.05, 0.95);

  std::vector<Polygon> polygons;
  polygons.push_back(random_polygon(rng, double(h), double(w), 0.2, 1));
  const std::size_t extra = pick(rng, 2, 6);
  for (std::size_t k = 0; k < extra; ++k)
    polygons.push_back(random_polygon(rng, double(h), double(w), 0.08, pick(rng, 0, n_materials - 1)));

  const double gx = uniform(rng, -0.4, 0.4), gy = uniform(rng, -0.4, 0.4);
  std::vector<Wave> waves(2);
  for (auto& wv : waves) {
    const double period = uniform(rng, 3.0, 12.0), angle = uniform(rng, 0.0, std::numbers::pi);
    wv = {2.0 * std::numbers::pi * std::cos(angle) / period,
          2.0 * std::numbers::pi * std::sin(angle) / period, uniform(rng, 0.0, 6.3),
          uniform(rng, 0.03, 0.08)};
  }

  std::vector<double> out(c * h * w);
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      const double px = double(x) + 0.5, py = double(y) + 0.5;
      std::size_t material = 0;
      for (const auto& poly : polygons)
        if (poly.contains(px, py))
          material = poly.material;
      const double shade = 1.0 + gx * (px / double(w) - 0.5) + gy * (py / double(h) - 0.5);
      double texture = 0.0;
      for (const auto& wv : waves)
        texture += wv.amplitude * std::sin(wv.fx * px + wv.fy * py + wv.phase);
      for (std::size_t b = 0; b < c; ++b) {
        const double s = materials[material][b];
        out[(b * h + y) * w + x] = std::clamp(s * shade + s * texture, 0.0, 1.0);
      }
    }
  }
  return Tensor(Shape{c, h, w}, std::move(out));
}

std::vector<Tensor> generate_scenes(const SceneSpec& spec)
{
  std::vector<Tensor> scenes;
  scenes.reserve(spec.count);
  for (std::size_t i = 0; i < spec.count; ++i)
    scenes.push_back(generate_scene(spec, i));
  return scenes;
}

GaussianTaps gaussian_taps(std::size_t ratio)
{
  if (ratio == 0)
    throw ShapeError("gaussian_taps: ratio must be positive");
  const double sigma = double(ratio) / 2.0, support = 4.0 * sigma;
  const double centre = 0.5 * double(ratio) - 0.5; // of output cell 0
  const auto lo = static_cast<std::ptrdiff_t>(std::ceil(centre - support));
  const auto hi = static_cast<std::ptrdiff_t>(std::floor(centre + support));
  GaussianTaps taps;
  taps.first = lo;
  double total = 0.0;
  for (std::ptrdiff_t m = lo; m <= hi; ++m) {
    const double d = double(m) - centre;
    taps.weights.push_back(std::exp(-d * d / (2.0 * sigma * sigma)));
    total += taps.weights.back();
  }
  for (auto& v : taps.weights)
    v /= total;
  return taps;
}

Tensor blur_decimate(const Tensor& image, std::size_t ratio)
{
  if (image.rank() != 3)
    throw ShapeError("blur_decimate: expected C x H x W, got " + to_string(image.shape()));
  const std::size_t c = image.dim(0), h = image.dim(1), w = image.dim(2);
  if (ratio == 0 || h % ratio || w % ratio)
    throw ShapeError("blur_decimate: " + to_string(image.shape()) + " not divisible by ratio " +
                     std::to_string(ratio));
  const std::size_t ho = h / ratio, wo = w / ratio;
  const GaussianTaps taps = gaussian_taps(ratio);
  auto clamp_index = [](std::ptrdiff_t i, std::size_t n) {
    return static_cast<std::size_t>(std::clamp<std::ptrdiff_t>(i, 0, std::ptrdiff_t(n) - 1));
  };
  auto src = image.data();

  std::vector<double> rows(c * ho * w, 0.0);
  for (std::size_t b = 0; b < c; ++b)
    for (std::size_t i = 0; i < ho; ++i)
      for (std::size_t k = 0; k < taps.weights.size(); ++k) {
        const std::size_t y = clamp_index(std::ptrdiff_t(i * ratio) + taps.first + std::ptrdiff_t(k), h);
        const double wk = taps.weights[k];
        for (std::size_t x = 0; x < w; ++x)
          rows[(b * ho + i) * w + x] += wk * src[(b * h + y) * w + x];
      }

  std::vector<double> out(c * ho * wo, 0.0);
  for (std::size_t r = 0; r < c * ho; ++r)
    for (std::size_t j = 0; j < wo; ++j) {
      double acc = 0.0;
      for (std::size_t k = 0; k < taps.weights.size(); ++k) {
        const std::size_t x = clamp_index(std::ptrdiff_t(j * ratio) + taps.first + std::ptrdiff_t(k), w);
        acc += taps.weights[k] * rows[r * w + x];
      }
      out[r * wo + j] = acc;
    }
  return Tensor(Shape{c, ho, wo}, std::move(out));
}

Tensor synthesize_pan(const Tensor& gt, const std::vector<double>& weights)
{
  if (gt.rank() != 3)
    throw ShapeError("synthesize_pan: expected C x H x W, got " + to_string(gt.shape()));
  const std::size_t c = gt.dim(0), plane = gt.dim(1) * gt.dim(2);
  std::vector<double> wb = weights.empty() ? std::vector<double>(c, 1.0 / double(c)) : weights;
  if (wb.size() != c)
    throw ShapeError("synthesize_pan: " + std::to_string(wb.size()) + " weights for " +
                     std::to_string(c) + " bands");
  std::vector<double> out(plane, 0.0);
  auto src = gt.data();
  for (std::size_t b = 0; b < c; ++b)
    for (std::size_t i = 0; i < plane; ++i)
      out[i] += wb[b] * src[b * plane + i];
  return Tensor(Shape{1, gt.dim(1), gt.dim(2)}, std::move(out));
}

Triplet wald_degrade(const Tensor& gt, std::size_t ratio, const std::vector<double>& pan_weights)
{
  Triplet t;
  t.gt = gt.detach();
  t.lrms = blur_decimate(gt, ratio);
  t.pan = synthesize_pan(gt, pan_weights);
  t.pan_lp = blur_decimate(t.pan, ratio);
  return t;
}

std::filesystem::path triplet_path(const std::filesystem::path& split_dir, std::size_t index,
                                   const std::string& kind)
{
  std::ostringstream name;
  name << std::setw(4) << std::setfill('0') << index << '.' << kind << ".s2wt";
  return split_dir / name.str();
}

void save_triplet(const std::filesystem::path& split_dir, std::size_t index, const Triplet& t)
{
  std::filesystem::create_directories(split_dir);
  write_image(triplet_path(split_dir, index, "gt"), t.gt);
  write_image(triplet_path(split_dir, index, "lrms"), t.lrms);
  write_image(triplet_path(split_dir, index, "pan"), t.pan);
}

std::vector<Triplet> load_split(const std::filesystem::path& split_dir)
{
  if (!std::filesystem::is_directory(split_dir))
    throw FormatError("dataset split not found: " + split_dir.string());
  std::set<std::size_t> seen;
  for (const auto& entry : std::filesystem::directory_iterator(split_dir)) {
    const std::string name = entry.path().filename().string();
    const auto suffix = std::string(".gt.s2wt");
    if (name.size() <= suffix.size() || name.compare(name.size() - suffix.size(), suffix.size(), suffix))
      continue;
    std::size_t index = 0;
    const char* end = name.data() + name.size() - suffix.size();
    auto [ptr, ec] = std::from_chars(name.data(), end, index);
    if (ec == std::errc() && ptr == end)
      seen.insert(index);
  }
  std::vector<Triplet> out;
  for (std::size_t index : seen) {
    Triplet t;
    t.gt = read_image(triplet_path(split_dir, index, "gt"));
    t.lrms = read_image(triplet_path(split_dir, index, "lrms"));
    t.pan = read_image(triplet_path(split_dir, index, "pan"));
    const std::size_t h = t.gt.dim(1), hl = t.lrms.dim(1);
    if (t.pan.dim(0) != 1 || t.pan.dim(1) != h || t.pan.dim(2) != t.gt.dim(2) ||
        t.lrms.dim(0) != t.gt.dim(0) || hl == 0 || h % hl || t.gt.dim(2) != t.lrms.dim(2) * (h / hl))
      throw FormatError("inconsistent triplet shapes at index " + std::to_string(index) + " in " +
                        split_dir.string());
    t.pan_lp = blur_decimate(t.pan, h / hl);
    out.push_back(std::move(t));
  }
  if (out.empty())
    throw FormatError("no triplets found in " + split_dir.string());
  return out;
}

} // namespace s2w
