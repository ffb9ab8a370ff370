#include "s2w/io.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <limits>

namespace s2w
{

namespace io
{
void write_u16(std::ostream& os, std::uint16_t v)
{
  const char b[2] = {static_cast<char>(v & 0xff), static_cast<char>(v >> 8)};
  os.write(b, 2);
}

void write_u32(std::ostream& os, std::uint32_t v)
{
  char b[4];
  for (int i = 0; i < 4; ++i)
    b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
  os.write(b, 4);
}

void write_f32(std::ostream& os, float v)
{
  write_u32(os, std::bit_cast<std::uint32_t>(v));
}

void read_exact(std::istream& is, char* dst, std::size_t n)
{
  is.read(dst, static_cast<std::streamsize>(n));
  if (static_cast<std::size_t>(is.gcount()) != n)
    throw FormatError("truncated file: expected " + std::to_string(n) + " more bytes");
}

std::uint16_t read_u16(std::istream& is)
{
  unsigned char b[2];
  read_exact(is, reinterpret_cast<char*>(b), 2);
  return static_cast<std::uint16_t>(b[0] | (b[1] << 8));
}

std::uint32_t read_u32(std::istream& is)
{
  unsigned char b[4];
  read_exact(is, reinterpret_cast<char*>(b), 4);
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

float read_f32(std::istream& is)
{
  return std::bit_cast<float>(read_u32(is));
}
} // namespace io

namespace
{
constexpr char kImageMagic[4] = {'S', '2', 'W', 'T'};
// Guards against absurd headers before allocating.
constexpr std::uint64_t kMaxSamples = std::uint64_t{1} << 32;
} // namespace

void write_image(std::ostream& os, const Tensor& image)
{
  if (image.rank() != 3)
    throw ShapeError("write_image: expected C x H x W, got " + to_string(image.shape()));
  for (auto d : image.shape())
    if (d > std::numeric_limits<std::uint32_t>::max())
      throw FormatError("write_image: dimension overflow in " + to_string(image.shape()));
  os.write(kImageMagic, 4);
  for (auto d : image.shape())
    io::write_u32(os, static_cast<std::uint32_t>(d));
  std::vector<char> payload(image.numel() * 4);
  auto values = image.data();
  for (std::size_t i = 0; i < values.size(); ++i) {
    const auto bits = std::bit_cast<std::uint32_t>(static_cast<float>(values[i]));
    for (int k = 0; k < 4; ++k)
      payload[4 * i + k] = static_cast<char>((bits >> (8 * k)) & 0xff);
  }
  os.write(payload.data(), static_cast<std::streamsize>(payload.size()));
  if (!os)
    throw FormatError("write_image: stream write failed");
}

Tensor read_image(std::istream& is)
{
  char magic[4];
  io::read_exact(is, magic, 4);
  if (!std::equal(magic, magic + 4, kImageMagic))
    throw FormatError("bad magic: not an S2WT image");
  const std::uint64_t c = io::read_u32(is), h = io::read_u32(is), w = io::read_u32(is);
  if (c == 0 || h == 0 || w == 0 || c * h * w > kMaxSamples)
    throw FormatError("invalid S2WT dimensions " + std::to_string(c) + "x" + std::to_string(h) +
                      "x" + std::to_string(w));
  const std::size_t n = static_cast<std::size_t>(c * h * w);
  std::vector<char> payload(n * 4);
  io::read_exact(is, payload.data(), payload.size());
  std::vector<double> values(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::uint32_t bits = 0;
    for (int k = 0; k < 4; ++k)
      bits |= static_cast<std::uint32_t>(static_cast<unsigned char>(payload[4 * i + k])) << (8 * k);
    values[i] = std::bit_cast<float>(bits);
  }
  return Tensor(Shape{c, h, w}, std::move(values));
}

void write_image(const std::filesystem::path& path, const Tensor& image)
{
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os)
    throw FormatError("cannot open " + path.string() + " for writing");
  write_image(os, image);
}

Tensor read_image(const std::filesystem::path& path)
{
  std::ifstream is(path, std::ios::binary);
  if (!is)
    throw FormatError("cannot open " + path.string());
  try {
    return read_image(is);
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

void write_pgm(const std::filesystem::path& path, const Tensor& image, std::size_t band, double lo,
               double hi)
{
  if (image.rank() != 3 || band >= image.dim(0))
    throw ShapeError("write_pgm: band " + std::to_string(band) + " not in " +
                     to_string(image.shape()));
  const std::size_t h = image.dim(1), w = image.dim(2);
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os)
    throw FormatError("cannot open " + path.string() + " for writing");
  os << "P5\n" << w << ' ' << h << "\n255\n";
  const double span = hi > lo ? hi - lo : 1.0;
  auto values = image.data().subspan(band * h * w, h * w);
  for (double v : values) {
    const double t = std::clamp((v - lo) / span, 0.0, 1.0);
    os.put(static_cast<char>(static_cast<unsigned char>(std::lround(t * 255.0))));
  }
}

} // namespace s2w
