#pragma once

#include "s2w/tensor.hpp"

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <stdexcept>
#include <string>

namespace s2w
{

/// Malformed, truncated or unreadable data files.
class FormatError : public std::runtime_error
{
public:
  using std::runtime_error::runtime_error;
};

namespace io
{
void write_u16(std::ostream& os, std::uint16_t v);
void write_u32(std::ostream& os, std::uint32_t v);
void write_f32(std::ostream& os, float v);
std::uint16_t read_u16(std::istream& is);
std::uint32_t read_u32(std::istream& is);
float read_f32(std::istream& is);
void read_exact(std::istream& is, char* dst, std::size_t n);
} // namespace io

// S2WT image files: "S2WT", u32 LE C, H, W, then C*H*W float32 LE samples in
// planar channel-major order. One tensor per file.

void write_image(std::ostream& os, const Tensor& image);
Tensor read_image(std::istream& is);
void write_image(const std::filesystem::path& path, const Tensor& image);
Tensor read_image(const std::filesystem::path& path);

/// 8-bit binary PGM of one band, linearly mapped from [lo, hi].
void write_pgm(const std::filesystem::path& path, const Tensor& image, std::size_t band, double lo,
               double hi);

} // namespace s2w
