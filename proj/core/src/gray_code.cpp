#include "modn/gray_code.hpp"

#include <algorithm>
#include <cmath>

#include "modn/errors.hpp"

namespace modn {

GrayCodec::GrayCodec(double lo, double hi, int bits) : lo_(lo), hi_(hi), bits_(bits) {
  if (bits < 1 || bits > 31) throw UsageError("gray code width must be in [1, 31]");
  if (!(hi > lo)) throw UsageError("gray code interval must have hi > lo");
  levels_ = (std::uint32_t{1} << bits) - 1;
}

std::uint32_t GrayCodec::quantize(double x) const {
  const double t = (std::clamp(x, lo_, hi_) - lo_) / (hi_ - lo_);
  return static_cast<std::uint32_t>(std::lround(t * static_cast<double>(levels_)));
}

double GrayCodec::level_value(std::uint32_t level) const {
  if (level >= levels_) return hi_;
  return lo_ + static_cast<double>(level) * step();
}

void GrayCodec::encode(double x, std::span<std::uint8_t> out) const {
  if (out.size() != static_cast<std::size_t>(bits_)) throw ShapeError("gray code buffer width");
  const std::uint32_t g = to_gray(quantize(x));
  for (int b = 0; b < bits_; ++b) out[static_cast<std::size_t>(b)] = (g >> (bits_ - 1 - b)) & 1u;
}

double GrayCodec::decode(std::span<const std::uint8_t> bits) const {
  if (bits.size() != static_cast<std::size_t>(bits_)) throw ShapeError("gray code buffer width");
  std::uint32_t g = 0;
  for (std::uint8_t bit : bits) g = (g << 1) | (bit ? 1u : 0u);
  return level_value(from_gray(g));
}

}  // namespace modn
