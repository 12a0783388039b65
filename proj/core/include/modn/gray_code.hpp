#pragma once

#include <cstdint>
#include <span>

namespace modn {

inline constexpr std::uint32_t to_gray(std::uint32_t n) { return n ^ (n >> 1); }

inline constexpr std::uint32_t from_gray(std::uint32_t g) {
  for (std::uint32_t shift = 1; shift < 32; shift <<= 1) g ^= g >> shift;
  return g;
}

/// Fixed-width gray code for a real interval, most significant bit first.
/// Level k of 2^bits - 1 maps to lo + k * step().
class GrayCodec {
 public:
  GrayCodec(double lo, double hi, int bits);

  int bits() const { return bits_; }
  double step() const { return (hi_ - lo_) / static_cast<double>(levels_); }

  /// Nearest level, with x clamped into [lo, hi].
  std::uint32_t quantize(double x) const;
  double level_value(std::uint32_t level) const;

  void encode(double x, std::span<std::uint8_t> out) const;
  double decode(std::span<const std::uint8_t> bits) const;

 private:
  double lo_;
  double hi_;
  int bits_;
  std::uint32_t levels_;  // 2^bits - 1
};

}  // namespace modn
