#pragma once

// Data-parallel inner loops.  Every kernel exists twice: a plain serial
// reference in kernels::serial and an OpenMP version in kernels::parallel.
// The library calls the parallel one; tests pin it to the serial one and the
// benchmark target compares the two.

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace slicetrack::kernels {

struct OverlapCounts {
  std::size_t a = 0;
  std::size_t b = 0;
  std::size_t both = 0;

  friend bool operator==(const OverlapCounts&, const OverlapCounts&) = default;
};

/// HU -> [0,255]: clamp to [level - width/2, level + width/2], scale linearly,
/// round half up.
std::uint8_t window_value(float hu, double level, double width);

namespace serial {

void window_u8(std::span<const float> hu, double level, double width, std::span<std::uint8_t> out);
std::size_t count_nonzero(std::span<const std::uint8_t> v);
OverlapCounts overlap(std::span<const std::uint8_t> a, std::span<const std::uint8_t> b);
void union_into(std::span<std::uint8_t> dst, std::span<const std::uint8_t> src);
std::vector<std::size_t> slice_counts(std::span<const std::uint8_t> v, std::size_t slice_pixels);
void dilate_chebyshev(std::span<const std::uint8_t> in, int width, int height, int radius,
                      std::span<std::uint8_t> out);

}  // namespace serial

namespace parallel {

void window_u8(std::span<const float> hu, double level, double width, std::span<std::uint8_t> out);
std::size_t count_nonzero(std::span<const std::uint8_t> v);
OverlapCounts overlap(std::span<const std::uint8_t> a, std::span<const std::uint8_t> b);
void union_into(std::span<std::uint8_t> dst, std::span<const std::uint8_t> src);
std::vector<std::size_t> slice_counts(std::span<const std::uint8_t> v, std::size_t slice_pixels);
/// Separable square dilation: horizontal max filter over rows, then vertical.
void dilate_chebyshev(std::span<const std::uint8_t> in, int width, int height, int radius,
                      std::span<std::uint8_t> out);

}  // namespace parallel

int max_threads();

}  // namespace slicetrack::kernels
