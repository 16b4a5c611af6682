#include "slicetrack/kernels.hpp"

#include <algorithm>
#include <cassert>
#include <cmath>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace slicetrack::kernels {

std::uint8_t window_value(float hu, double level, double width) {
  const double lo = level - width / 2.0;
  const double hi = level + width / 2.0;
  const double v = std::clamp(static_cast<double>(hu), lo, hi);
  const double scaled = (v - lo) / (hi - lo) * 255.0;
  return static_cast<std::uint8_t>(std::min(255.0, std::floor(scaled + 0.5)));
}

int max_threads() {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

namespace {

// Vertical pass shared by both dilations; `rows` holds the horizontally
// dilated image.
inline std::uint8_t column_max(const std::uint8_t* rows, int width, int height, int x, int y, int radius) {
  const int y0 = std::max(0, y - radius);
  const int y1 = std::min(height - 1, y + radius);
  for (int yy = y0; yy <= y1; ++yy) {
    if (rows[static_cast<std::size_t>(yy) * width + x]) return 1;
  }
  return 0;
}

// Horizontal pass for one row using a sliding count of set pixels.
inline void row_max(const std::uint8_t* in, std::uint8_t* out, int width, int radius) {
  int window = 0;
  for (int x = 0; x <= std::min(width - 1, radius); ++x) window += in[x] ? 1 : 0;
  for (int x = 0; x < width; ++x) {
    out[x] = window > 0 ? 1 : 0;
    const int leaving = x - radius;
    const int entering = x + radius + 1;
    if (leaving >= 0 && in[leaving]) --window;
    if (entering < width && in[entering]) ++window;
  }
}

}  // namespace

// ---------------------------------------------------------------------------

namespace serial {

void window_u8(std::span<const float> hu, double level, double width, std::span<std::uint8_t> out) {
  assert(hu.size() == out.size());
  for (std::size_t i = 0; i < hu.size(); ++i) out[i] = window_value(hu[i], level, width);
}

std::size_t count_nonzero(std::span<const std::uint8_t> v) {
  std::size_t n = 0;
  for (auto b : v) n += b != 0;
  return n;
}

OverlapCounts overlap(std::span<const std::uint8_t> a, std::span<const std::uint8_t> b) {
  assert(a.size() == b.size());
  OverlapCounts c;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const bool x = a[i] != 0;
    const bool y = b[i] != 0;
    c.a += x;
    c.b += y;
    c.both += x && y;
  }
  return c;
}

void union_into(std::span<std::uint8_t> dst, std::span<const std::uint8_t> src) {
  assert(dst.size() == src.size());
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] = (dst[i] || src[i]) ? 1 : 0;
}

std::vector<std::size_t> slice_counts(std::span<const std::uint8_t> v, std::size_t slice_pixels) {
  const std::size_t nz = slice_pixels ? v.size() / slice_pixels : 0;
  std::vector<std::size_t> counts(nz, 0);
  for (std::size_t i = 0; i < nz * slice_pixels; ++i) counts[i / slice_pixels] += v[i] != 0;
  return counts;
}

void dilate_chebyshev(std::span<const std::uint8_t> in, int width, int height, int radius,
                      std::span<std::uint8_t> out) {
  assert(in.size() == out.size());
  assert(in.size() == static_cast<std::size_t>(width) * height);
  if (radius <= 0) {
    for (std::size_t i = 0; i < in.size(); ++i) out[i] = in[i] ? 1 : 0;
    return;
  }
  std::vector<std::uint8_t> rows(in.size());
  for (int y = 0; y < height; ++y) {
    row_max(in.data() + static_cast<std::size_t>(y) * width, rows.data() + static_cast<std::size_t>(y) * width,
            width, radius);
  }
  for (int y = 0; y < height; ++y)
    for (int x = 0; x < width; ++x)
      out[static_cast<std::size_t>(y) * width + x] = column_max(rows.data(), width, height, x, y, radius);
}

}  // namespace serial

// ---------------------------------------------------------------------------

namespace parallel {

void window_u8(std::span<const float> hu, double level, double width, std::span<std::uint8_t> out) {
  assert(hu.size() == out.size());
  const auto n = static_cast<std::ptrdiff_t>(hu.size());
  const float* src = hu.data();
  std::uint8_t* dst = out.data();
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < n; ++i) dst[i] = window_value(src[i], level, width);
}

std::size_t count_nonzero(std::span<const std::uint8_t> v) {
  const auto n = static_cast<std::ptrdiff_t>(v.size());
  const std::uint8_t* p = v.data();
  std::size_t total = 0;
#pragma omp parallel for reduction(+ : total) schedule(static)
  for (std::ptrdiff_t i = 0; i < n; ++i) total += p[i] != 0;
  return total;
}

OverlapCounts overlap(std::span<const std::uint8_t> a, std::span<const std::uint8_t> b) {
  assert(a.size() == b.size());
  const auto n = static_cast<std::ptrdiff_t>(a.size());
  const std::uint8_t* pa = a.data();
  const std::uint8_t* pb = b.data();
  std::size_t ca = 0, cb = 0, both = 0;
#pragma omp parallel for reduction(+ : ca, cb, both) schedule(static)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    const bool x = pa[i] != 0;
    const bool y = pb[i] != 0;
    ca += x;
    cb += y;
    both += x && y;
  }
  return {ca, cb, both};
}

void union_into(std::span<std::uint8_t> dst, std::span<const std::uint8_t> src) {
  assert(dst.size() == src.size());
  const auto n = static_cast<std::ptrdiff_t>(dst.size());
  std::uint8_t* d = dst.data();
  const std::uint8_t* s = src.data();
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < n; ++i) d[i] = (d[i] || s[i]) ? 1 : 0;
}

std::vector<std::size_t> slice_counts(std::span<const std::uint8_t> v, std::size_t slice_pixels) {
  const auto nz = static_cast<std::ptrdiff_t>(slice_pixels ? v.size() / slice_pixels : 0);
  std::vector<std::size_t> counts(static_cast<std::size_t>(nz), 0);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t z = 0; z < nz; ++z) {
    const std::uint8_t* p = v.data() + static_cast<std::size_t>(z) * slice_pixels;
    std::size_t c = 0;
    for (std::size_t i = 0; i < slice_pixels; ++i) c += p[i] != 0;
    counts[static_cast<std::size_t>(z)] = c;
  }
  return counts;
}

void dilate_chebyshev(std::span<const std::uint8_t> in, int width, int height, int radius,
                      std::span<std::uint8_t> out) {
  assert(in.size() == out.size());
  assert(in.size() == static_cast<std::size_t>(width) * height);
  if (radius <= 0) {
    serial::dilate_chebyshev(in, width, height, 0, out);
    return;
  }
  std::vector<std::uint8_t> rows(in.size());
#pragma omp parallel
  {
#pragma omp for schedule(static)
    for (int y = 0; y < height; ++y) {
      row_max(in.data() + static_cast<std::size_t>(y) * width, rows.data() + static_cast<std::size_t>(y) * width,
              width, radius);
    }
#pragma omp for schedule(static)
    for (int y = 0; y < height; ++y)
      for (int x = 0; x < width; ++x)
        out[static_cast<std::size_t>(y) * width + x] = column_max(rows.data(), width, height, x, y, radius);
  }
}

}  // namespace parallel

}  // namespace slicetrack::kernels
