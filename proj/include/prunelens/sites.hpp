#pragma once

// Sliding-window geometry as contiguous output rows, so inner loops run
// without per-element bounds checks.

#include <algorithm>
#include <cstdint>

#include "prunelens/arch.hpp"

namespace prunelens::detail {

inline std::int64_t ceil_div(std::int64_t a, std::int64_t b) {
  return a >= 0 ? (a + b - 1) / b : -((-a) / b);
}

inline std::int64_t floor_div(std::int64_t a, std::int64_t b) {
  return a >= 0 ? a / b : -((-a + b - 1) / b);
}

// For kernel offset (ky, kx), calls f(out_first, in_first, count) once per
// output row that has valid sites: output units out_first .. out_first+count-1
// read input units in_first, in_first+stride, ... within one plane. Stops
// early when f returns true; the return value says whether it did.
template <typename F>
bool for_each_row(const Shape& in, const Shape& out, std::int64_t ky, std::int64_t kx,
                  std::int64_t stride, std::int64_t padding, F&& f) {
  const std::int64_t ox0 = std::max<std::int64_t>(0, ceil_div(padding - kx, stride));
  const std::int64_t ox1 = std::min<std::int64_t>(out.width - 1, floor_div(in.width - 1 + padding - kx, stride));
  if (ox1 < ox0) return false;
  const std::int64_t oy0 = std::max<std::int64_t>(0, ceil_div(padding - ky, stride));
  const std::int64_t oy1 = std::min<std::int64_t>(out.height - 1, floor_div(in.height - 1 + padding - ky, stride));
  const std::int64_t count = ox1 - ox0 + 1;
  for (std::int64_t oy = oy0; oy <= oy1; ++oy) {
    const std::int64_t iy = oy * stride - padding + ky;
    const std::int64_t ix = ox0 * stride - padding + kx;
    if (f(oy * out.width + ox0, iy * in.width + ix, count)) return true;
  }
  return false;
}

} // namespace prunelens::detail
