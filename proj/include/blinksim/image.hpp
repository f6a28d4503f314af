#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <vector>

#include "error.hpp"

namespace blinksim {

/// Single-channel float image, row-major, pixel (x, y) centred at integer coordinates.
struct Image {
  int width = 0;
  int height = 0;
  std::vector<float> pixels;

  Image() = default;
  Image(int w, int h, float fill = 0.0f)
      : width(w), height(h), pixels(static_cast<std::size_t>(w) * static_cast<std::size_t>(h), fill) {
    detail::require(w >= 0 && h >= 0, "image dimensions must be non-negative");
  }

  std::size_t size() const noexcept { return pixels.size(); }
  bool empty() const noexcept { return pixels.empty(); }
  float& at(int x, int y) { return pixels[static_cast<std::size_t>(y) * width + x]; }
  float at(int x, int y) const { return pixels[static_cast<std::size_t>(y) * width + x]; }

  /// Bilinear sample with edge clamping.
  double sample(double x, double y) const {
    x = std::clamp(x, 0.0, static_cast<double>(width - 1));
    y = std::clamp(y, 0.0, static_cast<double>(height - 1));
    const int x0 = std::min(static_cast<int>(x), width - 1);
    const int y0 = std::min(static_cast<int>(y), height - 1);
    const int x1 = std::min(x0 + 1, width - 1);
    const int y1 = std::min(y0 + 1, height - 1);
    const double fx = x - x0;
    const double fy = y - y0;
    const double top = at(x0, y0) * (1.0 - fx) + at(x1, y0) * fx;
    const double bottom = at(x0, y1) * (1.0 - fx) + at(x1, y1) * fx;
    return top * (1.0 - fy) + bottom * fy;
  }

  friend bool operator==(const Image&, const Image&) = default;
};

}  // namespace blinksim
