#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "error.hpp"

namespace blinksim {

/// Value stored in u and v of pixels without flow (Middlebury "unknown" is > 1e9).
inline constexpr float kInvalidFlow = 1e10f;

/// Dense displacement field in pixels over a time interval, with validity and
/// occlusion masks (1 = set).
struct FlowField {
  int width = 0;
  int height = 0;
  std::vector<float> u;
  std::vector<float> v;
  std::vector<std::uint8_t> valid;
  std::vector<std::uint8_t> occluded;

  FlowField() = default;
  FlowField(int w, int h)
      : width(w),
        height(h),
        u(static_cast<std::size_t>(w) * h, kInvalidFlow),
        v(static_cast<std::size_t>(w) * h, kInvalidFlow),
        valid(static_cast<std::size_t>(w) * h, 0),
        occluded(static_cast<std::size_t>(w) * h, 0) {
    detail::require(w >= 0 && h >= 0, "flow dimensions must be non-negative");
  }

  std::size_t size() const noexcept { return u.size(); }
  std::size_t index(int x, int y) const { return static_cast<std::size_t>(y) * width + x; }

  void set(std::size_t i, double du, double dv) {
    u[i] = static_cast<float>(du);
    v[i] = static_cast<float>(dv);
    valid[i] = 1;
  }

  bool same_shape(const FlowField& o) const { return width == o.width && height == o.height; }

  friend bool operator==(const FlowField&, const FlowField&) = default;
};

}  // namespace blinksim
