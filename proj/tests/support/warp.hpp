// Photometric check of flow ground truth shared by unit and acceptance tests.
#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

#include "blinksim/scene.hpp"

namespace oracle {

// Mean |I1(p + f) - I0(p)| over valid, non-occluded pixels at least 2 px away from
// any layer boundary at both times.
inline double warp_error(const blinksim::SpriteScene& scene, double t0, double t1, std::size_t* used = nullptr) {
  const auto i0 = blinksim::render_frame(scene, t0), i1 = blinksim::render_frame(scene, t1);
  const auto flow = blinksim::compute_flow_gt(scene, t0, t1);
  const auto id0 = blinksim::layer_id_map(scene, t0), id1 = blinksim::layer_id_map(scene, t1);
  const int w = scene.width, h = scene.height;
  auto interior = [&](const std::vector<int>& ids, int x, int y) {
    const int k = ids[static_cast<std::size_t>(y) * w + x];
    for (int dy = -2; dy <= 2; ++dy)
      for (int dx = -2; dx <= 2; ++dx) {
        const int xx = x + dx, yy = y + dy;
        if (xx < 0 || yy < 0 || xx >= w || yy >= h) return false;
        if (ids[static_cast<std::size_t>(yy) * w + xx] != k) return false;
      }
    return true;
  };
  double sum = 0.0;
  std::size_t n = 0;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const std::size_t i = flow.index(x, y);
      if (!flow.valid[i] || flow.occluded[i] || !interior(id0, x, y)) continue;
      const double x1 = x + flow.u[i], y1 = y + flow.v[i];
      const int rx = static_cast<int>(std::lround(x1)), ry = static_cast<int>(std::lround(y1));
      if (rx < 0 || ry < 0 || rx >= w || ry >= h || !interior(id1, rx, ry)) continue;
      sum += std::abs(i1.sample(x1, y1) - i0.at(x, y));
      ++n;
    }
  }
  if (used) *used = n;
  return n ? sum / static_cast<double>(n) : 0.0;
}

}  // namespace oracle
