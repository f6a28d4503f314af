#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <span>
#include <tuple>
#include <unordered_set>
#include <vector>

#include "error.hpp"
#include "image.hpp"
#include "inverse_gaussian.hpp"
#include "rng.hpp"

namespace blinksim {

/// Microseconds.
using Timestamp = std::int64_t;

/// Marks a pixel that has not fired yet.
inline constexpr Timestamp kNever = std::numeric_limits<Timestamp>::min();

/// A crossing counts once the signal is within this distance of the level (log units),
/// so crossings that land exactly on a frame sample are never lost to rounding.
inline constexpr double kCrossingTolerance = 1e-9;

struct Event {
  Timestamp t = 0;
  std::uint16_t x = 0;
  std::uint16_t y = 0;
  std::int8_t p = 1;

  friend bool operator==(const Event&, const Event&) = default;
};

/// Canonical stream order: time, then row, column, polarity.
inline bool canonical_less(const Event& a, const Event& b) {
  return std::tie(a.t, a.y, a.x, a.p) < std::tie(b.t, b.y, b.x, b.p);
}

struct EventStream {
  int width = 0;
  int height = 0;
  std::vector<Event> events;

  std::size_t size() const noexcept { return events.size(); }

  /// Throws InvalidArgument naming the first violated invariant.
  void validate() const {
    detail::require(width > 0 && height > 0 && width <= 65536 && height <= 65536,
                    "invalid sensor size ", width, "x", height);
    std::unordered_set<std::uint32_t> run_pixels;  // pixels seen at time `prev`
    Timestamp prev = std::numeric_limits<Timestamp>::min();
    for (std::size_t i = 0; i < events.size(); ++i) {
      const Event& e = events[i];
      detail::require(e.t >= 0, "event ", i, " has negative time ", e.t);
      detail::require(e.x < width && e.y < height, "event ", i, " at (", e.x, ",", e.y,
                      ") outside ", width, "x", height);
      detail::require(e.p == 1 || e.p == -1, "event ", i, " has polarity ", int{e.p});
      detail::require(e.t >= prev, "event ", i, " breaks time order");
      if (e.t != prev) run_pixels.clear();
      detail::require(run_pixels.insert((std::uint32_t{e.y} << 16) | e.x).second, "event ", i,
                      " repeats a timestamp at pixel (", e.x, ",", e.y, ")");
      prev = e.t;
    }
  }

  friend bool operator==(const EventStream&, const EventStream&) = default;
};

/// Per-pixel natural-log intensity at one instant.
struct LogFrame {
  int width = 0;
  int height = 0;
  Timestamp t = 0;
  std::vector<double> values;

  std::size_t size() const noexcept { return values.size(); }
  double at(int x, int y) const { return values[static_cast<std::size_t>(y) * width + x]; }
};

using FrameSequence = std::vector<LogFrame>;

/// Reference level and last firing time of every pixel.
struct PixelState {
  int width = 0;
  int height = 0;
  std::vector<double> ref_level;
  std::vector<Timestamp> last_event_t;

  static PixelState from_frame(const LogFrame& frame) {
    return PixelState{frame.width, frame.height, frame.values,
                      std::vector<Timestamp>(frame.values.size(), kNever)};
  }
};

struct ThresholdMap {
  int width = 0;
  int height = 0;
  std::vector<double> c_pos;
  std::vector<double> c_neg;

  static ThresholdMap uniform(int width, int height, double c_pos, double c_neg) {
    const auto n = static_cast<std::size_t>(width) * height;
    return ThresholdMap{width, height, std::vector<double>(n, c_pos), std::vector<double>(n, c_neg)};
  }
};

enum class TimestampModel { Linear, Brownian };
enum class ThresholdModel { Spatial, SpatioTemporal };

struct EmulatorConfig {
  double c_pos = 0.2;
  double c_neg = 0.2;
  double threshold_sigma = 0.0;
  ThresholdModel threshold_model = ThresholdModel::Spatial;
  Timestamp refractory_us = 0;
  TimestampModel timestamp_model = TimestampModel::Linear;
  double brownian_shape = 1e4;  // µs
  double leak_rate_hz = 0.0;
  double shot_noise_scale = 0.0;
  bool low_illumination_noise = false;
  bool temperature_noise = false;
  double temperature_c = 25.0;
  double ref_temperature_c = 25.0;
  double temperature_efold_c = 30.0;
  std::uint64_t seed = 0;
  double log_eps = 1e-3;

  void validate() const {
    detail::require(c_pos > 0.0 && c_neg > 0.0, "contrast thresholds must be positive");
    detail::require(threshold_sigma >= 0.0, "threshold_sigma must be >= 0");
    detail::require(refractory_us >= 0, "refractory_us must be >= 0");
    detail::require(brownian_shape > 0.0, "brownian_shape must be positive");
    detail::require(leak_rate_hz >= 0.0 && shot_noise_scale >= 0.0, "noise rates must be >= 0");
    detail::require(temperature_efold_c > 0.0, "temperature_efold_c must be positive");
    detail::require(log_eps > 0.0, "log_eps must be positive");
  }

  friend bool operator==(const EmulatorConfig&, const EmulatorConfig&) = default;
};

/// ln(max(intensity, log_eps)) per pixel.
inline LogFrame log_transform(const Image& frame, double log_eps, Timestamp t = 0) {
  detail::require(log_eps > 0.0, "log_eps must be positive, got ", log_eps);
  LogFrame out{frame.width, frame.height, t, std::vector<double>(frame.size())};
  for (int y = 0; y < frame.height; ++y) {
    for (int x = 0; x < frame.width; ++x) {
      const double v = frame.at(x, y);
      detail::require(std::isfinite(v), "non-finite intensity ", v, " at pixel (", x, ",", y, ")");
      out.values[static_cast<std::size_t>(y) * frame.width + x] = std::log(std::max(v, log_eps));
    }
  }
  return out;
}

namespace detail {

inline void check_pair(const LogFrame& prev, const LogFrame& next, const PixelState& state,
                       const ThresholdMap& thresholds) {
  require(prev.width == next.width && prev.height == next.height, "frame size mismatch: ",
          prev.width, "x", prev.height, " vs ", next.width, "x", next.height);
  require(prev.size() == static_cast<std::size_t>(prev.width) * prev.height &&
              next.size() == prev.size(),
          "frame value count does not match its dimensions");
  require(state.width == prev.width && state.height == prev.height &&
              state.ref_level.size() == prev.size() && state.last_event_t.size() == prev.size(),
          "pixel state does not match frame size");
  require(thresholds.width == prev.width && thresholds.height == prev.height &&
              thresholds.c_pos.size() == prev.size() && thresholds.c_neg.size() == prev.size(),
          "threshold map does not match frame size");
  require(prev.t < next.t, "frame times must increase: ", prev.t, " >= ", next.t);
  for (std::size_t i = 0; i < thresholds.c_pos.size(); ++i)
    require(thresholds.c_pos[i] > 0.0 && thresholds.c_neg[i] > 0.0, "non-positive threshold at pixel ", i);
}

/*
 * Emits the crossings of one pixel between two frames. Log intensity is linear in
 * time between the samples. The reference level moves by exactly one threshold per
 * crossing. Times are rounded to whole µs inside (t0, t1] and kept strictly
 * increasing per pixel; a crossing with no free µs left in the window is dropped
 * while the reference level still advances.
 */
inline void emit_pixel(double l0, double l1, double& ref, Timestamp& last, double c_pos,
                       double c_neg, Timestamp t0, Timestamp t1, std::uint16_t x,
                       std::uint16_t y, const EmulatorConfig& cfg, std::uint64_t pixel,
                       std::vector<Event>& out) {
  const double dl = l1 - l0;
  if (dl == 0.0) return;
  require(std::isfinite(dl) && std::isfinite(ref), "non-finite log intensity at pixel ", pixel);
  const std::int8_t polarity = dl > 0.0 ? 1 : -1;
  const double step = dl > 0.0 ? c_pos : -c_neg;
  const double span_us = static_cast<double>(t1 - t0);
  const bool brownian = cfg.timestamp_model == TimestampModel::Brownian;

  double linear_prev = static_cast<double>(t0);
  double brownian_time = static_cast<double>(t0);
  CounterRng rng(0);
  if (brownian) rng = pixel_rng(cfg.seed, StreamTag::Brownian, pixel, static_cast<std::uint64_t>(t0));

  while (polarity * (l1 - (ref + step)) >= -kCrossingTolerance) {
    ref += step;
    const double frac = std::clamp((ref - l0) / dl, 0.0, 1.0);
    const double linear_time = static_cast<double>(t0) + frac * span_us;
    double time = linear_time;
    if (brownian) {
      brownian_time += sample_inverse_gaussian(linear_time - linear_prev, cfg.brownian_shape, rng);
      linear_prev = linear_time;
      if (brownian_time > static_cast<double>(t1) + 0.5) continue;
      time = brownian_time;
    }
    Timestamp tq = std::clamp<Timestamp>(std::llround(time), t0 + 1, t1);
    if (last != kNever && tq <= last) tq = last + 1;
    if (tq > t1) continue;
    last = tq;
    out.push_back(Event{tq, x, y, polarity});
  }
}

/// Signal events for rows [row_begin, row_end), per-pixel time order, not globally sorted.
inline void generate_rows(const LogFrame& prev, const LogFrame& next, PixelState& state,
                          const ThresholdMap& thresholds, const EmulatorConfig& cfg,
                          int row_begin, int row_end, std::vector<Event>& out) {
  const int w = prev.width;
  for (int y = row_begin; y < row_end; ++y) {
    for (int x = 0; x < w; ++x) {
      const std::size_t i = static_cast<std::size_t>(y) * w + x;
      emit_pixel(prev.values[i], next.values[i], state.ref_level[i], state.last_event_t[i],
                 thresholds.c_pos[i], thresholds.c_neg[i], prev.t, next.t,
                 static_cast<std::uint16_t>(x), static_cast<std::uint16_t>(y), cfg, i, out);
    }
  }
}

}  // namespace detail

/// Ideal events between two log frames with per-pixel thresholds. `state` is advanced
/// in place; the result is in canonical order.
inline std::vector<Event> generate_events_pair(const LogFrame& prev, const LogFrame& next,
                                               PixelState& state, const ThresholdMap& thresholds,
                                               const EmulatorConfig& cfg) {
  detail::check_pair(prev, next, state, thresholds);
  std::vector<Event> events;
  detail::generate_rows(prev, next, state, thresholds, cfg, 0, prev.height, events);
  std::sort(events.begin(), events.end(), canonical_less);
  return events;
}

/// Same, with the uniform thresholds cfg.c_pos / cfg.c_neg.
inline std::vector<Event> generate_events_pair(const LogFrame& prev, const LogFrame& next,
                                               PixelState& state, const EmulatorConfig& cfg) {
  return generate_events_pair(prev, next, state,
                              ThresholdMap::uniform(prev.width, prev.height, cfg.c_pos, cfg.c_neg),
                              cfg);
}

}  // namespace blinksim
