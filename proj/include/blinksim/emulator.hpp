#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "error.hpp"
#include "events.hpp"
#include "inverse_gaussian.hpp"
#include "parallel.hpp"
#include "rng.hpp"

namespace blinksim {

inline constexpr double kMinThreshold = 0.01;
inline constexpr double kMaxThreshold = 1.0;

/// Independent Normal(nominal, sigma^2) draw per pixel and polarity, clamped to
/// [kMinThreshold, kMaxThreshold].
inline ThresholdMap sample_threshold_map(int width, int height, double c_pos_nominal,
                                         double c_neg_nominal, double sigma, std::uint64_t seed) {
  detail::require(c_pos_nominal > 0.0 && c_neg_nominal > 0.0,
                  "nominal contrast threshold must be positive");
  detail::require(sigma >= 0.0, "threshold sigma must be >= 0, got ", sigma);
  detail::require(width > 0 && height > 0, "threshold map needs a positive size");
  ThresholdMap map = ThresholdMap::uniform(width, height, c_pos_nominal, c_neg_nominal);
  for (std::size_t i = 0; i < map.c_pos.size(); ++i) {
    double cp = c_pos_nominal;
    double cn = c_neg_nominal;
    if (sigma > 0.0) {
      cp += sigma * pixel_rng(seed, StreamTag::ThresholdPos, i).normal();
      cn += sigma * pixel_rng(seed, StreamTag::ThresholdNeg, i).normal();
    }
    map.c_pos[i] = std::clamp(cp, kMinThreshold, kMaxThreshold);
    map.c_neg[i] = std::clamp(cn, kMinThreshold, kMaxThreshold);
  }
  return map;
}

inline ThresholdMap sample_threshold_map(int width, int height, double c_nominal, double sigma,
                                         std::uint64_t seed) {
  return sample_threshold_map(width, height, c_nominal, c_nominal, sigma, seed);
}

/// Refractory filter state: the last kept timestamp of every pixel.
class RefractoryFilter {
 public:
  RefractoryFilter(int width, int height, Timestamp refractory_us)
      : width_(width),
        refractory_(refractory_us),
        last_kept_(static_cast<std::size_t>(width) * height, kNever) {
    detail::require(refractory_us >= 0, "refractory period must be >= 0");
  }

  /// Filters a time-ordered batch in place. Batches must be fed in time order.
  void apply(std::vector<Event>& events) {
    if (refractory_ == 0) return;
    auto keep = events.begin();
    for (const Event& e : events) {
      Timestamp& last = last_kept_[static_cast<std::size_t>(e.y) * width_ + e.x];
      if (last != kNever && e.t < last + refractory_) continue;
      last = e.t;
      *keep++ = e;
    }
    events.erase(keep, events.end());
  }

 private:
  int width_;
  Timestamp refractory_;
  std::vector<Timestamp> last_kept_;
};

inline EventStream apply_refractory(const EventStream& stream, Timestamp refractory_us) {
  EventStream out = stream;
  RefractoryFilter(stream.width, stream.height, refractory_us).apply(out.events);
  return out;
}

struct NoiseModel {
  double leak_rate_hz = 0.0;
  double shot_noise_scale = 0.0;
  double temperature_c = 25.0;
  double ref_temperature_c = 25.0;
  double temperature_efold_c = 30.0;

  double temperature_scale() const {
    return std::exp((temperature_c - ref_temperature_c) / temperature_efold_c);
  }

  /// Events per second at a pixel of linear intensity `illum` (clamped to [0, 1]).
  double rate_hz(double illum) const {
    return leak_rate_hz * temperature_scale() *
           (1.0 + shot_noise_scale * (1.0 - std::clamp(illum, 0.0, 1.0)));
  }

  /// Noise model implied by an emulator configuration; disabled features drop out.
  static NoiseModel from_config(const EmulatorConfig& cfg) {
    NoiseModel m;
    m.leak_rate_hz = cfg.leak_rate_hz;
    m.shot_noise_scale = cfg.low_illumination_noise ? cfg.shot_noise_scale : 0.0;
    m.ref_temperature_c = cfg.ref_temperature_c;
    m.temperature_c = cfg.temperature_noise ? cfg.temperature_c : cfg.ref_temperature_c;
    m.temperature_efold_c = cfg.temperature_efold_c;
    return m;
  }
};

namespace detail {

/// Poisson noise for pixel rows [row_begin, row_end) in the window (t0, t1].
/// Per-pixel order only; duplicates within a µs are collapsed per pixel.
inline void noise_rows(int width, Timestamp t0, Timestamp t1, const NoiseModel& model,
                       std::span<const float> illum, std::uint64_t seed, int row_begin,
                       int row_end, std::vector<Event>& out) {
  if (model.leak_rate_hz <= 0.0) return;
  for (int y = row_begin; y < row_end; ++y) {
    for (int x = 0; x < width; ++x) {
      const std::size_t i = static_cast<std::size_t>(y) * width + x;
      const double rate_per_us = model.rate_hz(illum.empty() ? 1.0 : illum[i]) * 1e-6;
      if (rate_per_us <= 0.0) continue;
      CounterRng rng = pixel_rng(seed, StreamTag::Noise, i, static_cast<std::uint64_t>(t0));
      double t = static_cast<double>(t0);
      Timestamp last = kNever;
      for (;;) {
        t += rng.exponential(rate_per_us);
        if (t > static_cast<double>(t1)) break;
        const auto polarity = static_cast<std::int8_t>(rng.uniform() < 0.5 ? -1 : 1);
        const Timestamp tq = std::clamp<Timestamp>(static_cast<Timestamp>(std::ceil(t)), t0 + 1, t1);
        if (tq == last) continue;
        last = tq;
        out.push_back(Event{tq, static_cast<std::uint16_t>(x), static_cast<std::uint16_t>(y), polarity});
      }
    }
  }
}

}  // namespace detail

/*
 * Background activity as an independent Poisson process per pixel with rate
 * leak * exp((T - T_ref) / T_efold) * (1 + shot * (1 - illum)). `illum` is the
 * per-pixel linear intensity (empty means fully lit). Draws are keyed by
 * (seed, pixel, t0), so the output does not depend on `threads`.
 */
inline EventStream inject_noise_events(int width, int height, Timestamp t0, Timestamp t1,
                                       const NoiseModel& model, std::span<const float> illum,
                                       std::uint64_t seed, unsigned threads = 1) {
  detail::require(t0 < t1, "noise window must be non-empty: ", t0, " >= ", t1);
  detail::require(illum.empty() || illum.size() == static_cast<std::size_t>(width) * height,
                  "illumination map does not match sensor size");
  EventStream out{width, height, {}};
  std::vector<std::vector<Event>> chunks(chunk_count(static_cast<std::size_t>(height), threads));
  parallel_chunks(static_cast<std::size_t>(height), threads,
                  [&](std::size_t c, std::size_t begin, std::size_t end) {
                    detail::noise_rows(width, t0, t1, model, illum, seed, static_cast<int>(begin),
                                       static_cast<int>(end), chunks[c]);
                  });
  for (auto& c : chunks) out.events.insert(out.events.end(), c.begin(), c.end());
  std::sort(out.events.begin(), out.events.end(), canonical_less);
  return out;
}

/*
 * Threshold crossings of a pixel whose log intensity changes by `delta_l` over
 * [t0, t1], with the gaps between crossings drawn from IG(mu, shape) where
 * mu = (t1 - t0) * threshold / |delta_l| is the gap of the linear model. Produces
 * floor(|delta_l| / threshold) candidate crossings and discards those after t1.
 */
inline std::vector<Timestamp> brownian_crossing_times(double delta_l, double threshold,
                                                      Timestamp t0, Timestamp t1, double shape,
                                                      std::uint64_t seed) {
  detail::require(shape > 0.0, "Brownian shape must be positive, got ", shape);
  detail::require(t0 < t1, "window must be non-empty");
  std::vector<Timestamp> times;
  if (!(threshold > 0.0) || std::abs(delta_l) < threshold) return times;
  const double mu = static_cast<double>(t1 - t0) * threshold / std::abs(delta_l);
  const auto count = static_cast<long>(std::floor(std::abs(delta_l) / threshold + kCrossingTolerance));
  CounterRng rng = pixel_rng(seed, StreamTag::Brownian, 0);
  double t = static_cast<double>(t0);
  for (long k = 0; k < count; ++k) {
    t += sample_inverse_gaussian(mu, shape, rng);
    const Timestamp tq = std::llround(t);
    if (tq > t1) break;
    times.push_back(tq);
  }
  return times;
}

enum class Preset { IdealFast, LowLight, Voltmeter };

inline std::string_view preset_name(Preset p) {
  switch (p) {
    case Preset::IdealFast: return "ideal-fast";
    case Preset::LowLight: return "low-light";
    case Preset::Voltmeter: return "voltmeter";
  }
  return "unknown";
}

inline Preset parse_preset(std::string_view name) {
  if (name == "ideal-fast" || name == "IdealFast") return Preset::IdealFast;
  if (name == "low-light" || name == "LowLight") return Preset::LowLight;
  if (name == "voltmeter" || name == "Voltmeter") return Preset::Voltmeter;
  throw InvalidArgument(detail::concat("unknown emulator preset '", name,
                                       "' (expected ideal-fast, low-light or voltmeter)"));
}

/// Which noise and timing effects a configuration actually enables.
struct FeatureSet {
  ThresholdModel threshold = ThresholdModel::Spatial;
  bool spatial_variation = false;
  TimestampModel timestamps = TimestampModel::Linear;
  bool temperature_noise = false;
  bool low_illumination = false;
  bool refractory = false;

  friend bool operator==(const FeatureSet&, const FeatureSet&) = default;
};

inline FeatureSet features(const EmulatorConfig& cfg) {
  FeatureSet f;
  f.threshold = cfg.threshold_model;
  f.spatial_variation = cfg.threshold_sigma > 0.0;
  f.timestamps = cfg.timestamp_model;
  f.temperature_noise = cfg.temperature_noise && cfg.leak_rate_hz > 0.0;
  f.low_illumination = cfg.low_illumination_noise && cfg.leak_rate_hz > 0.0 && cfg.shot_noise_scale > 0.0;
  f.refractory = cfg.refractory_us > 0;
  return f;
}

inline std::string_view to_string(TimestampModel m) {
  return m == TimestampModel::Linear ? "linear" : "brownian";
}
inline std::string_view to_string(ThresholdModel m) {
  return m == ThresholdModel::Spatial ? "spatial" : "spatiotemporal";
}

inline nlohmann::json to_json(const EmulatorConfig& c) {
  return nlohmann::json{
      {"c_pos", c.c_pos},
      {"c_neg", c.c_neg},
      {"threshold_sigma", c.threshold_sigma},
      {"threshold_model", to_string(c.threshold_model)},
      {"refractory_us", c.refractory_us},
      {"timestamp_model", to_string(c.timestamp_model)},
      {"brownian_shape", c.brownian_shape},
      {"leak_rate_hz", c.leak_rate_hz},
      {"shot_noise_scale", c.shot_noise_scale},
      {"low_illumination_noise", c.low_illumination_noise},
      {"temperature_noise", c.temperature_noise},
      {"temperature_c", c.temperature_c},
      {"ref_temperature_c", c.ref_temperature_c},
      {"temperature_efold_c", c.temperature_efold_c},
      {"seed", c.seed},
      {"log_eps", c.log_eps},
  };
}

/// Applies a JSON object of field overrides. Unknown keys and wrong value types are
/// rejected with the field name.
inline void apply_overrides(EmulatorConfig& c, const nlohmann::json& overrides) {
  if (overrides.is_null()) return;
  detail::require(overrides.is_object(), "emulator overrides must be a JSON object");
  for (const auto& [key, value] : overrides.items()) {
    auto number = [&]() -> double {
      detail::require(value.is_number(), "emulator field '", key, "' must be a number");
      return value.get<double>();
    };
    auto boolean = [&]() -> bool {
      detail::require(value.is_boolean(), "emulator field '", key, "' must be a boolean");
      return value.get<bool>();
    };
    auto integer = [&]() -> std::int64_t {
      detail::require(value.is_number_integer(), "emulator field '", key, "' must be an integer");
      return value.get<std::int64_t>();
    };
    if (key == "c_pos") c.c_pos = number();
    else if (key == "c_neg") c.c_neg = number();
    else if (key == "threshold_sigma") c.threshold_sigma = number();
    else if (key == "refractory_us") c.refractory_us = integer();
    else if (key == "brownian_shape") c.brownian_shape = number();
    else if (key == "leak_rate_hz") c.leak_rate_hz = number();
    else if (key == "shot_noise_scale") c.shot_noise_scale = number();
    else if (key == "low_illumination_noise") c.low_illumination_noise = boolean();
    else if (key == "temperature_noise") c.temperature_noise = boolean();
    else if (key == "temperature_c") c.temperature_c = number();
    else if (key == "ref_temperature_c") c.ref_temperature_c = number();
    else if (key == "temperature_efold_c") c.temperature_efold_c = number();
    else if (key == "log_eps") c.log_eps = number();
    else if (key == "seed") {
      detail::require(value.is_number_unsigned() || (value.is_number_integer() && value.get<std::int64_t>() >= 0),
                      "emulator field 'seed' must be a non-negative integer");
      c.seed = value.get<std::uint64_t>();
    } else if (key == "timestamp_model") {
      detail::require(value.is_string(), "emulator field 'timestamp_model' must be a string");
      const auto s = value.get<std::string>();
      detail::require(s == "linear" || s == "brownian", "timestamp_model must be linear or brownian, got '", s, "'");
      c.timestamp_model = s == "linear" ? TimestampModel::Linear : TimestampModel::Brownian;
    } else if (key == "threshold_model") {
      detail::require(value.is_string(), "emulator field 'threshold_model' must be a string");
      const auto s = value.get<std::string>();
      detail::require(s == "spatial" || s == "spatiotemporal",
                      "threshold_model must be spatial or spatiotemporal, got '", s, "'");
      c.threshold_model = s == "spatial" ? ThresholdModel::Spatial : ThresholdModel::SpatioTemporal;
    } else {
      throw InvalidArgument(detail::concat("unknown emulator field '", key, "'"));
    }
  }
  c.validate();
}

/*
 * Emulator personalities:
 *   ideal-fast  spatial thresholds, linear timestamps, no noise, no refractory period
 *   low-light   spatial thresholds, linear timestamps, refractory period, low-illumination noise
 *   voltmeter   spatiotemporal thresholds, Brownian timestamps, temperature noise, no refractory
 */
inline EmulatorConfig make_emulator(Preset preset, const nlohmann::json& overrides = nullptr) {
  EmulatorConfig c;
  c.c_pos = 0.2;
  c.c_neg = 0.2;
  c.threshold_sigma = 0.03;
  switch (preset) {
    case Preset::IdealFast:
      break;
    case Preset::LowLight:
      c.refractory_us = 100;
      c.leak_rate_hz = 0.1;
      c.shot_noise_scale = 5.0;
      c.low_illumination_noise = true;
      break;
    case Preset::Voltmeter:
      c.threshold_model = ThresholdModel::SpatioTemporal;
      c.timestamp_model = TimestampModel::Brownian;
      c.brownian_shape = 1e4;
      c.leak_rate_hz = 0.1;
      c.temperature_noise = true;
      break;
  }
  apply_overrides(c, overrides);
  return c;
}

inline EmulatorConfig make_emulator(std::string_view preset, const nlohmann::json& overrides = nullptr) {
  return make_emulator(parse_preset(preset), overrides);
}

}  // namespace blinksim
