#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <optional>
#include <vector>

#include "emulator.hpp"
#include "error.hpp"
#include "events.hpp"
#include "parallel.hpp"

namespace blinksim {

/*
 * Streaming event emulator. Feed log frames in time order; each push() returns
 * the events in (previous frame time, new frame time] after noise injection and
 * refractory filtering, in canonical order. The first frame only initialises the
 * per-pixel reference levels.
 *
 * Rows are split across `threads` workers. All randomness is keyed by pixel and
 * frame time, and every batch is canonically sorted, so output does not depend on
 * the thread count.
 */
class EventSimulator {
 public:
  explicit EventSimulator(EmulatorConfig cfg, unsigned threads = 1)
      : cfg_(std::move(cfg)), threads_(std::max(1u, threads)) {
    cfg_.validate();
  }

  bool initialized() const noexcept { return prev_.has_value(); }
  const PixelState& state() const { return state_; }
  const ThresholdMap& thresholds() const { return thresholds_; }
  const EmulatorConfig& config() const noexcept { return cfg_; }

  void reset(const LogFrame& first) {
    detail::require(first.width > 0 && first.height > 0 && first.width <= 65536 && first.height <= 65536,
                    "invalid frame size ", first.width, "x", first.height);
    detail::require(first.size() == static_cast<std::size_t>(first.width) * first.height,
                    "frame value count does not match its dimensions");
    for (std::size_t i = 0; i < first.size(); ++i)
      detail::require(std::isfinite(first.values[i]), "non-finite log intensity at pixel index ", i);
    const std::uint64_t threshold_seed =
        cfg_.threshold_model == ThresholdModel::SpatioTemporal
            ? hash_words(cfg_.seed, static_cast<std::uint64_t>(first.t))
            : cfg_.seed;
    thresholds_ = sample_threshold_map(first.width, first.height, cfg_.c_pos, cfg_.c_neg,
                                       cfg_.threshold_sigma, threshold_seed);
    state_ = PixelState::from_frame(first);
    refractory_.emplace(first.width, first.height, cfg_.refractory_us);
    prev_ = first;
  }

  std::vector<Event> push(const LogFrame& next) {
    if (!prev_) {
      reset(next);
      return {};
    }
    const LogFrame& prev = *prev_;
    detail::check_pair(prev, next, state_, thresholds_);
    for (std::size_t i = 0; i < next.size(); ++i)
      detail::require(std::isfinite(next.values[i]), "non-finite log intensity at pixel index ", i,
                      " of frame t=", next.t);

    const auto rows = static_cast<std::size_t>(prev.height);
    const std::size_t chunks = chunk_count(rows, threads_);
    std::vector<std::vector<Event>> signal(chunks);
    parallel_chunks(rows, threads_, [&](std::size_t c, std::size_t begin, std::size_t end) {
      detail::generate_rows(prev, next, state_, thresholds_, cfg_, static_cast<int>(begin),
                            static_cast<int>(end), signal[c]);
    });
    std::vector<Event> events = concat_sorted(signal);

    const NoiseModel noise = NoiseModel::from_config(cfg_);
    if (noise.leak_rate_hz > 0.0) {
      std::vector<float> illum(prev.size());
      for (std::size_t i = 0; i < illum.size(); ++i)
        illum[i] = static_cast<float>(std::exp(prev.values[i]));
      std::vector<std::vector<Event>> noise_chunks(chunks);
      parallel_chunks(rows, threads_, [&](std::size_t c, std::size_t begin, std::size_t end) {
        detail::noise_rows(prev.width, prev.t, next.t, noise, illum, cfg_.seed,
                           static_cast<int>(begin), static_cast<int>(end), noise_chunks[c]);
      });
      events = merge_noise(std::move(events), concat_sorted(noise_chunks));
    }

    refractory_->apply(events);
    prev_ = next;
    return events;
  }

 private:
  static std::vector<Event> concat_sorted(std::vector<std::vector<Event>>& chunks) {
    std::size_t total = 0;
    for (const auto& c : chunks) total += c.size();
    std::vector<Event> out;
    out.reserve(total);
    for (auto& c : chunks) out.insert(out.end(), c.begin(), c.end());
    std::sort(out.begin(), out.end(), canonical_less);
    return out;
  }

  // A noise event landing on the same pixel and µs as a signal event is dropped.
  static std::vector<Event> merge_noise(std::vector<Event> signal, std::vector<Event> noise) {
    auto same_slot = [&](const Event& n) {
      const Event probe{n.t, n.x, n.y, -1};
      auto it = std::lower_bound(signal.begin(), signal.end(), probe, canonical_less);
      return it != signal.end() && it->t == n.t && it->x == n.x && it->y == n.y;
    };
    std::erase_if(noise, same_slot);
    std::vector<Event> out(signal.size() + noise.size());
    std::merge(signal.begin(), signal.end(), noise.begin(), noise.end(), out.begin(), canonical_less);
    return out;
  }

  EmulatorConfig cfg_;
  unsigned threads_;
  std::optional<LogFrame> prev_;
  PixelState state_;
  ThresholdMap thresholds_;
  std::optional<RefractoryFilter> refractory_;
};

/// Runs the emulator over a whole sequence of at least two frames.
inline EventStream simulate_sequence(const FrameSequence& frames, const EmulatorConfig& cfg,
                                     unsigned threads = 1) {
  detail::require(frames.size() >= 2, "need at least 2 frames, got ", frames.size());
  for (std::size_t k = 1; k < frames.size(); ++k) {
    detail::require(frames[k].t > frames[k - 1].t, "frame timestamps must strictly increase (frame ", k, ")");
    detail::require(frames[k].width == frames[0].width && frames[k].height == frames[0].height,
                    "frame ", k, " has a different size");
  }
  EventSimulator sim(cfg, threads);
  sim.reset(frames.front());
  EventStream out{frames.front().width, frames.front().height, {}};
  for (std::size_t k = 1; k < frames.size(); ++k) {
    auto batch = sim.push(frames[k]);
    out.events.insert(out.events.end(), batch.begin(), batch.end());
  }
  return out;
}

}  // namespace blinksim
