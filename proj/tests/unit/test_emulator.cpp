#include <gtest/gtest.h>

#include <cmath>
#include <map>

#include "blinksim/emulator.hpp"
#include "blinksim/simulator.hpp"

using namespace blinksim;

TEST(ThresholdMap, ZeroSigmaIsNominal) {
  const auto m = sample_threshold_map(7, 5, 0.3, 0.0, 1);
  for (std::size_t i = 0; i < m.c_pos.size(); ++i) {
    EXPECT_EQ(m.c_pos[i], 0.3);
    EXPECT_EQ(m.c_neg[i], 0.3);
  }
}

TEST(ThresholdMap, MeanOfMillionSamples) {
  const auto m = sample_threshold_map(1000, 1000, 0.215, 0.03, 12);
  double s = 0.0, s2 = 0.0;
  for (double c : m.c_pos) {
    s += c;
    s2 += c * c;
  }
  const double n = static_cast<double>(m.c_pos.size());
  EXPECT_NEAR(s / n, 0.215, 0.001);
  EXPECT_NEAR(std::sqrt(s2 / n - (s / n) * (s / n)), 0.03, 0.001);
}

TEST(ThresholdMap, ClampedForHugeSigma) {
  const auto m = sample_threshold_map(100, 100, 0.2, 10.0, 3);
  bool hit_low = false, hit_high = false;
  for (double c : m.c_neg) {
    EXPECT_GE(c, kMinThreshold);
    EXPECT_LE(c, kMaxThreshold);
    hit_low |= c == kMinThreshold;
    hit_high |= c == kMaxThreshold;
  }
  EXPECT_TRUE(hit_low && hit_high);
}

TEST(ThresholdMap, SeedDeterminesMap) {
  EXPECT_EQ(sample_threshold_map(9, 9, 0.2, 0.05, 4).c_pos, sample_threshold_map(9, 9, 0.2, 0.05, 4).c_pos);
  EXPECT_NE(sample_threshold_map(9, 9, 0.2, 0.05, 4).c_pos, sample_threshold_map(9, 9, 0.2, 0.05, 5).c_pos);
  EXPECT_THROW(sample_threshold_map(9, 9, 0.2, -1.0, 4), InvalidArgument);
}

TEST(Refractory, ZeroIsIdentity) {
  EventStream s{4, 4, {{10, 0, 0, 1}, {11, 0, 0, 1}, {12, 1, 0, -1}}};
  EXPECT_EQ(apply_refractory(s, 0).events.size(), 3u);
}

TEST(Refractory, SinglePixelScan) {
  EventStream s{2, 2, {{100, 0, 0, 1}, {150, 0, 0, 1}, {300, 0, 0, -1}}};
  const auto out = apply_refractory(s, 100);
  ASSERT_EQ(out.events.size(), 2u);
  EXPECT_EQ(out.events[0].t, 100);
  EXPECT_EQ(out.events[1].t, 300);
}

TEST(Refractory, TwoPixels) {
  EventStream s{2, 1, {{10, 0, 0, 1}, {20, 1, 0, 1}, {60, 0, 0, 1}, {70, 1, 0, -1}}};
  const auto out = apply_refractory(s, 60);
  ASSERT_EQ(out.events.size(), 2u);
  EXPECT_NE(out.events[0].x, out.events[1].x);
}

TEST(Refractory, GapAtExactlyPeriodKept) {
  EventStream s{1, 1, {{0, 0, 0, 1}, {100, 0, 0, 1}, {199, 0, 0, 1}}};
  EXPECT_EQ(apply_refractory(s, 100).events.size(), 2u);
}

TEST(Noise, ZeroLeakIsEmpty) {
  NoiseModel m;
  EXPECT_TRUE(inject_noise_events(10, 10, 0, 1'000'000, m, {}, 1).events.empty());
}

TEST(Noise, PoissonCountWithinThreeSigma) {
  NoiseModel m;
  m.leak_rate_hz = 10.0;
  const auto s = inject_noise_events(100, 100, 0, 1'000'000, m, {}, 21, 4);
  const double expected = 1e5;
  EXPECT_NEAR(static_cast<double>(s.events.size()), expected, 3.0 * std::sqrt(expected));
  EXPECT_NO_THROW(s.validate());
}

TEST(Noise, EFoldScalesRate) {
  NoiseModel m;
  m.leak_rate_hz = 10.0;
  m.temperature_c = m.ref_temperature_c + m.temperature_efold_c;
  EXPECT_NEAR(m.temperature_scale(), std::exp(1.0), 1e-12);
  NoiseModel ref = m;
  ref.temperature_c = ref.ref_temperature_c;
  const double hot = static_cast<double>(inject_noise_events(100, 100, 0, 1'000'000, m, {}, 8).events.size());
  const double cold = static_cast<double>(inject_noise_events(100, 100, 0, 1'000'000, ref, {}, 9).events.size());
  EXPECT_NEAR(hot / cold / std::exp(1.0), 1.0, 0.05);
}

TEST(Noise, DarkPixelsNoisier) {
  NoiseModel m;
  m.leak_rate_hz = 5.0;
  m.shot_noise_scale = 4.0;
  EXPECT_DOUBLE_EQ(m.rate_hz(1.0), 5.0);
  EXPECT_DOUBLE_EQ(m.rate_hz(0.0), 25.0);
  std::vector<float> illum(50 * 50, 0.0f);
  for (std::size_t i = 0; i < illum.size() / 2; ++i) illum[i] = 1.0f;
  const auto s = inject_noise_events(50, 50, 0, 1'000'000, m, illum, 2);
  std::size_t lit = 0, dark = 0;
  for (const auto& e : s.events) (e.y < 25 ? lit : dark)++;
  EXPECT_GT(dark, 4 * lit);
}

TEST(Noise, ThreadInvariant) {
  NoiseModel m;
  m.leak_rate_hz = 50.0;
  const auto a = inject_noise_events(33, 17, 100, 200'000, m, {}, 6, 1);
  const auto b = inject_noise_events(33, 17, 100, 200'000, m, {}, 6, 7);
  ASSERT_EQ(a.events.size(), b.events.size());
  for (std::size_t i = 0; i < a.events.size(); ++i) {
    EXPECT_EQ(a.events[i].t, b.events[i].t);
    EXPECT_EQ(a.events[i].x, b.events[i].x);
    EXPECT_EQ(a.events[i].p, b.events[i].p);
  }
}

TEST(Brownian, BelowThresholdEmpty) {
  EXPECT_TRUE(brownian_crossing_times(0.1, 0.25, 0, 1000, 100.0, 1).empty());
}

// Crossings past the window are discarded, so the check uses shapes at which
// a first gap beyond 2 * mu is negligible.
TEST(Brownian, FirstCrossingMean) {
  for (double shape : {1e4, 5e4, 5e6}) {
    double sum = 0.0;
    int n = 0;
    for (std::uint64_t seed = 0; seed < 100000; ++seed) {
      const auto t = brownian_crossing_times(0.5, 0.25, 0, 1000, shape, seed);
      if (t.empty()) continue;
      sum += static_cast<double>(t.front());
      ++n;
    }
    EXPECT_GT(n, 99000) << shape;
    EXPECT_NEAR(sum / n / 500.0, 1.0, 0.02) << shape;
  }
}

TEST(Brownian, RejectsBadShape) {
  EXPECT_THROW(brownian_crossing_times(0.5, 0.25, 0, 1000, 0.0, 1), InvalidArgument);
}

TEST(Brownian, LargeShapeMatchesLinear) {
  const double mu = 250.0;
  const auto t = brownian_crossing_times(1.0, 0.25, 0, 1000, 1e9 * mu, 4);
  ASSERT_EQ(t.size(), 4u);
  for (int k = 0; k < 4; ++k) EXPECT_LE(std::abs(static_cast<double>(t[k]) - 250.0 * (k + 1)), 1.0);
}

TEST(Presets, Contents) {
  const auto ideal = make_emulator(Preset::IdealFast);
  EXPECT_EQ(ideal.refractory_us, 0);
  EXPECT_EQ(ideal.leak_rate_hz, 0.0);
  EXPECT_EQ(ideal.timestamp_model, TimestampModel::Linear);

  const auto low = make_emulator(Preset::LowLight);
  EXPECT_GT(low.refractory_us, 0);
  EXPECT_TRUE(features(low).low_illumination);

  const auto volt = make_emulator(Preset::Voltmeter);
  EXPECT_EQ(volt.timestamp_model, TimestampModel::Brownian);
  EXPECT_TRUE(features(volt).temperature_noise);
}

TEST(Presets, OverridesAndNames) {
  const auto c = make_emulator("low-light", {{"refractory_us", 250}, {"seed", 9}});
  EXPECT_EQ(c.refractory_us, 250);
  EXPECT_EQ(c.seed, 9u);
  EXPECT_EQ(make_emulator("Voltmeter"), make_emulator(Preset::Voltmeter));
  EXPECT_THROW(make_emulator("fast"), InvalidArgument);
  EXPECT_THROW(make_emulator(Preset::IdealFast, {{"no_such_field", 1}}), InvalidArgument);
  EXPECT_THROW(make_emulator(Preset::IdealFast, {{"c_pos", "big"}}), InvalidArgument);
  EXPECT_THROW(make_emulator(Preset::IdealFast, {{"c_pos", -1.0}}), InvalidArgument);
  EXPECT_EQ(to_json(c)["refractory_us"], 250);
}

TEST(Simulator, StaticSceneNoiseOnly) {
  auto cfg = make_emulator(Preset::LowLight, {{"seed", 2}, {"leak_rate_hz", 20.0}});
  FrameSequence frames;
  for (int k = 0; k < 11; ++k) frames.push_back(LogFrame{40, 30, k * 100'000, std::vector<double>(1200, -1.0)});
  const auto s = simulate_sequence(frames, cfg);
  EXPECT_GT(s.events.size(), 0u);
  EXPECT_NO_THROW(s.validate());
  std::map<std::pair<int, int>, Timestamp> last;
  for (const auto& e : s.events) {
    auto [it, fresh] = last.try_emplace({e.x, e.y}, e.t);
    if (!fresh) {
      EXPECT_GE(e.t - it->second, cfg.refractory_us);
      it->second = e.t;
    }
  }
  EXPECT_TRUE(simulate_sequence(frames, make_emulator(Preset::IdealFast)).events.empty());
}

TEST(Simulator, SpatioTemporalResamplesPerSequence) {
  auto cfg = make_emulator(Preset::Voltmeter, {{"seed", 1}});
  EventSimulator a(cfg), b(cfg);
  a.reset(LogFrame{8, 8, 0, std::vector<double>(64, 0.0)});
  b.reset(LogFrame{8, 8, 5000, std::vector<double>(64, 0.0)});
  EXPECT_NE(a.thresholds().c_pos, b.thresholds().c_pos);
  cfg.threshold_model = ThresholdModel::Spatial;
  EventSimulator c(cfg), d(cfg);
  c.reset(LogFrame{8, 8, 0, std::vector<double>(64, 0.0)});
  d.reset(LogFrame{8, 8, 5000, std::vector<double>(64, 0.0)});
  EXPECT_EQ(c.thresholds().c_pos, d.thresholds().c_pos);
}
