#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <ostream>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "emulator.hpp"
#include "error.hpp"
#include "events.hpp"
#include "io.hpp"
#include "manifest.hpp"
#include "parallel.hpp"
#include "scene.hpp"
#include "simulator.hpp"
#include "trajectory.hpp"

namespace blinksim {

enum class SamplingStrategy { Uniform, Adaptive };

/// Everything `generate` needs. Mirrors docs/run_config.schema.json.
struct RunConfig {
  std::uint64_t seed = 0;
  std::filesystem::path output = "dataset";
  std::filesystem::path texture_pool = "textures";
  SceneParams scene;
  SamplingStrategy sampling = SamplingStrategy::Uniform;
  std::size_t frames = 101;
  double max_disp_px = 1.0;
  Timestamp flow_interval_us = 10000;
  std::string preset = "ideal-fast";
  nlohmann::json emulator_overrides = nlohmann::json::object();

  /// Emulator configuration with the run seed applied unless the overrides set one.
  EmulatorConfig emulator() const {
    EmulatorConfig c = make_emulator(preset, emulator_overrides);
    if (!emulator_overrides.contains("seed")) c.seed = hash_words(seed, 0xE5u);
    return c;
  }

  /// Configuration echo for meta.json; the output location is left out so that
  /// identical runs into different directories produce identical files.
  nlohmann::json to_json() const {
    nlohmann::json emulator = emulator_overrides;
    emulator["preset"] = preset;
    nlohmann::json sampling_j = sampling == SamplingStrategy::Uniform
                                    ? nlohmann::json{{"strategy", "uniform"}, {"frames", frames}}
                                    : nlohmann::json{{"strategy", "adaptive"}, {"max_disp_px", max_disp_px}};
    return {{"seed", seed},
            {"texture_pool", texture_pool.generic_string()},
            {"scene",
             {{"width", scene.width},
              {"height", scene.height},
              {"n_sprites", scene.n_sprites},
              {"duration_us", scene.duration_us},
              {"n_control_points", scene.n_control_points},
              {"xy_extent", scene.xy_extent},
              {"depth_min", scene.depth_min},
              {"depth_max", scene.depth_max},
              {"depth_ref", scene.depth_ref},
              {"rotation_scale", scene.rotation_scale},
              {"sprite_min_px", scene.sprite_min_px},
              {"sprite_max_px", scene.sprite_max_px},
              {"background_motion", scene.background_motion},
              {"background_rotation_scale", scene.background_rotation_scale},
              {"cut_collisions", scene.cut_collisions},
              {"collision_dt_us", scene.collision_dt_us}}},
            {"sampling", sampling_j},
            {"flow", {{"interval_us", flow_interval_us}}},
            {"emulator", emulator}};
  }

  /*
   * Validates `j` against the run-config schema and builds the config. Every
   * problem found is listed in the thrown InvalidArgument.
   */
  static RunConfig from_json(const nlohmann::json& j) {
    std::vector<std::string> problems;
    RunConfig c;
    auto fail = [&](std::string msg) { problems.push_back(std::move(msg)); };
    auto check_keys = [&](const nlohmann::json& obj, const std::string& where, std::set<std::string> allowed) {
      for (const auto& [k, v] : obj.items())
        if (!allowed.count(k)) fail("unknown key '" + where + k + "'");
    };
    auto get_int = [&](const nlohmann::json& obj, const std::string& where, const char* key, auto& dst, long long min) {
      if (!obj.contains(key)) return;
      const auto& v = obj[key];
      if (!v.is_number_integer() || v.get<long long>() < min)
        fail(where + key + " must be an integer >= " + std::to_string(min));
      else dst = static_cast<std::remove_reference_t<decltype(dst)>>(v.get<long long>());
    };
    auto get_num = [&](const nlohmann::json& obj, const std::string& where, const char* key, double& dst) {
      if (!obj.contains(key)) return;
      if (!obj[key].is_number()) fail(where + key + " must be a number");
      else dst = obj[key].get<double>();
    };
    auto get_str = [&](const nlohmann::json& obj, const std::string& where, const char* key, auto& dst) {
      if (!obj.contains(key)) return;
      if (!obj[key].is_string()) fail(where + key + " must be a string");
      else dst = obj[key].get<std::string>();
    };

    if (!j.is_object()) throw InvalidArgument("run config must be a JSON object");
    check_keys(j, "", {"seed", "output", "texture_pool", "scene", "sampling", "flow", "emulator"});
    if (j.contains("seed")) {
      if (!j["seed"].is_number_unsigned() && !(j["seed"].is_number_integer() && j["seed"].get<long long>() >= 0))
        fail("seed must be a non-negative integer");
      else c.seed = j["seed"].get<std::uint64_t>();
    }
    get_str(j, "", "output", c.output);
    get_str(j, "", "texture_pool", c.texture_pool);

    if (j.contains("scene")) {
      const auto& s = j["scene"];
      if (!s.is_object()) {
        fail("scene must be an object");
      } else {
        check_keys(s, "scene.", {"width", "height", "n_sprites", "duration_us", "n_control_points", "xy_extent",
                                 "depth_min", "depth_max", "depth_ref", "rotation_scale", "sprite_min_px",
                                 "sprite_max_px", "background_motion", "background_rotation_scale",
                                 "cut_collisions", "collision_dt_us"});
        get_int(s, "scene.", "width", c.scene.width, 1);
        get_int(s, "scene.", "height", c.scene.height, 1);
        get_int(s, "scene.", "n_sprites", c.scene.n_sprites, 0);
        get_int(s, "scene.", "duration_us", c.scene.duration_us, 1);
        get_int(s, "scene.", "n_control_points", c.scene.n_control_points, 2);
        get_num(s, "scene.", "xy_extent", c.scene.xy_extent);
        get_num(s, "scene.", "depth_min", c.scene.depth_min);
        get_num(s, "scene.", "depth_max", c.scene.depth_max);
        get_num(s, "scene.", "depth_ref", c.scene.depth_ref);
        get_num(s, "scene.", "rotation_scale", c.scene.rotation_scale);
        get_num(s, "scene.", "sprite_min_px", c.scene.sprite_min_px);
        get_num(s, "scene.", "sprite_max_px", c.scene.sprite_max_px);
        get_num(s, "scene.", "background_motion", c.scene.background_motion);
        get_num(s, "scene.", "background_rotation_scale", c.scene.background_rotation_scale);
        get_int(s, "scene.", "collision_dt_us", c.scene.collision_dt_us, 1);
        if (s.contains("cut_collisions")) {
          if (!s["cut_collisions"].is_boolean()) fail("scene.cut_collisions must be a boolean");
          else c.scene.cut_collisions = s["cut_collisions"].get<bool>();
        }
      }
    }

    if (j.contains("sampling")) {
      const auto& s = j["sampling"];
      if (!s.is_object() || !s.contains("strategy") || !s["strategy"].is_string()) {
        fail("sampling must be an object with a 'strategy' string");
      } else if (s["strategy"] == "uniform") {
        check_keys(s, "sampling.", {"strategy", "frames"});
        c.sampling = SamplingStrategy::Uniform;
        get_int(s, "sampling.", "frames", c.frames, 2);
      } else if (s["strategy"] == "adaptive") {
        check_keys(s, "sampling.", {"strategy", "max_disp_px"});
        c.sampling = SamplingStrategy::Adaptive;
        get_num(s, "sampling.", "max_disp_px", c.max_disp_px);
        if (!(c.max_disp_px > 0.0)) fail("sampling.max_disp_px must be positive");
      } else {
        fail("sampling.strategy must be 'uniform' or 'adaptive'");
      }
    }

    if (j.contains("flow")) {
      const auto& f = j["flow"];
      if (!f.is_object()) fail("flow must be an object");
      else {
        check_keys(f, "flow.", {"interval_us"});
        get_int(f, "flow.", "interval_us", c.flow_interval_us, 1);
      }
    }

    if (j.contains("emulator")) {
      const auto& e = j["emulator"];
      if (!e.is_object()) {
        fail("emulator must be an object");
      } else {
        c.emulator_overrides = e;
        if (e.contains("preset")) {
          if (!e["preset"].is_string()) fail("emulator.preset must be a string");
          else c.preset = e["preset"].get<std::string>();
          c.emulator_overrides.erase("preset");
        }
      }
    }

    if (problems.empty()) {
      try {
        c.scene.validate();
        if (c.flow_interval_us > c.scene.duration_us) fail("flow.interval_us exceeds scene.duration_us");
        (void)c.emulator();
      } catch (const InvalidArgument& e) {
        fail(e.what());
      }
    }
    if (!problems.empty()) {
      std::string msg = "invalid run config:";
      for (const auto& p : problems) msg += "\n  - " + p;
      throw InvalidArgument(msg);
    }
    return c;
  }

  static RunConfig load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open config " + path.string());
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
      throw InvalidArgument("config " + path.string() + " is not valid JSON: " + e.what());
    }
    return from_json(j);
  }
};

/// Summary of a `generate` run.
struct GenerateResult {
  std::size_t frames = 0;
  std::size_t flows = 0;
  std::size_t events = 0;
  std::string manifest;
};

namespace detail {

inline void write_json(const std::filesystem::path& path, const nlohmann::json& j) {
  const std::string text = j.dump(2) + "\n";
  write_file_bytes(path, std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

}  // namespace detail

/*
 * Builds the scene, renders the dense frame pass, emulates events, renders the
 * sparse flow pass, and writes the dataset layout. Work goes to "<output>.partial"
 * and is moved into place only after validation; the staging directory is removed
 * on failure. Output bytes do not depend on `threads`.
 */
inline GenerateResult generate_dataset(const RunConfig& cfg, unsigned threads = 1, std::ostream* log = nullptr) {
  namespace fs = std::filesystem;
  threads = std::max(1u, threads);
  const fs::path stage = fs::path(cfg.output.string() + ".partial");
  fs::remove_all(stage);
  try {
    const DatasetLayout layout{stage};
    fs::create_directories(layout.frames_dir());
    fs::create_directories(layout.flow_dir());

    const SpriteScene scene = build_scene(cfg.scene, cfg.texture_pool, cfg.seed);
    detail::write_json(layout.scene_json(), scene_to_json(scene));

    const std::vector<Timestamp> stamps =
        cfg.sampling == SamplingStrategy::Uniform
            ? uniform_timestamps(0, cfg.scene.duration_us, cfg.frames)
            : adaptive_timestamps(scene, 0, cfg.scene.duration_us, cfg.max_disp_px);
    if (log) *log << "generate: " << stamps.size() << " frames, " << scene.layer_count() << " layers\n";

    const EmulatorConfig emu = cfg.emulator();
    EventSimulator sim(emu, threads);
    EventStream stream{scene.width, scene.height, {}};
    const std::size_t batch = 2 * static_cast<std::size_t>(threads);
    for (std::size_t first = 0; first < stamps.size(); first += batch) {
      const std::size_t count = std::min(batch, stamps.size() - first);
      std::vector<Image> frames(count);
      parallel_chunks(count, threads, [&](std::size_t, std::size_t b, std::size_t e) {
        for (std::size_t i = b; i < e; ++i) frames[i] = render_frame(scene, static_cast<double>(stamps[first + i]));
      });
      for (std::size_t i = 0; i < count; ++i) {
        write_pfm(layout.frame(first + i), frames[i]);
        auto events = sim.push(log_transform(frames[i], emu.log_eps, stamps[first + i]));
        stream.events.insert(stream.events.end(), events.begin(), events.end());
      }
    }
    write_events(layout.events_file(), stream);
    if (log) *log << "generate: " << stream.size() << " events\n";

    std::vector<std::pair<Timestamp, Timestamp>> intervals;
    for (Timestamp t = 0; t + cfg.flow_interval_us <= cfg.scene.duration_us; t += cfg.flow_interval_us)
      intervals.emplace_back(t, t + cfg.flow_interval_us);
    parallel_chunks(intervals.size(), threads, [&](std::size_t, std::size_t b, std::size_t e) {
      for (std::size_t k = b; k < e; ++k) {
        const FlowField flow = compute_flow_gt(scene, static_cast<double>(intervals[k].first),
                                               static_cast<double>(intervals[k].second));
        write_flo(layout.flow(k), flow);
        write_file_bytes(layout.occlusion(k), encode_mask_pgm(flow.width, flow.height, flow.occluded));
      }
    });

    nlohmann::json meta{{"width", scene.width},
                        {"height", scene.height},
                        {"frame_timestamps_us", stamps},
                        {"flow_intervals_us", intervals},
                        {"event_count", stream.size()},
                        {"preset", cfg.preset},
                        {"emulator", to_json(emu)},
                        {"config", cfg.to_json()}};
    detail::write_json(layout.meta_json(), meta);
    layout.validate();

    GenerateResult result{stamps.size(), intervals.size(), stream.size(), sha256_manifest(stage)};
    write_file_bytes(layout.manifest(),
                     std::span(reinterpret_cast<const std::uint8_t*>(result.manifest.data()), result.manifest.size()));
    fs::remove_all(cfg.output);
    fs::rename(stage, cfg.output);
    return result;
  } catch (...) {
    std::error_code ec;
    fs::remove_all(stage, ec);
    throw;
  }
}

/// Log frames of a directory of PFM frames with timestamps from meta.json
/// (looked up in the directory, then in its parent).
inline FrameSequence load_frame_directory(const std::filesystem::path& frames_dir, double log_eps) {
  namespace fs = std::filesystem;
  detail::require(fs::is_directory(frames_dir), "frames directory ", frames_dir.string(), " does not exist");
  fs::path meta_path = frames_dir / "meta.json";
  if (!fs::exists(meta_path)) meta_path = frames_dir.parent_path() / "meta.json";
  if (!fs::exists(meta_path))
    throw InvalidArgument("no meta.json with frame timestamps next to " + frames_dir.string());
  std::ifstream in(meta_path);
  const auto meta = nlohmann::json::parse(in);
  detail::require(meta.contains("frame_timestamps_us"), meta_path.string(), " lacks frame_timestamps_us");
  const auto stamps = meta["frame_timestamps_us"].get<std::vector<Timestamp>>();

  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(frames_dir))
    if (e.is_regular_file() && e.path().extension() == ".pfm") files.push_back(e.path());
  std::sort(files.begin(), files.end());
  detail::require(files.size() == stamps.size(), "found ", files.size(), " PFM frames but meta lists ", stamps.size(),
                  " timestamps");
  FrameSequence frames;
  frames.reserve(files.size());
  for (std::size_t k = 0; k < files.size(); ++k) frames.push_back(log_transform(read_pfm(files[k]), log_eps, stamps[k]));
  return frames;
}

struct SimulateResult {
  std::size_t events = 0;
  Timestamp t0 = 0;
  Timestamp t1 = 0;

  /// Mean event rate over the frame span, events per second.
  double rate_hz() const { return t1 > t0 ? static_cast<double>(events) * 1e6 / static_cast<double>(t1 - t0) : 0.0; }

  nlohmann::json to_json() const {
    return {{"events", events}, {"t0_us", t0}, {"t1_us", t1}, {"rate_hz", rate_hz()}};
  }
};

/*
 * Emulates events for existing frames. Writes out_dir/events.evt1 and
 * out_dir/meta.json (preset, overrides and the resolved emulator config).
 */
inline SimulateResult simulate_directory(const std::filesystem::path& frames_dir, const std::filesystem::path& out_dir,
                                         const std::string& preset, const nlohmann::json& overrides,
                                         unsigned threads = 1) {
  namespace fs = std::filesystem;
  const EmulatorConfig emu = make_emulator(preset, overrides);
  const FrameSequence frames = load_frame_directory(frames_dir, emu.log_eps);
  const EventStream stream = simulate_sequence(frames, emu, std::max(1u, threads));

  const fs::path stage = fs::path(out_dir.string() + ".partial");
  fs::remove_all(stage);
  try {
    fs::create_directories(stage);
    write_events(stage / "events.evt1", stream);
    std::vector<Timestamp> stamps;
    for (const auto& f : frames) stamps.push_back(f.t);
    detail::write_json(stage / "meta.json", {{"preset", preset},
                                             {"overrides", overrides.is_null() ? nlohmann::json::object() : overrides},
                                             {"emulator", to_json(emu)},
                                             {"width", stream.width},
                                             {"height", stream.height},
                                             {"event_count", stream.size()},
                                             {"frame_timestamps_us", stamps}});
    (void)read_events(stage / "events.evt1");
    fs::remove_all(out_dir);
    fs::rename(stage, out_dir);
  } catch (...) {
    std::error_code ec;
    fs::remove_all(stage, ec);
    throw;
  }
  return {stream.size(), frames.front().t, frames.back().t};
}

/// Deterministic high-contrast ramp used for throughput measurement.
struct BenchConfig {
  int width = 240;
  int height = 180;
  std::size_t frames = 50;
  Timestamp frame_dt_us = 1000;
  double step = 0.45;  // log units per frame at the steepest pixels
  std::uint64_t seed = 1;
  unsigned threads = 1;
};

struct BenchResult {
  std::size_t events = 0;
  std::size_t expected_events = 0;
  double seconds = 0.0;
  double events_per_second = 0.0;

  nlohmann::json to_json(const BenchConfig& cfg) const {
    return {{"events", events},
            {"expected_events", expected_events},
            {"matches_oracle", events == expected_events},
            {"seconds", seconds},
            {"events_per_second", events_per_second},
            {"width", cfg.width},
            {"height", cfg.height},
            {"frames", cfg.frames},
            {"threads", cfg.threads},
            {"preset", "ideal-fast"}};
  }
};

/// Pixel slope factor of the bench ramp, in [0.5, 1].
inline double bench_slope(int x, int y) { return 0.5 + 0.125 * ((x + 2 * y) % 5); }

inline FrameSequence bench_frames(const BenchConfig& cfg) {
  FrameSequence frames(cfg.frames);
  for (std::size_t k = 0; k < cfg.frames; ++k) {
    LogFrame& f = frames[k];
    f.width = cfg.width;
    f.height = cfg.height;
    f.t = static_cast<Timestamp>(k) * cfg.frame_dt_us;
    f.values.resize(static_cast<std::size_t>(cfg.width) * cfg.height);
    for (int y = 0; y < cfg.height; ++y)
      for (int x = 0; x < cfg.width; ++x)
        f.values[static_cast<std::size_t>(y) * cfg.width + x] =
            -3.0 + static_cast<double>(k) * cfg.step * bench_slope(x, y);
  }
  return frames;
}

/// Times simulate_sequence with the ideal-fast preset on the bench ramp and checks
/// the event count against the per-pixel staircase count floor(rise / threshold).
inline BenchResult run_bench(const BenchConfig& cfg) {
  detail::require(cfg.frames >= 2, "bench needs at least 2 frames");
  const FrameSequence frames = bench_frames(cfg);
  EmulatorConfig emu = make_emulator(Preset::IdealFast);
  emu.seed = cfg.seed;

  const auto start = std::chrono::steady_clock::now();
  const EventStream stream = simulate_sequence(frames, emu, cfg.threads);
  const auto stop = std::chrono::steady_clock::now();

  const ThresholdMap thr = sample_threshold_map(cfg.width, cfg.height, emu.c_pos, emu.c_neg, emu.threshold_sigma, emu.seed);
  BenchResult r;
  for (std::size_t i = 0; i < frames.front().size(); ++i) {
    const double rise = frames.back().values[i] - frames.front().values[i];
    r.expected_events += static_cast<std::size_t>(std::floor((rise + kCrossingTolerance) / thr.c_pos[i]));
  }
  r.events = stream.size();
  r.seconds = std::chrono::duration<double>(stop - start).count();
  r.events_per_second = r.seconds > 0.0 ? static_cast<double>(r.events) / r.seconds : 0.0;
  return r;
}

}  // namespace blinksim
