// Command-line front end. Machine-readable output goes to stdout, progress to stderr.

#include <cstdint>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <regex>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "blinksim/blinksim.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

const std::vector<std::string> kPresetNames{"ideal-fast", "low-light", "voltmeter"};

json load_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw blinksim::Error("cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw blinksim::InvalidArgument(path.string() + " is not valid JSON: " + e.what());
  }
}

// "a.b=value" assignments; the value is parsed as JSON and falls back to a string.
void apply_sets(json& target, const std::vector<std::string>& sets) {
  for (const auto& s : sets) {
    const auto eq = s.find('=');
    if (eq == std::string::npos || eq == 0) throw blinksim::InvalidArgument("--set expects key=value, got '" + s + "'");
    const std::string value = s.substr(eq + 1);
    json parsed = json::parse(value, nullptr, false);
    if (parsed.is_discarded()) parsed = value;
    json::json_pointer ptr("/" + std::regex_replace(s.substr(0, eq), std::regex("\\."), "/"));
    target[ptr] = parsed;
  }
}

struct Common {
  std::optional<std::uint64_t> seed;
  unsigned threads = 1;
  std::optional<std::string> preset;
  std::optional<std::string> config;
  std::vector<std::string> sets;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--seed", c.seed, "Random seed");
  cmd->add_option("--threads", c.threads, "Worker threads (outputs do not depend on it)")->check(CLI::Range(1u, 1024u));
  cmd->add_option("--preset", c.preset, "Emulator preset")->check(CLI::IsMember(kPresetNames));
  cmd->add_option("--config", c.config, "JSON config file")->check(CLI::ExistingFile);
  cmd->add_option("--set", c.sets, "Override a config value, e.g. scene.n_sprites=2");
}

int cmd_generate(const Common& c, const std::optional<std::string>& output) {
  json j = c.config ? load_json(*c.config) : json::object();
  apply_sets(j, c.sets);
  if (c.seed) j["seed"] = *c.seed;
  if (c.preset) j["emulator"]["preset"] = *c.preset;
  if (output) j["output"] = *output;
  const auto cfg = blinksim::RunConfig::from_json(j);
  const auto r = blinksim::generate_dataset(cfg, c.threads, &std::cerr);
  std::cout << json{{"output", cfg.output.generic_string()},
                    {"frames", r.frames},
                    {"flows", r.flows},
                    {"events", r.events},
                    {"manifest_sha256", blinksim::sha256_hex(std::span(
                                            reinterpret_cast<const std::uint8_t*>(r.manifest.data()),
                                            r.manifest.size()))}}
                   .dump()
            << "\n";
  return 0;
}

int cmd_simulate(const Common& c, const std::string& frames_dir, const std::string& output) {
  json overrides = c.config ? load_json(*c.config) : json::object();
  std::string preset = c.preset.value_or("ideal-fast");
  if (overrides.contains("preset")) {
    if (!c.preset) preset = overrides["preset"].get<std::string>();
    overrides.erase("preset");
  }
  apply_sets(overrides, c.sets);
  if (c.seed) overrides["seed"] = *c.seed;
  std::cerr << "simulate: " << frames_dir << " with " << preset << "\n";
  const auto r = blinksim::simulate_directory(frames_dir, output, preset, overrides, c.threads);
  json out = r.to_json();
  out["output"] = output;
  std::cout << out.dump() << "\n";
  return 0;
}

int cmd_voxelize(const std::string& events_path, const std::string& output, int bins, std::optional<std::int64_t> t0,
                 std::optional<std::int64_t> t1) {
  const auto stream = blinksim::read_events(events_path);
  blinksim::Timestamp lo = 0, hi = 1;
  if (!stream.events.empty()) {
    lo = stream.events.front().t;
    hi = stream.events.back().t;
    if (hi == lo) ++hi;
  }
  lo = t0.value_or(lo);
  hi = t1.value_or(hi);
  const auto grid = blinksim::voxelize(stream, lo, hi, bins);
  blinksim::write_file_bytes(output, blinksim::encode_npy(grid));
  std::cout << json{{"output", output},
                    {"bins", bins},
                    {"height", grid.height},
                    {"width", grid.width},
                    {"t0_us", lo},
                    {"t1_us", hi},
                    {"events", stream.size()},
                    {"sum", grid.sum()}}
                   .dump()
            << "\n";
  return 0;
}

int cmd_eval(const std::string& pred, const std::string& gt, const std::string& mask, const std::string& aggregate) {
  const auto policy = mask == "valid" ? blinksim::MaskPolicy::ValidOnly : blinksim::MaskPolicy::ValidNonOccluded;
  const auto agg = aggregate == "pixel" ? blinksim::Aggregation::PixelWeighted : blinksim::Aggregation::FrameWeighted;
  const auto report = blinksim::evaluate_sequence(pred, gt, policy, agg);
  json out = report.to_json();
  out["mask_policy"] = mask;
  out["aggregation"] = aggregate;
  std::cout << out.dump() << "\n";
  return 0;
}

int cmd_bench(const Common& c, blinksim::BenchConfig cfg) {
  if (c.preset && *c.preset != "ideal-fast")
    throw blinksim::InvalidArgument("bench measures the ideal-fast preset only");
  if (c.seed) cfg.seed = *c.seed;
  cfg.threads = c.threads;
  const auto r = blinksim::run_bench(cfg);
  std::cerr << "bench: " << r.events << " events in " << r.seconds << " s\n";
  std::cout << r.to_json(cfg).dump() << "\n";
  return r.events == r.expected_events ? 0 : 3;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Synthetic event camera and optical flow data generator"};
  app.require_subcommand(1);

  Common gen_c, sim_c, bench_c;
  std::optional<std::string> gen_out;
  auto* gen = app.add_subcommand("generate", "Render a sprite scene, its events and flow ground truth");
  add_common(gen, gen_c);
  gen->add_option("-o,--output", gen_out, "Output dataset directory (overrides the config)");

  std::string sim_frames, sim_out;
  auto* sim = app.add_subcommand("simulate", "Emulate events for a directory of PFM frames");
  add_common(sim, sim_c);
  sim->add_option("frames_dir", sim_frames, "Directory of PFM frames")->required();
  sim->add_option("-o,--output", sim_out, "Output directory")->required();

  std::string vox_in, vox_out;
  int vox_bins = 5;
  std::optional<std::int64_t> vox_t0, vox_t1;
  auto* vox = app.add_subcommand("voxelize", "Convert an EVT1 file to a (bins, H, W) float64 .npy grid");
  vox->add_option("events", vox_in, "EVT1 file")->required()->check(CLI::ExistingFile);
  vox->add_option("-o,--output", vox_out, "Output .npy file")->required();
  vox->add_option("--bins", vox_bins, "Temporal bins")->check(CLI::PositiveNumber);
  vox->add_option("--t0", vox_t0, "Window start in µs (default: first event)");
  vox->add_option("--t1", vox_t1, "Window end in µs (default: last event)");

  std::string ev_pred, ev_gt, ev_mask = "valid-nonoccluded", ev_agg = "pixel";
  auto* ev = app.add_subcommand("eval", "Compare predicted .flo files against ground truth");
  ev->add_option("pred_dir", ev_pred, "Predicted flow directory")->required();
  ev->add_option("gt_dir", ev_gt, "Ground-truth flow directory")->required();
  ev->add_option("--mask", ev_mask, "Pixels to evaluate")->check(CLI::IsMember({"valid", "valid-nonoccluded"}));
  ev->add_option("--aggregate", ev_agg, "Sequence averaging")->check(CLI::IsMember({"pixel", "frame"}));

  blinksim::BenchConfig bench_cfg;
  auto* bench = app.add_subcommand("bench", "Time event generation on a synthetic ramp");
  add_common(bench, bench_c);
  bench->add_option("--width", bench_cfg.width)->check(CLI::PositiveNumber);
  bench->add_option("--height", bench_cfg.height)->check(CLI::PositiveNumber);
  bench->add_option("--frames", bench_cfg.frames)->check(CLI::Range(2, 100000));

  std::string tex_dir;
  int tex_count = 16, tex_size = 64;
  std::uint64_t tex_seed = 0;
  auto* tex = app.add_subcommand("textures", "Write a procedural texture pool");
  tex->add_option("dir", tex_dir, "Output directory")->required();
  tex->add_option("--count", tex_count)->check(CLI::PositiveNumber);
  tex->add_option("--size", tex_size)->check(CLI::Range(2, 4096));
  tex->add_option("--seed", tex_seed);

  CLI11_PARSE(app, argc, argv);

  try {
    if (*gen) return cmd_generate(gen_c, gen_out);
    if (*sim) return cmd_simulate(sim_c, sim_frames, sim_out);
    if (*vox) return cmd_voxelize(vox_in, vox_out, vox_bins, vox_t0, vox_t1);
    if (*ev) return cmd_eval(ev_pred, ev_gt, ev_mask, ev_agg);
    if (*bench) return cmd_bench(bench_c, bench_cfg);
    if (*tex) {
      blinksim::write_texture_pool(tex_dir, tex_count, tex_size, tex_seed);
      std::cout << json{{"output", tex_dir}, {"count", tex_count}, {"size", tex_size}}.dump() << "\n";
      return 0;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}
