#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <numbers>
#include <numeric>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <Eigen/Geometry>
#include <json.hpp>

#include "error.hpp"
#include "events.hpp"
#include "flow.hpp"
#include "image.hpp"
#include "io.hpp"
#include "rng.hpp"
#include "trajectory.hpp"

namespace blinksim {

/// Image-plane similarity: p = scale * R(theta) * local + (tx, ty).
struct Similarity2D {
  double tx = 0.0;
  double ty = 0.0;
  double theta = 0.0;
  double scale = 1.0;

  Eigen::Vector2d apply(const Eigen::Vector2d& local) const {
    const double c = std::cos(theta), s = std::sin(theta);
    return {scale * (c * local.x() - s * local.y()) + tx, scale * (s * local.x() + c * local.y()) + ty};
  }

  Eigen::Vector2d inverse(const Eigen::Vector2d& p) const {
    const double c = std::cos(theta), s = std::sin(theta);
    const double dx = p.x() - tx, dy = p.y() - ty;
    return {(c * dx + s * dy) / scale, (-s * dx + c * dy) / scale};
  }
};

/// Rotation about the optical (z) axis.
inline double yaw_of(const Eigen::Quaterniond& q) {
  return std::atan2(2.0 * (q.w() * q.z() + q.x() * q.y()), 1.0 - 2.0 * (q.y() * q.y() + q.z() * q.z()));
}

/// Textured rectangle moving along a pose spline. Local coordinates span
/// [-base_width/2, base_width/2] x [-base_height/2, base_height/2].
struct Layer {
  std::string texture_file;
  Image texture;
  double base_width = 0.0;
  double base_height = 0.0;
  int z_order = 0;
  PoseSpline trajectory;

  bool covers(const Eigen::Vector2d& local) const {
    return std::abs(local.x()) <= 0.5 * base_width && std::abs(local.y()) <= 0.5 * base_height;
  }

  double sample(const Eigen::Vector2d& local) const {
    const double qx = local.x() * texture.width / base_width + 0.5 * (texture.width - 1);
    const double qy = local.y() * texture.height / base_height + 0.5 * (texture.height - 1);
    return texture.sample(qx, qy);
  }

  std::array<Eigen::Vector2d, 4> corners() const {
    const double hw = 0.5 * base_width, hh = 0.5 * base_height;
    return {Eigen::Vector2d(-hw, -hh), Eigen::Vector2d(hw, -hh), Eigen::Vector2d(hw, hh), Eigen::Vector2d(-hw, hh)};
  }
};

/// Knobs of the procedural scene generator.
struct SceneParams {
  int width = 128;
  int height = 96;
  int n_sprites = 4;
  Timestamp duration_us = 100000;
  int n_control_points = 4;
  double xy_extent = 0.7;  // sprite centres in [-extent, extent] of the half-frame
  double depth_min = 1.0;
  double depth_max = 2.0;
  double depth_ref = 1.5;  // depth at which a layer has its base size
  double rotation_scale = 0.25;
  double sprite_min_px = 12.0;
  double sprite_max_px = 32.0;
  double background_motion = 0.05;
  double background_rotation_scale = 0.05;
  bool cut_collisions = true;
  Timestamp collision_dt_us = 1000;

  void validate() const {
    detail::require(width > 0 && height > 0 && width <= 65536 && height <= 65536, "invalid scene size");
    detail::require(n_sprites >= 0, "n_sprites must be >= 0");
    detail::require(duration_us > 0, "duration must be positive");
    detail::require(n_control_points >= 2, "need at least 2 control points");
    detail::require(depth_min > 0.0 && depth_max >= depth_min && depth_ref > 0.0, "invalid depth range");
    detail::require(sprite_min_px > 0.0 && sprite_max_px >= sprite_min_px, "invalid sprite size range");
    detail::require(xy_extent >= 0.0 && background_motion >= 0.0, "motion bounds must be >= 0");
    detail::require(rotation_scale >= 0.0 && background_rotation_scale >= 0.0, "rotation scales must be >= 0");
    detail::require(collision_dt_us > 0, "collision_dt_us must be positive");
  }
};

/*
 * Procedural "flying objects" scene: a full-frame background layer and opaque
 * sprites, each bound to a 3D pose spline that is projected to an image-plane
 * similarity (x, y -> position, depth -> scale, yaw -> rotation). Layers are kept
 * in painter order: background first, then sprites by ascending z_order.
 */
struct SpriteScene {
  int width = 0;
  int height = 0;
  Timestamp duration_us = 0;
  double depth_ref = 1.5;
  std::uint64_t seed = 0;
  std::string texture_pool;
  std::vector<Layer> layers;

  std::size_t layer_count() const noexcept { return layers.size(); }

  Similarity2D transform(const Layer& layer, double t) const {
    const Pose pose = layer.trajectory.query_clamped(t);
    Similarity2D s;
    s.tx = 0.5 * (width - 1) + pose.translation.x() * 0.5 * width;
    s.ty = 0.5 * (height - 1) + pose.translation.y() * 0.5 * height;
    s.theta = yaw_of(pose.rotation);
    s.scale = depth_ref / pose.translation.z();
    return s;
  }

  std::vector<Similarity2D> transforms(double t) const {
    std::vector<Similarity2D> out;
    out.reserve(layers.size());
    for (const auto& l : layers) out.push_back(transform(l, t));
    return out;
  }

  /// Index of the topmost layer covering an image point, or -1.
  int topmost_at(const std::vector<Similarity2D>& xf, const Eigen::Vector2d& p) const {
    for (int k = static_cast<int>(layers.size()) - 1; k >= 0; --k)
      if (layers[k].covers(xf[k].inverse(p))) return k;
    return -1;
  }
};

namespace detail {

inline void check_time(const SpriteScene& scene, double t) {
  require(t >= 0.0 && t <= static_cast<double>(scene.duration_us), "time ", t, " outside scene [0, ",
          scene.duration_us, "]");
}

/// Painter's algorithm over layers; calls paint(k, x, y, local) for each covered pixel.
template <typename Paint>
void paint_layers(const SpriteScene& scene, const std::vector<Similarity2D>& xf, Paint&& paint) {
  for (std::size_t k = 0; k < scene.layers.size(); ++k) {
    const Layer& layer = scene.layers[k];
    double x0 = 1e300, x1 = -1e300, y0 = 1e300, y1 = -1e300;
    for (const auto& c : layer.corners()) {
      const auto p = xf[k].apply(c);
      x0 = std::min(x0, p.x());
      x1 = std::max(x1, p.x());
      y0 = std::min(y0, p.y());
      y1 = std::max(y1, p.y());
    }
    const int xa = std::max(0, static_cast<int>(std::floor(x0)));
    const int xb = std::min(scene.width - 1, static_cast<int>(std::ceil(x1)));
    const int ya = std::max(0, static_cast<int>(std::floor(y0)));
    const int yb = std::min(scene.height - 1, static_cast<int>(std::ceil(y1)));
    for (int y = ya; y <= yb; ++y) {
      for (int x = xa; x <= xb; ++x) {
        const Eigen::Vector2d local = xf[k].inverse(Eigen::Vector2d(x, y));
        if (layer.covers(local)) paint(static_cast<int>(k), x, y, local);
      }
    }
  }
}

}  // namespace detail

/// Linear-intensity frame at time t (µs).
inline Image render_frame(const SpriteScene& scene, double t) {
  detail::check_time(scene, t);
  Image out(scene.width, scene.height, 0.0f);
  const auto xf = scene.transforms(t);
  detail::paint_layers(scene, xf, [&](int k, int x, int y, const Eigen::Vector2d& local) {
    out.at(x, y) = static_cast<float>(std::clamp(scene.layers[k].sample(local), 0.0, 1.0));
  });
  return out;
}

/// Topmost layer index per pixel (-1 where nothing is drawn).
inline std::vector<int> layer_id_map(const SpriteScene& scene, double t) {
  detail::check_time(scene, t);
  std::vector<int> ids(static_cast<std::size_t>(scene.width) * scene.height, -1);
  const auto xf = scene.transforms(t);
  detail::paint_layers(scene, xf, [&](int k, int x, int y, const Eigen::Vector2d&) {
    ids[static_cast<std::size_t>(y) * scene.width + x] = k;
  });
  return ids;
}

/*
 * Forward flow t0 -> t1. Each pixel follows the topmost layer at t0: the point is
 * mapped to layer coordinates at t0 and back to the image at t1. Pixels whose
 * point is hidden by a nearer layer at t1, or leaves the frame, are flagged
 * occluded but keep their flow.
 */
inline FlowField compute_flow_gt(const SpriteScene& scene, double t0, double t1) {
  detail::check_time(scene, t0);
  detail::check_time(scene, t1);
  detail::require(t0 < t1, "flow interval must be non-empty");
  const auto ids = layer_id_map(scene, t0);
  const auto xf0 = scene.transforms(t0);
  const auto xf1 = scene.transforms(t1);
  FlowField flow(scene.width, scene.height);
  for (int y = 0; y < scene.height; ++y) {
    for (int x = 0; x < scene.width; ++x) {
      const std::size_t i = flow.index(x, y);
      const int k = ids[i];
      if (k < 0) continue;
      const Eigen::Vector2d p(x, y);
      const Eigen::Vector2d p1 = xf1[k].apply(xf0[k].inverse(p));
      flow.set(i, p1.x() - p.x(), p1.y() - p.y());
      const bool inside = p1.x() >= -0.5 && p1.x() < scene.width - 0.5 && p1.y() >= -0.5 && p1.y() < scene.height - 0.5;
      flow.occluded[i] = !inside || scene.topmost_at(xf1, p1) != k ? 1 : 0;
    }
  }
  return flow;
}

/// Largest displacement (pixels) between ta and tb over the sprite corners and the
/// background points visible at the frame corners.
inline double max_corner_displacement(const SpriteScene& scene, double ta, double tb) {
  double best = 0.0;
  for (std::size_t k = 0; k < scene.layers.size(); ++k) {
    const auto a = scene.transform(scene.layers[k], ta);
    const auto b = scene.transform(scene.layers[k], tb);
    if (k == 0) {
      const double w = scene.width - 1, h = scene.height - 1;
      for (const Eigen::Vector2d p : {Eigen::Vector2d(0, 0), Eigen::Vector2d(w, 0), Eigen::Vector2d(w, h), Eigen::Vector2d(0, h)})
        best = std::max(best, (b.apply(a.inverse(p)) - p).norm());
    } else {
      for (const auto& c : scene.layers[k].corners()) best = std::max(best, (b.apply(c) - a.apply(c)).norm());
    }
  }
  return best;
}

inline std::vector<Timestamp> adaptive_timestamps(const SpriteScene& scene, Timestamp t0, Timestamp t1,
                                                  double max_disp_px) {
  return adaptive_timestamps(
      [&](Timestamp a, Timestamp b) {
        return max_corner_displacement(scene, static_cast<double>(a), static_cast<double>(b));
      },
      t0, t1, max_disp_px);
}

struct Intrinsics {
  double fx = 0.0;
  double fy = 0.0;
  double cx = 0.0;
  double cy = 0.0;
};

/*
 * Flow induced by camera motion over a depth map. Poses map camera to world
 * coordinates. Each pixel is back-projected with its depth, moved into the second
 * camera frame and re-projected. Invalid where depth is missing or the point ends
 * up behind the second camera.
 */
inline FlowField rigid_motion_field(const Pose& pose0, const Pose& pose1, const Image& depth, const Intrinsics& k) {
  detail::require(k.fx > 0.0 && k.fy > 0.0, "focal lengths must be positive");
  const Eigen::Matrix3d r0 = pose0.rotation.normalized().toRotationMatrix();
  const Eigen::Matrix3d r1 = pose1.rotation.normalized().toRotationMatrix();
  const Eigen::Matrix3d r10 = r1.transpose() * r0;
  const Eigen::Vector3d t10 = r1.transpose() * (pose0.translation - pose1.translation);
  FlowField flow(depth.width, depth.height);
  for (int y = 0; y < depth.height; ++y) {
    for (int x = 0; x < depth.width; ++x) {
      const double z = depth.at(x, y);
      if (!(z > 0.0) || !std::isfinite(z)) continue;
      const Eigen::Vector3d p0((x - k.cx) / k.fx * z, (y - k.cy) / k.fy * z, z);
      const Eigen::Vector3d p1 = r10 * p0 + t10;
      if (!(p1.z() > 0.0)) continue;
      flow.set(flow.index(x, y), k.fx * p1.x() / p1.z() + k.cx - x, k.fy * p1.y() / p1.z() + k.cy - y);
    }
  }
  return flow;
}

// ---------------------------------------------------------------------------
// Scene construction and serialization
// ---------------------------------------------------------------------------

/// Smooth grayscale texture in [0.1, 0.9]: a few low-frequency plane waves.
inline Image make_procedural_texture(int size, std::uint64_t seed) {
  CounterRng rng(hash_words(seed, static_cast<std::uint64_t>(StreamTag::Texture)));
  constexpr int kWaves = 5;
  std::array<std::array<double, 4>, kWaves> waves{};
  for (auto& w : waves) {
    const double freq = (0.5 + 1.5 * rng.uniform()) / size;  // cycles per pixel
    const double dir = 2.0 * std::numbers::pi * rng.uniform();
    w = {freq * std::cos(dir), freq * std::sin(dir), 2.0 * std::numbers::pi * rng.uniform(), 0.5 + rng.uniform()};
  }
  Image tex(size, size);
  double lo = 1e300, hi = -1e300;
  for (int y = 0; y < size; ++y) {
    for (int x = 0; x < size; ++x) {
      double v = 0.0;
      for (const auto& w : waves) v += w[3] * std::sin(2.0 * std::numbers::pi * (w[0] * x + w[1] * y) + w[2]);
      tex.at(x, y) = static_cast<float>(v);
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
  }
  const double range = std::max(hi - lo, 1e-12);
  for (auto& p : tex.pixels) p = static_cast<float>(0.1 + 0.8 * (p - lo) / range);
  return tex;
}

/// Writes `count` procedural textures as texture_NNN.pfm into `dir`.
inline void write_texture_pool(const std::filesystem::path& dir, int count, int size, std::uint64_t seed) {
  std::filesystem::create_directories(dir);
  for (int i = 0; i < count; ++i) {
    char name[32];
    std::snprintf(name, sizeof name, "texture_%03d.pfm", i);
    write_pfm(dir / name, make_procedural_texture(size, hash_words(seed, static_cast<std::uint64_t>(i))));
  }
}

inline std::vector<std::string> list_textures(const std::filesystem::path& pool) {
  detail::require(std::filesystem::is_directory(pool), "texture pool ", pool.string(), " is not a directory");
  std::vector<std::string> files;
  for (const auto& entry : std::filesystem::directory_iterator(pool)) {
    const auto ext = entry.path().extension().string();
    if (entry.is_regular_file() && (ext == ".pfm" || ext == ".pgm")) files.push_back(entry.path().filename().string());
  }
  std::sort(files.begin(), files.end());
  detail::require(!files.empty(), "texture pool ", pool.string(), " contains no .pfm or .pgm images");
  return files;
}

namespace detail {

inline Eigen::Quaterniond damp_rotation(const Eigen::Quaterniond& q, double fraction) {
  return Eigen::Quaterniond::Identity().slerp(fraction, q).normalized();
}

}  // namespace detail

/*
 * Random scene: textures drawn without replacement while the pool lasts, random
 * sprite sizes and trajectories (sample_poses -> fit_pose_spline), and optional
 * collision cutting between sprites. Deterministic in `seed`.
 */
inline SpriteScene build_scene(const SceneParams& params, const std::filesystem::path& texture_pool,
                               std::uint64_t seed) {
  params.validate();
  const auto files = list_textures(texture_pool);
  CounterRng rng(hash_words(seed, static_cast<std::uint64_t>(StreamTag::Scene)));

  std::vector<std::size_t> order(files.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  for (std::size_t i = order.size(); i > 1; --i)
    std::swap(order[i - 1], order[static_cast<std::size_t>(rng.uniform() * static_cast<double>(i))]);

  SpriteScene scene;
  scene.width = params.width;
  scene.height = params.height;
  scene.duration_us = params.duration_us;
  scene.depth_ref = params.depth_ref;
  scene.seed = seed;
  scene.texture_pool = texture_pool.string();
  const auto knots = uniform_timestamps(0, params.duration_us, static_cast<std::size_t>(params.n_control_points));
  const auto n_ctrl = static_cast<std::size_t>(params.n_control_points);

  // Background: square, large enough to cover the frame under its small motion.
  {
    Layer bg;
    bg.texture_file = files[order[0]];
    bg.base_width = bg.base_height = 2.0 * std::max(params.width, params.height);
    bg.z_order = -1;
    const double m = params.background_motion;
    Box3 box{{-m, -m, params.depth_ref * 0.97}, {m, m, params.depth_ref * 1.03}};
    auto poses = sample_poses(n_ctrl, box, hash_words(seed, 0u));
    for (auto& p : poses) p.rotation = detail::damp_rotation(p.rotation, params.background_rotation_scale);
    bg.trajectory = fit_pose_spline(std::move(poses), knots);
    scene.layers.push_back(std::move(bg));
  }

  std::vector<PoseSpline> splines;
  std::vector<double> radii;
  for (int i = 0; i < params.n_sprites; ++i) {
    Layer sprite;
    sprite.texture_file = files[order[static_cast<std::size_t>(i + 1) % order.size()]];
    sprite.base_width = params.sprite_min_px + rng.uniform() * (params.sprite_max_px - params.sprite_min_px);
    sprite.base_height = params.sprite_min_px + rng.uniform() * (params.sprite_max_px - params.sprite_min_px);
    sprite.z_order = i;
    const double e = params.xy_extent;
    Box3 box{{-e, -e, params.depth_min}, {e, e, params.depth_max}};
    auto poses = sample_poses(n_ctrl, box, hash_words(seed, static_cast<std::uint64_t>(i + 1)));
    for (auto& p : poses) p.rotation = detail::damp_rotation(p.rotation, params.rotation_scale);
    sprite.trajectory = fit_pose_spline(std::move(poses), knots);
    splines.push_back(sprite.trajectory);
    // Bounding radius in the normalized coordinates of the pose translation.
    radii.push_back(0.5 * std::hypot(sprite.base_width, sprite.base_height) / (0.5 * params.width));
    scene.layers.push_back(std::move(sprite));
  }
  if (params.cut_collisions && splines.size() >= 2) {
    detect_and_cut(splines, radii, std::nullopt, params.collision_dt_us);
    for (std::size_t i = 0; i < splines.size(); ++i) scene.layers[i + 1].trajectory = splines[i];
  }

  for (auto& layer : scene.layers) layer.texture = read_image(texture_pool / layer.texture_file);
  return scene;
}

inline nlohmann::json scene_to_json(const SpriteScene& scene) {
  nlohmann::json layers = nlohmann::json::array();
  for (std::size_t k = 0; k < scene.layers.size(); ++k) {
    const Layer& l = scene.layers[k];
    nlohmann::json knots = nlohmann::json::array();
    const auto& times = l.trajectory.knot_times();
    const auto& poses = l.trajectory.control_poses();
    for (std::size_t i = 0; i < times.size(); ++i) {
      const auto& p = poses[i];
      knots.push_back({{"t_us", times[i]},
                       {"translation", {p.translation.x(), p.translation.y(), p.translation.z()}},
                       {"rotation_wxyz", {p.rotation.w(), p.rotation.x(), p.rotation.y(), p.rotation.z()}}});
    }
    layers.push_back({{"role", k == 0 ? "background" : "sprite"},
                      {"texture", l.texture_file},
                      {"base_size_px", {l.base_width, l.base_height}},
                      {"z_order", l.z_order},
                      {"end_time_us", l.trajectory.end_time()},
                      {"knots", std::move(knots)}});
  }
  return {{"width", scene.width},
          {"height", scene.height},
          {"duration_us", scene.duration_us},
          {"depth_ref", scene.depth_ref},
          {"seed", scene.seed},
          {"texture_pool", scene.texture_pool},
          {"layers", std::move(layers)}};
}

/// Rebuilds a scene from its description; textures are loaded from `texture_pool`.
inline SpriteScene scene_from_json(const nlohmann::json& j, const std::filesystem::path& texture_pool) {
  SpriteScene scene;
  scene.width = j.at("width").get<int>();
  scene.height = j.at("height").get<int>();
  scene.duration_us = j.at("duration_us").get<Timestamp>();
  scene.depth_ref = j.at("depth_ref").get<double>();
  scene.seed = j.at("seed").get<std::uint64_t>();
  scene.texture_pool = j.at("texture_pool").get<std::string>();
  for (const auto& lj : j.at("layers")) {
    Layer l;
    l.texture_file = lj.at("texture").get<std::string>();
    l.base_width = lj.at("base_size_px").at(0).get<double>();
    l.base_height = lj.at("base_size_px").at(1).get<double>();
    l.z_order = lj.at("z_order").get<int>();
    std::vector<Timestamp> times;
    std::vector<Pose> poses;
    for (const auto& kj : lj.at("knots")) {
      times.push_back(kj.at("t_us").get<Timestamp>());
      const auto t = kj.at("translation").get<std::array<double, 3>>();
      const auto q = kj.at("rotation_wxyz").get<std::array<double, 4>>();
      poses.push_back(Pose{Eigen::Vector3d(t[0], t[1], t[2]), Eigen::Quaterniond(q[0], q[1], q[2], q[3])});
    }
    l.trajectory = fit_pose_spline(std::move(poses), std::move(times));
    l.trajectory.cut(lj.at("end_time_us").get<Timestamp>());
    l.texture = read_image(texture_pool / l.texture_file);
    scene.layers.push_back(std::move(l));
  }
  detail::require(!scene.layers.empty(), "scene description has no layers");
  return scene;
}

}  // namespace blinksim
