#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <numbers>

#include "blinksim/scene.hpp"
#include "support/warp.hpp"

using namespace blinksim;
namespace fs = std::filesystem;

namespace {

constexpr int kW = 64, kH = 48;

// Pose whose similarity puts the layer centre at pixel (px, py) with the given yaw and scale 1.
Pose pixel_pose(double px, double py, double yaw = 0.0, double depth = 1.5) {
  Pose p;
  p.translation = {(px - 0.5 * (kW - 1)) / (0.5 * kW), (py - 0.5 * (kH - 1)) / (0.5 * kH), depth};
  p.rotation = Eigen::AngleAxisd(yaw, Eigen::Vector3d::UnitZ());
  return p;
}

Layer make_layer(double w, double h, int z, const Pose& a, const Pose& b, std::uint64_t tex_seed, Timestamp t1 = 10000) {
  Layer l;
  l.texture_file = "inline";
  l.texture = make_procedural_texture(64, tex_seed);
  l.base_width = w;
  l.base_height = h;
  l.z_order = z;
  l.trajectory = PoseSpline({0, t1}, {a, b});
  return l;
}

SpriteScene static_background_scene(Timestamp duration = 10000) {
  SpriteScene s;
  s.width = kW;
  s.height = kH;
  s.duration_us = duration;
  s.depth_ref = 1.5;
  const Pose c = pixel_pose(0.5 * (kW - 1), 0.5 * (kH - 1));
  s.layers.push_back(make_layer(2.0 * kW, 2.0 * kW, -1, c, c, 1, duration));
  return s;
}

struct Pool {
  fs::path dir = fs::temp_directory_path() / "blinksim_scene_pool";
  Pool() {
    fs::remove_all(dir);
    write_texture_pool(dir, 12, 64, 3);
  }
  ~Pool() { fs::remove_all(dir); }
};

}  // namespace

TEST(Similarity, InverseRoundTrip) {
  const Similarity2D s{3.0, -2.0, 0.7, 1.3};
  const Eigen::Vector2d p(4.5, -1.25);
  EXPECT_LT((s.inverse(s.apply(p)) - p).norm(), 1e-12);
  EXPECT_NEAR(yaw_of(Eigen::Quaterniond(Eigen::AngleAxisd(0.4, Eigen::Vector3d::UnitZ()))), 0.4, 1e-12);
}

TEST(Render, StaticBackgroundConstantInTime) {
  const auto s = static_background_scene();
  const Image a = render_frame(s, 0.0);
  EXPECT_EQ(render_frame(s, 5000.0), a);
  EXPECT_EQ(render_frame(s, 10000.0), a);
  for (float v : a.pixels) {
    EXPECT_GE(v, 0.1f - 1e-6f);
    EXPECT_LE(v, 0.9f + 1e-6f);
  }
  EXPECT_THROW(render_frame(s, 10001.0), InvalidArgument);
}

TEST(Render, SpriteCoversBackground) {
  auto s = static_background_scene();
  const Pose p = pixel_pose(20, 20);
  s.layers.push_back(make_layer(10, 10, 0, p, p, 7));
  auto other = s;
  other.layers[0].texture = make_procedural_texture(64, 99);
  const Image a = render_frame(s, 0.0), b = render_frame(other, 0.0);
  for (int y = 16; y <= 24; ++y)
    for (int x = 16; x <= 24; ++x) EXPECT_EQ(a.at(x, y), b.at(x, y));
  EXPECT_NE(a.at(2, 2), b.at(2, 2));
}

TEST(Render, FivePixelShift) {
  auto s = static_background_scene();
  s.layers.push_back(make_layer(16, 12, 0, pixel_pose(20, 24), pixel_pose(25, 24), 7));
  const Image a = render_frame(s, 0.0), b = render_frame(s, 10000.0);
  for (int y = 20; y <= 28; ++y)
    for (int x = 14; x <= 26; ++x) EXPECT_NEAR(b.at(x + 5, y), a.at(x, y), 1e-6);
}

TEST(Flow, StaticSceneZero) {
  const auto s = static_background_scene();
  const auto f = compute_flow_gt(s, 0.0, 10000.0);
  for (std::size_t i = 0; i < f.size(); ++i) {
    ASSERT_TRUE(f.valid[i]);
    EXPECT_NEAR(f.u[i], 0.0f, 1e-5f);
    EXPECT_NEAR(f.v[i], 0.0f, 1e-5f);
    EXPECT_FALSE(f.occluded[i]);
  }
}

TEST(Flow, RotationClosedForm) {
  auto s = static_background_scene();
  const double theta = 0.3, cx = 30.0, cy = 22.0;
  s.layers.push_back(make_layer(20, 20, 0, pixel_pose(cx, cy, 0.0), pixel_pose(cx, cy, theta), 5));
  const auto f = compute_flow_gt(s, 0.0, 10000.0);
  for (int y = 16; y <= 28; ++y) {
    for (int x = 24; x <= 36; ++x) {
      const double dx = x - cx, dy = y - cy;
      const double eu = std::cos(theta) * dx - std::sin(theta) * dy - dx;
      const double ev = std::sin(theta) * dx + std::cos(theta) * dy - dy;
      const std::size_t i = f.index(x, y);
      EXPECT_NEAR(f.u[i], eu, 1e-4);
      EXPECT_NEAR(f.v[i], ev, 1e-4);
    }
  }
}

TEST(Flow, OcclusionWhenSpriteArrives) {
  auto s = static_background_scene();
  s.layers.push_back(make_layer(8, 8, 0, pixel_pose(10, 24), pixel_pose(40, 24), 5));
  const auto f = compute_flow_gt(s, 0.0, 10000.0);
  EXPECT_TRUE(f.occluded[f.index(40, 24)]);   // background covered at t1
  EXPECT_FALSE(f.occluded[f.index(10, 24)]);  // sprite pixel visible at t1
  EXPECT_NEAR(f.u[f.index(10, 24)], 30.0, 1e-4);
  EXPECT_FALSE(f.occluded[f.index(50, 5)]);
}

TEST(Flow, OutOfFrameIsOccluded) {
  auto s = static_background_scene();
  s.layers.push_back(make_layer(8, 8, 0, pixel_pose(58, 24), pixel_pose(70, 24), 5));
  const auto f = compute_flow_gt(s, 0.0, 10000.0);
  EXPECT_TRUE(f.occluded[f.index(58, 24)]);
  EXPECT_TRUE(f.valid[f.index(58, 24)]);
}

TEST(Flow, WarpConsistencyHandBuilt) {
  auto s = static_background_scene();
  s.layers[0].trajectory = PoseSpline({0, 10000}, {pixel_pose(31.5, 23.5, 0.0, 1.5), pixel_pose(33.0, 22.0, 0.05, 1.45)});
  s.layers.push_back(make_layer(18, 14, 0, pixel_pose(20, 20, 0.1), pixel_pose(26, 23, 0.3, 1.4), 5));
  s.layers.push_back(make_layer(12, 16, 1, pixel_pose(45, 30, -0.2), pixel_pose(40, 28, 0.0, 1.6), 6));
  std::size_t n = 0;
  EXPECT_LT(oracle::warp_error(s, 0.0, 10000.0, &n), 0.01);
  EXPECT_GT(n, 1000u);
}

TEST(Flow, WarpConsistencyGenerated) {
  Pool pool;
  SceneParams p;
  p.width = kW;
  p.height = kH;
  p.duration_us = 50000;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const auto s = build_scene(p, pool.dir, seed);
    std::size_t n = 0;
    EXPECT_LT(oracle::warp_error(s, 10000.0, 15000.0, &n), 0.01) << "seed " << seed;
    EXPECT_GT(n, 500u);
  }
}

TEST(RigidMotion, IdentityIsZero) {
  const Image depth(8, 6, 2.0f);
  const Intrinsics k{100, 100, 3.5, 2.5};
  const auto f = rigid_motion_field(Pose{}, Pose{}, depth, k);
  for (std::size_t i = 0; i < f.size(); ++i) {
    EXPECT_NEAR(f.u[i], 0.0, 1e-9);
    EXPECT_NEAR(f.v[i], 0.0, 1e-9);
  }
}

TEST(RigidMotion, TranslationMatchesClosedForm) {
  const Image depth(10, 8, 4.0f);
  const Intrinsics k{320, 300, 4.5, 3.5};
  Pose moved;
  moved.translation = {0.05, 0, 0};
  const auto f = rigid_motion_field(Pose{}, moved, depth, k);
  for (std::size_t i = 0; i < f.size(); ++i) {
    EXPECT_NEAR(f.u[i], -320.0 * 0.05 / 4.0, 1e-6);
    EXPECT_NEAR(f.v[i], 0.0, 1e-6);
  }
}

TEST(RigidMotion, RotationIndependentOfDepth) {
  Image near(12, 9, 1.0f), far(12, 9, 1.0f);
  for (std::size_t i = 0; i < far.size(); ++i) far.pixels[i] = 2.0f + 0.37f * static_cast<float>(i % 13);
  const Intrinsics k{200, 210, 5.5, 4.0};
  Pose r;
  r.rotation = Eigen::AngleAxisd(0.02, Eigen::Vector3d(0.3, -1.0, 0.2).normalized());
  const auto a = rigid_motion_field(Pose{}, r, near, k);
  const auto b = rigid_motion_field(Pose{}, r, far, k);
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_NEAR(a.u[i], b.u[i], 1e-6);
    EXPECT_NEAR(a.v[i], b.v[i], 1e-6);
  }
}

TEST(RigidMotion, MissingDepthInvalid) {
  Image depth(2, 1, 1.0f);
  depth.pixels[1] = 0.0f;
  const auto f = rigid_motion_field(Pose{}, Pose{}, depth, Intrinsics{1, 1, 0, 0});
  EXPECT_TRUE(f.valid[0]);
  EXPECT_FALSE(f.valid[1]);
}

TEST(Adaptive, ConstantSpriteSpeed) {
  auto s = static_background_scene();
  // 1 px per 1000 us over 10 ms.
  s.layers.push_back(make_layer(8, 8, 0, pixel_pose(20, 24), pixel_pose(30, 24), 5));
  const auto ts = adaptive_timestamps(s, 0, 10000, 2.0);
  ASSERT_EQ(ts.size(), 6u);
  for (std::size_t k = 0; k < ts.size(); ++k) EXPECT_EQ(ts[k], static_cast<Timestamp>(2000 * k));
  EXPECT_EQ(adaptive_timestamps(static_background_scene(), 0, 10000, 1.0), (std::vector<Timestamp>{0, 10000}));
}

TEST(Adaptive, FinerBoundGivesMoreFrames) {
  Pool pool;
  SceneParams p;
  p.width = kW;
  p.height = kH;
  p.duration_us = 20000;
  const auto s = build_scene(p, pool.dir, 4);
  EXPECT_GE(adaptive_timestamps(s, 0, 20000, 1.0).size(), adaptive_timestamps(s, 0, 20000, 4.0).size());
}

TEST(BuildScene, BackgroundOnly) {
  Pool pool;
  SceneParams p;
  p.n_sprites = 0;
  const auto s = build_scene(p, pool.dir, 1);
  ASSERT_EQ(s.layer_count(), 1u);
  for (int id : layer_id_map(s, 50000.0)) EXPECT_EQ(id, 0);
}

TEST(BuildScene, DeterministicAndRoundTrips) {
  Pool pool;
  SceneParams p;
  const auto a = build_scene(p, pool.dir, 9), b = build_scene(p, pool.dir, 9), c = build_scene(p, pool.dir, 10);
  EXPECT_EQ(scene_to_json(a).dump(), scene_to_json(b).dump());
  EXPECT_NE(scene_to_json(a).dump(), scene_to_json(c).dump());
  const auto back = scene_from_json(nlohmann::json::parse(scene_to_json(a).dump()), pool.dir);
  EXPECT_EQ(scene_to_json(back).dump(), scene_to_json(a).dump());
  EXPECT_EQ(render_frame(back, 33333.0), render_frame(a, 33333.0));
}

TEST(BuildScene, SpriteCentresInsideFrame) {
  Pool pool;
  SceneParams p;
  p.n_sprites = 8;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto s = build_scene(p, pool.dir, seed);
    ASSERT_EQ(s.layer_count(), 9u);
    for (std::size_t k = 1; k < s.layer_count(); ++k) {
      const auto xf = s.transform(s.layers[k], 0.0);
      EXPECT_GE(xf.tx, 0.0);
      EXPECT_LT(xf.tx, p.width);
      EXPECT_GE(xf.ty, 0.0);
      EXPECT_LT(xf.ty, p.height);
    }
  }
}

TEST(BuildScene, Errors) {
  SceneParams p;
  EXPECT_THROW(build_scene(p, "/nonexistent/pool", 0), InvalidArgument);
  p.n_control_points = 1;
  Pool pool;
  EXPECT_THROW(build_scene(p, pool.dir, 0), InvalidArgument);
}
