#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <concepts>
#include <cstdint>
#include <numbers>
#include <optional>
#include <utility>
#include <vector>

#include <Eigen/Core>
#include <Eigen/Geometry>

#include "error.hpp"
#include "events.hpp"
#include "rng.hpp"

namespace blinksim {

struct Pose {
  Eigen::Vector3d translation = Eigen::Vector3d::Zero();
  Eigen::Quaterniond rotation = Eigen::Quaterniond::Identity();
};

struct Box3 {
  Eigen::Vector3d min = Eigen::Vector3d::Zero();
  Eigen::Vector3d max = Eigen::Vector3d::Ones();
};

/// Uniform translations in `box` and uniform rotations on SO(3) (Shoemake's method).
inline std::vector<Pose> sample_poses(std::size_t n, const Box3& box, std::uint64_t seed) {
  detail::require(n >= 2, "need at least 2 poses, got ", n);
  detail::require((box.max.array() >= box.min.array()).all(), "translation box has min > max");
  CounterRng rng(hash_words(seed, static_cast<std::uint64_t>(StreamTag::Poses)));
  std::vector<Pose> poses(n);
  constexpr double two_pi = 2.0 * std::numbers::pi;
  for (auto& pose : poses) {
    for (int a = 0; a < 3; ++a)
      pose.translation[a] = box.min[a] + rng.uniform() * (box.max[a] - box.min[a]);
    const double u1 = rng.uniform(), u2 = rng.uniform(), u3 = rng.uniform();
    const double a = std::sqrt(1.0 - u1), b = std::sqrt(u1);
    pose.rotation = Eigen::Quaterniond(b * std::cos(two_pi * u3), a * std::sin(two_pi * u2),
                                       a * std::cos(two_pi * u2), b * std::sin(two_pi * u3));
  }
  return poses;
}

/*
 * Continuous 6-DoF trajectory through control poses. Translation follows a
 * centripetal Catmull-Rom spline (phantom end points reflect the neighbouring
 * segment, giving one-sided end tangents); rotation is slerp between consecutive
 * sign-aligned control quaternions. The query domain is [start_time, end_time];
 * end_time may be pulled in by collision cutting, after which the body is frozen.
 */
class PoseSpline {
 public:
  PoseSpline() = default;

  PoseSpline(std::vector<Timestamp> knot_times, std::vector<Pose> control_poses)
      : knots_(std::move(knot_times)), poses_(std::move(control_poses)) {
    detail::require(knots_.size() >= 2, "a pose spline needs at least 2 knots");
    detail::require(knots_.size() == poses_.size(), "knot count ", knots_.size(),
                    " does not match pose count ", poses_.size());
    for (std::size_t k = 1; k < knots_.size(); ++k)
      detail::require(knots_[k] > knots_[k - 1], "knot times must strictly increase (knot ", k, ")");
    aligned_.reserve(poses_.size());
    for (auto& p : poses_) {
      p.rotation.normalize();
      Eigen::Quaterniond q = p.rotation;
      if (!aligned_.empty() && aligned_.back().dot(q) < 0.0) q.coeffs() = -q.coeffs();
      aligned_.push_back(q);
    }
    end_ = knots_.back();
  }

  const std::vector<Timestamp>& knot_times() const noexcept { return knots_; }
  const std::vector<Pose>& control_poses() const noexcept { return poses_; }
  Timestamp start_time() const { return knots_.front(); }
  Timestamp end_time() const noexcept { return end_; }

  /// Shortens the domain; the body stays at its pose at `t` afterwards.
  void cut(Timestamp t) {
    end_ = std::clamp(t, start_time(), end_);
  }

  Pose query(double t) const {
    detail::require(t >= static_cast<double>(start_time()) && t <= static_cast<double>(end_),
                    "pose query at ", t, " outside [", start_time(), ", ", end_, "]");
    return evaluate(t);
  }

  /// Pose at t with the time clamped into the domain.
  Pose query_clamped(double t) const {
    return evaluate(std::clamp(t, static_cast<double>(start_time()), static_cast<double>(end_)));
  }

 private:
  Pose evaluate(double t) const {
    const auto it = std::upper_bound(knots_.begin(), knots_.end(), t,
                                     [](double v, Timestamp k) { return v < static_cast<double>(k); });
    std::size_t i = static_cast<std::size_t>(std::distance(knots_.begin(), it));
    if (i > 0) --i;
    if (static_cast<double>(knots_[i]) == t) return poses_[i];
    if (i + 1 >= knots_.size()) return poses_.back();
    const double s = (t - static_cast<double>(knots_[i])) /
                     static_cast<double>(knots_[i + 1] - knots_[i]);

    const Eigen::Vector3d& p1 = poses_[i].translation;
    const Eigen::Vector3d& p2 = poses_[i + 1].translation;
    const Eigen::Vector3d p0 = i > 0 ? poses_[i - 1].translation : Eigen::Vector3d(2.0 * p1 - p2);
    const Eigen::Vector3d p3 =
        i + 2 < poses_.size() ? poses_[i + 2].translation : Eigen::Vector3d(2.0 * p2 - p1);

    Pose out;
    out.translation = centripetal_catmull_rom(p0, p1, p2, p3, s);
    out.rotation = aligned_[i].slerp(s, aligned_[i + 1]).normalized();
    return out;
  }

  // Barry-Goldman pyramid with alpha = 1/2 knot spacing.
  static Eigen::Vector3d centripetal_catmull_rom(const Eigen::Vector3d& p0, const Eigen::Vector3d& p1,
                                                 const Eigen::Vector3d& p2, const Eigen::Vector3d& p3,
                                                 double s) {
    constexpr double eps = 1e-12;
    double d12 = std::sqrt((p2 - p1).norm());
    if (d12 < eps) return p1 + s * (p2 - p1);
    double d01 = std::sqrt((p1 - p0).norm());
    double d23 = std::sqrt((p3 - p2).norm());
    if (d01 < eps) d01 = d12;
    if (d23 < eps) d23 = d12;
    const double t0 = 0.0, t1 = d01, t2 = t1 + d12, t3 = t2 + d23;
    const double u = t1 + s * d12;
    const Eigen::Vector3d a1 = ((t1 - u) * p0 + (u - t0) * p1) / (t1 - t0);
    const Eigen::Vector3d a2 = ((t2 - u) * p1 + (u - t1) * p2) / (t2 - t1);
    const Eigen::Vector3d a3 = ((t3 - u) * p2 + (u - t2) * p3) / (t3 - t2);
    const Eigen::Vector3d b1 = ((t2 - u) * a1 + (u - t0) * a2) / (t2 - t0);
    const Eigen::Vector3d b2 = ((t3 - u) * a2 + (u - t1) * a3) / (t3 - t1);
    return ((t2 - u) * b1 + (u - t1) * b2) / (t2 - t1);
  }

  std::vector<Timestamp> knots_;
  std::vector<Pose> poses_;
  std::vector<Eigen::Quaterniond> aligned_;
  Timestamp end_ = 0;
};

inline PoseSpline fit_pose_spline(std::vector<Pose> poses, std::vector<Timestamp> knot_times) {
  return PoseSpline(std::move(knot_times), std::move(poses));
}

inline Pose query_pose(const PoseSpline& spline, double t) { return spline.query(t); }

/// Arithmetic progression from t0 to t1 inclusive, rounded to whole µs.
inline std::vector<Timestamp> uniform_timestamps(Timestamp t0, Timestamp t1, std::size_t count) {
  detail::require(count >= 2, "need at least 2 timestamps, got ", count);
  detail::require(t0 < t1, "empty time window [", t0, ", ", t1, "]");
  std::vector<Timestamp> out(count);
  const double span = static_cast<double>(t1 - t0);
  for (std::size_t i = 0; i < count; ++i)
    out[i] = t0 + std::llround(span * static_cast<double>(i) / static_cast<double>(count - 1));
  out.back() = t1;
  return out;
}

/// Slack on the displacement bound (pixels) absorbing floating-point noise.
inline constexpr double kDisplacementTolerance = 1e-9;

/*
 * Greedy forward timestamp selection. From the current time, the step is the
 * largest h (doubling then bisection, 1 µs resolution) with
 * max_displacement(t, t + h) <= max_disp_px. A step of 1 µs is forced when even
 * that exceeds the bound. `max_displacement(ta, tb)` returns pixels.
 */
template <typename DisplacementFn>
  requires std::invocable<DisplacementFn&, Timestamp, Timestamp>
std::vector<Timestamp> adaptive_timestamps(DisplacementFn&& max_displacement, Timestamp t0,
                                           Timestamp t1, double max_disp_px) {
  detail::require(max_disp_px > 0.0, "max_disp_px must be positive, got ", max_disp_px);
  detail::require(t0 < t1, "empty time window [", t0, ", ", t1, "]");
  const double bound = max_disp_px + kDisplacementTolerance;
  auto ok = [&](Timestamp a, Timestamp b) { return max_displacement(a, b) <= bound; };

  std::vector<Timestamp> out{t0};
  Timestamp t = t0;
  while (t < t1) {
    if (ok(t, t1)) {
      out.push_back(t1);
      break;
    }
    Timestamp good = 0;
    Timestamp h = 1;
    while (t + h < t1 && ok(t, t + h)) {
      good = h;
      h *= 2;
    }
    Timestamp bad = std::min(h, t1 - t);
    while (bad - good > 1) {
      const Timestamp mid = good + (bad - good) / 2;
      if (ok(t, t + mid)) good = mid;
      else bad = mid;
    }
    t += std::max<Timestamp>(good, 1);
    out.push_back(t);
  }
  return out;
}

struct CollisionReport {
  Timestamp time = 0;
  std::pair<std::size_t, std::size_t> pair;  // body indices, first < second
  double distance = 0.0;

  friend bool operator==(const CollisionReport&, const CollisionReport&) = default;
};

/*
 * Bounding-sphere collision scan on the grid start + k * check_dt. At the first
 * grid time where two active bodies overlap (centre distance < sum of radii), the
 * pair is reported and every non-camera member is cut to (time - check_dt) and
 * leaves the scan. All overlaps found at one grid time are handled together,
 * which keeps the result independent of body order. The camera is never cut.
 */
inline std::vector<CollisionReport> detect_and_cut(std::vector<PoseSpline>& splines,
                                                   const std::vector<double>& radii,
                                                   std::optional<std::size_t> camera_index,
                                                   Timestamp check_dt) {
  detail::require(splines.size() == radii.size(), "one radius per body required");
  detail::require(check_dt > 0, "check_dt must be positive");
  for (double r : radii) detail::require(r > 0.0, "radii must be positive");
  detail::require(!camera_index || *camera_index < splines.size(), "camera index out of range");

  std::vector<CollisionReport> reports;
  if (splines.size() < 2) return reports;
  Timestamp start = splines.front().start_time();
  Timestamp end = splines.front().end_time();
  for (const auto& s : splines) {
    start = std::min(start, s.start_time());
    end = std::max(end, s.end_time());
  }

  const std::size_t n = splines.size();
  std::vector<bool> active(n, true);
  std::vector<Eigen::Vector3d> centres(n);
  for (Timestamp t = start; t <= end; t += check_dt) {
    for (std::size_t i = 0; i < n; ++i)
      if (active[i]) centres[i] = splines[i].query_clamped(static_cast<double>(t)).translation;
    std::vector<std::size_t> hit;
    for (std::size_t i = 0; i < n; ++i) {
      if (!active[i]) continue;
      for (std::size_t j = i + 1; j < n; ++j) {
        if (!active[j]) continue;
        const double d = (centres[i] - centres[j]).norm();
        if (d < radii[i] + radii[j]) {
          reports.push_back({t, {i, j}, d});
          hit.push_back(i);
          hit.push_back(j);
        }
      }
    }
    for (std::size_t b : hit) {
      if (camera_index && b == *camera_index) continue;
      if (active[b]) splines[b].cut(t - check_dt);
      active[b] = false;
    }
  }
  return reports;
}

}  // namespace blinksim
