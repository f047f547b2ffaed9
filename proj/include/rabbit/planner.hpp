#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <ostream>
#include <queue>
#include <string>
#include <string_view>
#include <vector>

#include "error.hpp"
#include "geometry.hpp"
#include "image.hpp"
#include "task.hpp"

namespace rabbit {

enum class PhaseTag : std::uint8_t { Approach, Stroke, Lift, Pat };

inline std::string_view to_string(PhaseTag tag) {
  switch (tag) {
    case PhaseTag::Approach: return "approach";
    case PhaseTag::Stroke: return "stroke";
    case PhaseTag::Lift: return "lift";
    case PhaseTag::Pat: return "pat";
  }
  return "unknown";
}

inline constexpr double kForceSafetyCap = 20.0;  // N
inline constexpr double kTrackerRate = 70.0;     // Hz, nominal reference spacing

struct TrajectoryPoint {
  double t = 0.0;
  Pose6 pose;
  Vec3 force = Vec3::Zero();  // desired force the tool exerts on the body
  PhaseTag phase = PhaseTag::Approach;
};

struct MotionPrimitive {
  TaskKind task = TaskKind::FreeMotion;
  std::vector<TrajectoryPoint> points;

  bool empty() const { return points.empty(); }
  std::size_t size() const { return points.size(); }
  double horizon() const { return points.empty() ? 0.0 : points.back().t; }
};

/// Pinhole camera; pixel (u, v) looks along ((u - cx) / fx, (v - cy) / fy, 1).
struct CameraModel {
  double fx = 320.0, fy = 320.0, cx = 80.0, cy = 120.0;
  int width = 160, height = 240;
  Pose6 camera_to_base;

  void validate() const {
    if (!(fx > 0.0 && fy > 0.0)) throw ConfigError("camera focal lengths must be positive");
    if (width <= 0 || height <= 0) throw ConfigError("camera resolution must be positive");
  }

  // Camera-frame ray with unit z component; the ray parameter equals depth.
  Vec3 ray(double u, double v) const { return {(u - cx) / fx, (v - cy) / fy, 1.0}; }

  Vec3 back_project(double u, double v, double depth) const { return camera_to_base.apply(ray(u, v) * depth); }

  // Base-frame point to (u, v, depth).
  Vec3 project(const Vec3& p_base) const {
    const Vec3 p = camera_to_base.inverse().apply(p_base);
    return {fx * p.x() / p.z() + cx, fy * p.y() / p.z() + cy, p.z()};
  }
};

struct ToolFootprint {
  double length = 0.10;  // along the stroke (image rows)
  double width = 0.06;   // across strips (image columns)

  void validate() const {
    if (!(length > 0.0 && width > 0.0)) throw ConfigError("tool footprint dimensions must be positive");
  }
};

// Footprint in pixels at a given working depth.
struct PixelFootprint {
  double length = 1.0;
  double width = 1.0;
};

inline PixelFootprint to_pixels(const ToolFootprint& fp, const CameraModel& cam, double depth) {
  return {fp.length * cam.fy / depth, fp.width * cam.fx / depth};
}

struct Waypoint {
  Eigen::Vector2d pixel = Eigen::Vector2d::Zero();  // (u, v) = (column, row)
  int strip = 0;
  Vec3 point = Vec3::Zero();  // base frame, valid once lifted
  bool lifted = false;
};

struct WaypointSet {
  std::vector<Waypoint> points;
  bool empty() const { return points.empty(); }
  std::size_t size() const { return points.size(); }
};

inline constexpr int kMinComponentPixels = 25;

inline std::uint8_t target_label(TaskKind task) {
  switch (task) {
    case TaskKind::Wash: return kDrySkin;
    case TaskKind::Rinse: return kSoap;
    case TaskKind::Dry: return kWater;
    case TaskKind::FreeMotion: break;
  }
  return kBackground;
}

/// Task label pixels reduced to their largest 4-connected component;
/// components under kMinComponentPixels are discarded.
inline Region target_region(const SegMask& mask, TaskKind task) {
  Region region(mask.width(), mask.height(), 0);
  if (task == TaskKind::FreeMotion) return region;
  const std::uint8_t label = target_label(task);
  std::vector<int> comp(mask.size(), -1);
  int best = -1;
  std::size_t best_size = 0;
  int next_id = 0;
  std::vector<std::pair<int, int>> stack;
  for (int y = 0; y < mask.height(); ++y) {
    for (int x = 0; x < mask.width(); ++x) {
      const std::size_t i = static_cast<std::size_t>(y) * mask.width() + x;
      if (mask[i] != label || comp[i] >= 0) continue;
      const int id = next_id++;
      std::size_t count = 0;
      stack.assign(1, {x, y});
      comp[i] = id;
      while (!stack.empty()) {
        const auto [cx, cy] = stack.back();
        stack.pop_back();
        ++count;
        const std::array<std::pair<int, int>, 4> nbrs{{{cx + 1, cy}, {cx - 1, cy}, {cx, cy + 1}, {cx, cy - 1}}};
        for (const auto& [nx, ny] : nbrs) {
          if (!mask.contains(nx, ny)) continue;
          const std::size_t j = static_cast<std::size_t>(ny) * mask.width() + nx;
          if (mask[j] != label || comp[j] >= 0) continue;
          comp[j] = id;
          stack.emplace_back(nx, ny);
        }
      }
      if (count > best_size) {
        best_size = count;
        best = id;
      }
    }
  }
  if (best < 0 || best_size < static_cast<std::size_t>(kMinComponentPixels)) return region;
  for (std::size_t i = 0; i < mask.size(); ++i) region[i] = comp[i] == best ? 1 : 0;
  return region;
}

inline std::size_t region_area(const Region& region) {
  return static_cast<std::size_t>(std::count(region.data().begin(), region.data().end(), std::uint8_t{1}));
}

inline constexpr double kPatSpacing = 0.8;  // pat pitch as a fraction of tool length

/// Strip decomposition of the region's bounding box.
///
/// The box is cut into the fewest equal-width column strips no wider than
/// the tool. Each strip contributes its row extremes on the strip
/// centerline. Wash visits strips in serpentine order; Rinse runs every
/// strip top-to-bottom; Dry places a lattice of pat centers along each
/// strip, pitch at most kPatSpacing tool lengths.
inline WaypointSet plan_waypoints(const Region& region, const PixelFootprint& footprint, TaskKind task) {
  WaypointSet out;
  int c0 = region.width(), c1 = -1;
  for (int y = 0; y < region.height(); ++y)
    for (int x = 0; x < region.width(); ++x)
      if (region.at(x, y)) {
        c0 = std::min(c0, x);
        c1 = std::max(c1, x);
      }
  if (c1 < 0) return out;

  const double box_w = c1 - c0 + 1;
  const int strips = std::max(1, static_cast<int>(std::ceil(box_w / footprint.width - 1e-9)));
  const double strip_w = box_w / strips;
  int visited = 0;
  for (int s = 0; s < strips; ++s) {
    const double left = c0 + s * strip_w;
    const int col_lo = static_cast<int>(std::ceil(left - 1e-9));
    const int col_hi = std::min(c1, static_cast<int>(std::ceil(left + strip_w - 1e-9)) - 1);
    int r0 = region.height(), r1 = -1;
    for (int x = col_lo; x <= col_hi; ++x)
      for (int y = 0; y < region.height(); ++y)
        if (region.at(x, y)) {
          r0 = std::min(r0, y);
          r1 = std::max(r1, y);
        }
    if (r1 < 0) continue;
    const double center = left + 0.5 * strip_w - 0.5;
    const bool downward = task != TaskKind::Wash || visited % 2 == 0;
    ++visited;

    std::vector<double> rows;
    if (task == TaskKind::Dry) {
      const double height = r1 - r0 + 1;
      const int pats = std::max(1, static_cast<int>(std::ceil(height / (kPatSpacing * footprint.length) - 1e-9)));
      for (int k = 0; k < pats; ++k) rows.push_back(r0 - 0.5 + (k + 0.5) * height / pats);
    } else {
      rows = {static_cast<double>(r0), static_cast<double>(r1)};
    }
    if (!downward) std::reverse(rows.begin(), rows.end());
    for (double r : rows) out.points.push_back({Eigen::Vector2d(center, r), s, Vec3::Zero(), false});
  }
  return out;
}

inline constexpr int kDepthSearchRadius = 2;  // 5x5 neighborhood

/// Back-projects waypoints through the depth image. A missing depth sample
/// falls back to the median of valid depths in the 5x5 neighborhood.
inline WaypointSet lift_to_3d(WaypointSet waypoints, const DepthImage& depth, const CameraModel& camera) {
  for (std::size_t i = 0; i < waypoints.points.size(); ++i) {
    auto& w = waypoints.points[i];
    const int u = static_cast<int>(std::lround(w.pixel.x()));
    const int v = static_cast<int>(std::lround(w.pixel.y()));
    double z_mm = depth.contains(u, v) ? depth.at(u, v) : 0.0;
    if (z_mm <= 0.0) {
      std::vector<double> valid;
      for (int dy = -kDepthSearchRadius; dy <= kDepthSearchRadius; ++dy)
        for (int dx = -kDepthSearchRadius; dx <= kDepthSearchRadius; ++dx)
          if (depth.contains(u + dx, v + dy) && depth.at(u + dx, v + dy) > 0) valid.push_back(depth.at(u + dx, v + dy));
      if (valid.empty())
        throw PlanningError("no valid depth near waypoint " + std::to_string(i) + " at pixel (" + std::to_string(u) +
                            ", " + std::to_string(v) + ")");
      std::sort(valid.begin(), valid.end());
      const std::size_t n = valid.size();
      z_mm = n % 2 ? valid[n / 2] : 0.5 * (valid[n / 2 - 1] + valid[n / 2]);
    }
    w.point = camera.back_project(w.pixel.x(), w.pixel.y(), z_mm / 1000.0);
    w.lifted = true;
  }
  return waypoints;
}

// ---------------------------------------------------------------------------

struct PrimitiveConfig {
  double stroke_speed = 0.03;    // m/s
  double approach_speed = 0.08;  // m/s
  double lift_height = 0.04;     // m
  double pat_hold = 0.7;         // s
  double press_depth = 0.01;     // commanded depth below the surface during contact phases
  double wash_force = 5.0;       // N
  double rinse_force = 5.0;
  double dry_force = 3.0;
  double tool_reach = 0.08;      // end-effector origin to the unloaded wiping face
  double rate = kTrackerRate;
  Quat tool_orientation = Quat(0.0, 1.0, 0.0, 0.0);  // tool z pointing down

  void validate() const {
    if (!(stroke_speed > 0.0 && approach_speed > 0.0 && lift_height > 0.0 && pat_hold >= 0.0 && rate > 0.0))
      throw ConfigError("primitive speeds, lift height and rate must be positive");
    for (double f : {wash_force, rinse_force, dry_force})
      if (!(f >= 0.0 && f <= kForceSafetyCap)) throw ConfigError("desired force outside [0, 20] N");
  }
};

// Face-down tool orientation whose plate length (tool x) runs along the image rows direction.
inline Quat stroke_aligned_orientation(const CameraModel& camera) {
  Vec3 along = camera.camera_to_base.orientation() * Vec3::UnitY();
  along.z() = 0.0;
  if (along.norm() < 1e-9) along = Vec3::UnitX();
  along.normalize();
  const Vec3 z(0.0, 0.0, -1.0);
  const Vec3 y = z.cross(along);
  Mat3 r;
  r.col(0) = along;
  r.col(1) = y;
  r.col(2) = z;
  return Quat(r);
}

namespace planner_detail {

class Builder {
 public:
  Builder(MotionPrimitive& prim, const PrimitiveConfig& cfg) : prim_(prim), cfg_(cfg) {}

  void start(const Pose6& pose) { cursor_ = pose; }
  const Pose6& cursor() const { return cursor_; }

  void move(const Pose6& target, double speed, const Vec3& force, PhaseTag tag) {
    const double dist = (target.position() - cursor_.position()).norm();
    const double angle = quat_log(target.orientation() * cursor_.orientation().conjugate()).norm();
    const double duration = std::max(dist / speed, angle / 0.5);
    const int steps = std::max(1, static_cast<int>(std::lround(duration * cfg_.rate)));
    for (int k = 1; k <= steps; ++k) {
      const double s = static_cast<double>(k) / steps;
      const Vec3 p = cursor_.position() + s * (target.position() - cursor_.position());
      const Quat q = cursor_.orientation().slerp(s, target.orientation());
      push(Pose6(p, q), force, tag);
    }
    cursor_ = target;
  }

  void hold(double seconds, const Vec3& force, PhaseTag tag) {
    const int steps = static_cast<int>(std::lround(seconds * cfg_.rate));
    for (int k = 0; k < steps; ++k) push(cursor_, force, tag);
  }

 private:
  void push(const Pose6& pose, const Vec3& force, PhaseTag tag) {
    const double t = static_cast<double>(prim_.points.size()) / cfg_.rate;
    prim_.points.push_back({t, pose, force, tag});
  }

  MotionPrimitive& prim_;
  const PrimitiveConfig& cfg_;
  Pose6 cursor_;
};

}  // namespace planner_detail

/// Force-position primitive over lifted waypoints.
///
/// Wash: one continuous pressed pass through all waypoints. Rinse: each
/// strip stroked twice in the same direction with a lifted return between.
/// Dry: lift, translate, descend and hold at each pat center.
inline MotionPrimitive generate_primitive(TaskKind task, const WaypointSet& waypoints, const PrimitiveConfig& cfg,
                                          const Pose6& start_pose) {
  cfg.validate();
  MotionPrimitive prim;
  prim.task = task;
  if (waypoints.empty() || task == TaskKind::FreeMotion) return prim;

  const Vec3 up(0.0, 0.0, 1.0);
  const Quat q = cfg.tool_orientation;
  auto pressed = [&](const Vec3& p) { return Pose6(p + up * (cfg.tool_reach - cfg.press_depth), q); };
  auto above = [&](const Vec3& p) { return Pose6(p + up * (cfg.tool_reach + cfg.lift_height), q); };
  const Vec3 zero = Vec3::Zero();

  planner_detail::Builder b(prim, cfg);
  b.start(start_pose);
  const auto& pts = waypoints.points;
  b.move(above(pts.front().point), cfg.approach_speed, zero, PhaseTag::Approach);

  switch (task) {
    case TaskKind::Wash: {
      const Vec3 f(0.0, 0.0, -cfg.wash_force);
      b.move(pressed(pts.front().point), cfg.stroke_speed, f, PhaseTag::Stroke);
      for (std::size_t i = 1; i < pts.size(); ++i) b.move(pressed(pts[i].point), cfg.stroke_speed, f, PhaseTag::Stroke);
      b.move(above(pts.back().point), cfg.stroke_speed, zero, PhaseTag::Lift);
      break;
    }
    case TaskKind::Rinse: {
      const Vec3 f(0.0, 0.0, -cfg.rinse_force);
      for (std::size_t i = 0; i + 1 < pts.size(); i += 2) {
        const Vec3& from = pts[i].point;
        const Vec3& to = pts[i + 1].point;
        for (int rep = 0; rep < 2; ++rep) {
          b.move(above(from), cfg.approach_speed, zero, PhaseTag::Lift);
          b.move(pressed(from), cfg.stroke_speed, f, PhaseTag::Stroke);
          b.move(pressed(to), cfg.stroke_speed, f, PhaseTag::Stroke);
          b.move(above(to), cfg.stroke_speed, zero, PhaseTag::Lift);
        }
      }
      break;
    }
    case TaskKind::Dry: {
      const Vec3 f(0.0, 0.0, -cfg.dry_force);
      for (std::size_t i = 0; i < pts.size(); ++i) {
        if (i > 0) b.move(above(pts[i].point), cfg.stroke_speed, zero, PhaseTag::Lift);
        b.move(pressed(pts[i].point), cfg.stroke_speed, f, PhaseTag::Pat);
        b.hold(cfg.pat_hold, f, PhaseTag::Pat);
        b.move(above(pts[i].point), cfg.stroke_speed, zero, PhaseTag::Lift);
      }
      break;
    }
    case TaskKind::FreeMotion:
      break;
  }
  return prim;
}

/// Fraction of region pixels swept by the tool footprint over the pressed
/// (Stroke/Pat) points of a primitive, with the footprint projected at each
/// point's depth and its length along image rows.
inline double footprint_sweep_coverage(const Region& region, const MotionPrimitive& prim, const CameraModel& camera,
                                       const ToolFootprint& footprint, const PrimitiveConfig& cfg) {
  const std::size_t area = region_area(region);
  if (area == 0) return 1.0;
  Region swept(region.width(), region.height());
  const Vec3 face_offset(0.0, 0.0, cfg.tool_reach - cfg.press_depth);
  for (const auto& p : prim.points) {
    if (p.phase != PhaseTag::Stroke && p.phase != PhaseTag::Pat) continue;
    const Vec3 uvd = camera.project(p.pose.position() - face_offset);
    if (!(uvd.z() > 0.0)) continue;
    const PixelFootprint px = to_pixels(footprint, camera, uvd.z());
    const int u0 = std::max(0, static_cast<int>(std::ceil(uvd.x() - 0.5 * px.width)));
    const int u1 = std::min(region.width() - 1, static_cast<int>(std::floor(uvd.x() + 0.5 * px.width)));
    const int v0 = std::max(0, static_cast<int>(std::ceil(uvd.y() - 0.5 * px.length)));
    const int v1 = std::min(region.height() - 1, static_cast<int>(std::floor(uvd.y() + 0.5 * px.length)));
    for (int v = v0; v <= v1; ++v)
      for (int u = u0; u <= u1; ++u) swept.at(u, v) = 1;
  }
  std::size_t hit = 0;
  for (std::size_t i = 0; i < region.size(); ++i)
    if (region[i] && swept[i]) ++hit;
  return static_cast<double>(hit) / static_cast<double>(area);
}

inline void write_primitive_csv(std::ostream& out, const MotionPrimitive& prim) {
  out << "t,x,y,z,qw,qx,qy,qz,fx,fy,fz,phase\n";
  char buf[512];
  for (const auto& p : prim.points) {
    const auto& x = p.pose.position();
    const auto& q = p.pose.orientation();
    std::snprintf(buf, sizeof(buf), "%.6f,%.6f,%.6f,%.6f,%.9f,%.9f,%.9f,%.9f,%.4f,%.4f,%.4f,", p.t, x.x(), x.y(), x.z(),
                  q.w(), q.x(), q.y(), q.z(), p.force.x(), p.force.y(), p.force.z());
    out << buf << to_string(p.phase) << '\n';
  }
}

}  // namespace rabbit
