#include <gtest/gtest.h>

#include <sstream>

#include "rabbit/planner.hpp"

using namespace rabbit;

namespace {

SegMask mask_with_rect(int w, int h, int x0, int y0, int x1, int y1, std::uint8_t label) {
  SegMask m(w, h, kBackground);
  for (int y = y0; y <= y1; ++y)
    for (int x = x0; x <= x1; ++x) m.at(x, y) = label;
  return m;
}

// Looking straight down from 1 m.
CameraModel overhead_camera() {
  CameraModel cam;
  cam.camera_to_base = Pose6(Vec3(0.0, 0.0, 1.0), Quat(0.0, 1.0, 0.0, 0.0));
  return cam;
}

WaypointSet lifted_pair(const Vec3& a, const Vec3& b) {
  WaypointSet w;
  w.points.push_back({Eigen::Vector2d::Zero(), 0, a, true});
  w.points.push_back({Eigen::Vector2d::Zero(), 0, b, true});
  return w;
}

Pose6 home() { return Pose6(Vec3(0.4, 0.0, 0.6), Quat(0.0, 1.0, 0.0, 0.0)); }

bool same_position(const Pose6& a, const Pose6& b) { return (a.position() - b.position()).norm() < 1e-12; }

// Number of runs of consecutive points tagged `tag`.
int count_runs(const MotionPrimitive& prim, PhaseTag tag) {
  int runs = 0;
  bool inside = false;
  for (const auto& p : prim.points) {
    if (p.phase == tag && !inside) ++runs;
    inside = p.phase == tag;
  }
  return runs;
}

}  // namespace

TEST(TargetRegion, EmptyWhenLabelAbsent) {
  const SegMask m = mask_with_rect(40, 40, 5, 5, 20, 20, kDrySkin);
  EXPECT_EQ(region_area(target_region(m, TaskKind::Rinse)), 0u);
  EXPECT_EQ(region_area(target_region(m, TaskKind::FreeMotion)), 0u);
}

TEST(TargetRegion, SingleBlobKeptWhole) {
  const SegMask m = mask_with_rect(40, 40, 5, 5, 14, 14, kWater);
  const Region r = target_region(m, TaskKind::Dry);
  EXPECT_EQ(region_area(r), 100u);
  EXPECT_EQ(r.at(5, 5), 1);
  EXPECT_EQ(r.at(4, 5), 0);
}

TEST(TargetRegion, LargestComponentWins) {
  SegMask m = mask_with_rect(60, 60, 2, 2, 21, 21, kSoap);  // 400 px
  for (int x = 40; x < 50; ++x) m.at(x, 50) = kSoap;        // 10 px
  const Region r = target_region(m, TaskKind::Rinse);
  EXPECT_EQ(region_area(r), 400u);
  EXPECT_EQ(r.at(45, 50), 0);
}

TEST(TargetRegion, TinyComponentDiscarded) {
  const SegMask m = mask_with_rect(30, 30, 0, 0, 3, 5, kDrySkin);  // 24 px
  EXPECT_EQ(region_area(target_region(m, TaskKind::Wash)), 0u);
}

TEST(Waypoints, OneStripRectangle) {
  const SegMask m = mask_with_rect(100, 100, 10, 20, 29, 79, kDrySkin);
  const WaypointSet w = plan_waypoints(target_region(m, TaskKind::Wash), {30.0, 20.0}, TaskKind::Wash);
  ASSERT_EQ(w.size(), 2u);
  EXPECT_DOUBLE_EQ(w.points[0].pixel.x(), 19.5);
  EXPECT_DOUBLE_EQ(w.points[0].pixel.y(), 20.0);
  EXPECT_DOUBLE_EQ(w.points[1].pixel.y(), 79.0);
}

TEST(Waypoints, WashSerpentineOverTwoStrips) {
  const SegMask m = mask_with_rect(100, 100, 10, 20, 49, 79, kDrySkin);
  const WaypointSet w = plan_waypoints(target_region(m, TaskKind::Wash), {30.0, 20.0}, TaskKind::Wash);
  ASSERT_EQ(w.size(), 4u);
  const std::array<double, 4> cols{19.5, 19.5, 39.5, 39.5};
  const std::array<double, 4> rows{20.0, 79.0, 79.0, 20.0};
  for (std::size_t i = 0; i < 4; ++i) {
    EXPECT_DOUBLE_EQ(w.points[i].pixel.x(), cols[i]) << i;
    EXPECT_DOUBLE_EQ(w.points[i].pixel.y(), rows[i]) << i;
  }
  EXPECT_EQ(w.points[3].strip, 1);
}

TEST(Waypoints, RinseRunsEveryStripDownward) {
  const SegMask m = mask_with_rect(100, 100, 10, 20, 49, 79, kSoap);
  const WaypointSet w = plan_waypoints(target_region(m, TaskKind::Rinse), {30.0, 20.0}, TaskKind::Rinse);
  ASSERT_EQ(w.size(), 4u);
  EXPECT_LT(w.points[2].pixel.y(), w.points[3].pixel.y());
}

TEST(Waypoints, DryPatLatticeCount) {
  // Height 2.0 tool lengths at 0.8 length pitch needs ceil(2.5) = 3 pats.
  const SegMask m = mask_with_rect(100, 100, 10, 20, 29, 79, kWater);
  const WaypointSet w = plan_waypoints(target_region(m, TaskKind::Dry), {30.0, 20.0}, TaskKind::Dry);
  ASSERT_EQ(w.size(), 3u);
  EXPECT_DOUBLE_EQ(w.points[0].pixel.y(), 29.5);
  EXPECT_DOUBLE_EQ(w.points[1].pixel.y(), 49.5);
  EXPECT_DOUBLE_EQ(w.points[2].pixel.y(), 69.5);
}

TEST(Waypoints, EmptyRegionGivesNothing) {
  EXPECT_TRUE(plan_waypoints(Region(10, 10, 0), {3.0, 3.0}, TaskKind::Wash).empty());
}

TEST(BackProjection, PrincipalPointAndUnitOffset) {
  CameraModel cam;
  WaypointSet w;
  w.points.push_back({Eigen::Vector2d(cam.cx, cam.cy), 0, Vec3::Zero(), false});
  w.points.push_back({Eigen::Vector2d(cam.cx + cam.fx / 10.0, cam.cy), 0, Vec3::Zero(), false});
  cam.fx = 320.0;
  DepthImage depth(cam.width, cam.height, 1000);
  const WaypointSet out = lift_to_3d(w, depth, cam);
  EXPECT_LT((out.points[0].point - Vec3(0, 0, 1)).norm(), 1e-12);
  EXPECT_LT((out.points[1].point - Vec3(0.1, 0, 1)).norm(), 1e-12);
  EXPECT_LT((cam.back_project(cam.cx + cam.fx, cam.cy, 1.0) - Vec3(1, 0, 1)).norm(), 1e-12);
  const Vec3 uvd = cam.project(Vec3(0.25, -0.5, 2.0));
  EXPECT_LT((cam.back_project(uvd.x(), uvd.y(), uvd.z()) - Vec3(0.25, -0.5, 2.0)).norm(), 1e-12);
}

TEST(BackProjection, MedianFallbackOnHole) {
  CameraModel cam;
  DepthImage depth(cam.width, cam.height, 0);
  const int u = 80, v = 120;
  // Values 500, 510, ..., 540 in the 5x5 window, hole at the centre.
  const std::array<std::uint16_t, 5> vals{500, 510, 520, 530, 540};
  for (int k = 0; k < 5; ++k) depth.at(u - 2 + k, v - 2) = vals[static_cast<std::size_t>(k)];
  depth.at(u + 3, v) = 100;  // outside the window
  WaypointSet w;
  w.points.push_back({Eigen::Vector2d(u, v), 0, Vec3::Zero(), false});
  const WaypointSet out = lift_to_3d(w, depth, cam);
  EXPECT_NEAR(out.points[0].point.z(), 0.520, 1e-12);
}

TEST(BackProjection, NoValidDepthRaises) {
  CameraModel cam;
  DepthImage depth(cam.width, cam.height, 0);
  WaypointSet w;
  w.points.push_back({Eigen::Vector2d(10, 10), 0, Vec3::Zero(), false});
  EXPECT_THROW(lift_to_3d(w, depth, cam), PlanningError);
}

TEST(Primitive, DryHoldIsFortyNineTicks) {
  PrimitiveConfig cfg;
  const Vec3 p(0.45, 0.0, 0.40);
  WaypointSet w;
  w.points.push_back({Eigen::Vector2d::Zero(), 0, p, true});
  const MotionPrimitive prim = generate_primitive(TaskKind::Dry, w, cfg, home());
  const Pose6 pressed(p + Vec3(0, 0, cfg.tool_reach - cfg.press_depth), cfg.tool_orientation);
  int at_depth = 0;
  for (const auto& pt : prim.points)
    if (pt.phase == PhaseTag::Pat && same_position(pt.pose, pressed)) ++at_depth;
  EXPECT_EQ(at_depth, 1 + 49);  // arrival sample plus 0.7 s at 70 Hz
  for (const auto& pt : prim.points) {
    const Vec3 expected = pt.phase == PhaseTag::Pat ? Vec3(0, 0, -cfg.dry_force) : Vec3::Zero();
    EXPECT_EQ(pt.force, expected);
  }
}

TEST(Primitive, WashStrokeDuration) {
  PrimitiveConfig cfg;
  const Vec3 a(0.45, -0.03, 0.40), b(0.45, 0.03, 0.40);
  const MotionPrimitive prim = generate_primitive(TaskKind::Wash, lifted_pair(a, b), cfg, home());
  const Vec3 up(0, 0, cfg.tool_reach - cfg.press_depth);
  double t_a = -1.0, t_b = -1.0;
  for (const auto& pt : prim.points) {
    if (pt.phase != PhaseTag::Stroke) continue;
    if (t_a < 0 && (pt.pose.position() - (a + up)).norm() < 1e-12) t_a = pt.t;
    if ((pt.pose.position() - (b + up)).norm() < 1e-12) t_b = pt.t;
  }
  ASSERT_GE(t_a, 0.0);
  ASSERT_GE(t_b, 0.0);
  EXPECT_NEAR(t_b - t_a, 0.06 / 0.03, 0.5 / cfg.rate);
  for (std::size_t i = 1; i < prim.size(); ++i) EXPECT_NEAR(prim.points[i].t - prim.points[i - 1].t, 1.0 / 70.0, 1e-12);
  EXPECT_EQ(count_runs(prim, PhaseTag::Stroke), 1);
}

TEST(Primitive, RinseStrokesEachStripTwice) {
  PrimitiveConfig cfg;
  const MotionPrimitive prim =
      generate_primitive(TaskKind::Rinse, lifted_pair(Vec3(0.45, -0.03, 0.4), Vec3(0.45, 0.03, 0.4)), cfg, home());
  EXPECT_EQ(count_runs(prim, PhaseTag::Stroke), 2);
  // Both passes travel in +y.
  for (std::size_t i = 1; i < prim.size(); ++i) {
    if (prim.points[i].phase == PhaseTag::Stroke && prim.points[i - 1].phase == PhaseTag::Stroke) {
      EXPECT_GE(prim.points[i].pose.position().y(), prim.points[i - 1].pose.position().y() - 1e-15);
    }
  }
}

TEST(Primitive, ForceCapEnforced) {
  PrimitiveConfig cfg;
  cfg.wash_force = 20.5;
  EXPECT_THROW(generate_primitive(TaskKind::Wash, lifted_pair(Vec3::Zero(), Vec3::UnitY()), cfg, home()), ConfigError);
  cfg.wash_force = 20.0;
  EXPECT_NO_THROW(generate_primitive(TaskKind::Wash, lifted_pair(Vec3::Zero(), Vec3::UnitY() * 0.01), cfg, home()));
}

TEST(Primitive, EmptyWaypointsGiveEmptyPrimitive) {
  EXPECT_TRUE(generate_primitive(TaskKind::Wash, WaypointSet{}, PrimitiveConfig{}, home()).empty());
}

TEST(Primitive, CsvHeaderAndRows) {
  PrimitiveConfig cfg;
  const MotionPrimitive prim =
      generate_primitive(TaskKind::Wash, lifted_pair(Vec3(0.45, 0, 0.4), Vec3(0.45, 0.02, 0.4)), cfg, home());
  std::ostringstream os;
  write_primitive_csv(os, prim);
  std::istringstream is(os.str());
  std::string line;
  std::getline(is, line);
  EXPECT_EQ(line, "t,x,y,z,qw,qx,qy,qz,fx,fy,fz,phase");
  std::size_t rows = 0;
  while (std::getline(is, line)) ++rows;
  EXPECT_EQ(rows, prim.size());
}

TEST(Primitive, SweepCoversOneStripRegion) {
  const CameraModel cam = overhead_camera();
  const ToolFootprint fp;
  PrimitiveConfig cfg;
  const DepthImage depth(cam.width, cam.height, 600);
  const PixelFootprint px = to_pixels(fp, cam, 0.6);
  ASSERT_NEAR(px.width, 32.0, 1e-12);

  auto coverage_for = [&](int x1) {
    const SegMask m = mask_with_rect(cam.width, cam.height, 40, 60, x1, 179, kDrySkin);
    const Region r = target_region(m, TaskKind::Wash);
    const WaypointSet w = lift_to_3d(plan_waypoints(r, px, TaskKind::Wash), depth, cam);
    const MotionPrimitive prim = generate_primitive(TaskKind::Wash, w, cfg, home());
    return footprint_sweep_coverage(r, prim, cam, fp, cfg);
  };
  EXPECT_DOUBLE_EQ(coverage_for(71), 1.0);
  EXPECT_DOUBLE_EQ(coverage_for(103), 1.0);
}
