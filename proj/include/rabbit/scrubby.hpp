#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <optional>
#include <vector>

#include <Eigen/Dense>

#include "error.hpp"
#include "geometry.hpp"
#include "limb.hpp"

namespace rabbit {

/// Compliant wiper: a top plate fixed to the gripper and a bottom plate
/// joined to it by four corner springs. Tool frame: x along the plate
/// length, y along its width, z from the top plate toward the bottom plate.
struct ToolModel {
  double plate_length = 0.10;
  double plate_width = 0.06;
  double spring_k = 300.0;         // N/m per spring
  double rest_length = 0.03;
  double max_compression = 0.02;
  double shear_limit = 0.01;
  double damping = 5.0;            // N s/m per spring
  double mount_offset = 0.05;      // end-effector origin to top plate, along tool z
  double friction_coefficient = 0.2;
  double lateral_stiffness = 400.0;  // N/m per spring column
  double contact_tolerance = 0.001;
  double stop_stiffness_ratio = 100.0;  // hard stop past max compression
  int samples_x = 5;
  int samples_y = 7;

  void validate() const {
    if (!(spring_k > 0.0 && shear_limit > 0.0 && plate_length > 0.0 && plate_width > 0.0))
      throw ConfigError("tool stiffness, shear limit and plate size must be positive");
    if (!(rest_length > max_compression && max_compression >= 0.0))
      throw ConfigError("tool requires rest length > max compression >= 0");
    if (damping < 0.0 || friction_coefficient < 0.0 || !(lateral_stiffness > 0.0) || contact_tolerance < 0.0)
      throw ConfigError("invalid tool damping, friction or tolerance");
    if (samples_x < 2 || samples_y < 2) throw ConfigError("tool needs at least 2x2 contact samples");
  }

  std::array<Eigen::Vector2d, 4> corners() const {
    const double hx = 0.5 * plate_length, hy = 0.5 * plate_width;
    return {Eigen::Vector2d(hx, hy), Eigen::Vector2d(-hx, hy), Eigen::Vector2d(-hx, -hy), Eigen::Vector2d(hx, -hy)};
  }

  // Top-plate pose for a given end-effector pose.
  Pose6 top_plate(const Pose6& ee) const { return compose(ee, Pose6::translation(0.0, 0.0, mount_offset)); }
  // Distance from the end-effector origin to the unloaded bottom plate face.
  double reach() const { return mount_offset + rest_length; }
};

struct ToolState {
  Pose6 top;
  Pose6 bottom;
  std::array<double, 4> compression{};  // clamped to [0, max_compression]
  Eigen::Vector2d shear = Eigen::Vector2d::Zero();
  // Bottom-plate plane in top-plate coordinates: compression(x, y) = h + a x + b y.
  Eigen::Vector3d plane = Eigen::Vector3d::Zero();
  bool in_contact = false;
};

struct ToolSolution {
  ToolState state;
  Wrench wrench;             // on the end effector, base frame, about its origin
  double normal_force = 0.0; // along -tool z, spring part plus damping
  int iterations = 0;
  bool converged = true;
  // Force and moment balance of springs against contact reactions on the bottom plate.
  double residual_force = 0.0;
  double residual_moment = 0.0;
  std::vector<Eigen::Vector3d> contact_points;  // (x, y, reaction) in top-plate coordinates
};

// Optional rate information for damping and shear drag.
struct ToolMotion {
  std::array<double, 4> previous_compression{};
  double dt = 0.0;
  Vec3 velocity = Vec3::Zero();  // end-effector linear velocity, base frame
};

namespace scrubby_detail {

struct Constraint {
  Eigen::Vector3d g;  // compression at (x, y) = g . (h, a, b)
  double rhs = 0.0;   // g . x >= rhs
  bool contact = false;
  Eigen::Vector2d xy = Eigen::Vector2d::Zero();
};

// Minimizes 0.5 x^T H x subject to g_i . x >= rhs_i by a primal active-set
// method started from a feasible point. H is diagonal positive definite.
struct QpResult {
  Eigen::Vector3d x = Eigen::Vector3d::Zero();
  std::vector<double> multipliers;
  int iterations = 0;
  bool converged = false;
};

inline QpResult solve_qp(const Eigen::Vector3d& hdiag, const std::vector<Constraint>& cons, int max_iter) {
  QpResult res;
  res.multipliers.assign(cons.size(), 0.0);
  Eigen::Vector3d x = Eigen::Vector3d::Zero();
  for (const auto& c : cons) x[0] = std::max(x[0], c.rhs);  // a = b = 0 lifts every sample uniformly

  std::vector<int> work;
  for (int it = 1; it <= max_iter; ++it) {
    res.iterations = it;
    const int m = static_cast<int>(work.size());
    Eigen::MatrixXd kkt = Eigen::MatrixXd::Zero(3 + m, 3 + m);
    Eigen::VectorXd rhs = Eigen::VectorXd::Zero(3 + m);
    kkt.topLeftCorner<3, 3>() = hdiag.asDiagonal();
    rhs.head<3>() = -(hdiag.cwiseProduct(x));
    for (int j = 0; j < m; ++j) {
      const auto& g = cons[static_cast<std::size_t>(work[static_cast<std::size_t>(j)])].g;
      kkt.block<3, 1>(0, 3 + j) = -g;
      kkt.block<1, 3>(3 + j, 0) = g.transpose();
    }
    const Eigen::VectorXd sol = kkt.fullPivLu().solve(rhs);
    const Eigen::Vector3d p = sol.head<3>();

    if (p.norm() < 1e-12) {
      // Stationary on the working set: check multiplier signs.
      int worst = -1;
      double worst_val = -1e-12;
      for (int j = 0; j < m; ++j) {
        if (sol[3 + j] < worst_val) {
          worst_val = sol[3 + j];
          worst = j;
        }
      }
      if (worst < 0) {
        for (int j = 0; j < m; ++j) res.multipliers[static_cast<std::size_t>(work[static_cast<std::size_t>(j)])] = sol[3 + j];
        res.x = x;
        res.converged = true;
        return res;
      }
      work.erase(work.begin() + worst);
      continue;
    }

    double alpha = 1.0;
    int blocking = -1;
    for (std::size_t i = 0; i < cons.size(); ++i) {
      if (std::find(work.begin(), work.end(), static_cast<int>(i)) != work.end()) continue;
      const double gp = cons[i].g.dot(p);
      if (gp >= -1e-15) continue;
      const double step = (cons[i].rhs - cons[i].g.dot(x)) / gp;
      if (step < alpha) {
        alpha = std::max(0.0, step);
        blocking = static_cast<int>(i);
      }
    }
    x += alpha * p;
    if (blocking >= 0) work.push_back(blocking);
  }
  res.x = x;
  return res;
}

}  // namespace scrubby_detail

/// Quasi-static bottom-plate equilibrium against a surface.
///
/// The bottom plate is massless; its pose relative to the top plate is the
/// plane of corner compressions (h, a, b) that minimizes spring energy while
/// keeping every plate sample point on or above the surface and every corner
/// spring at or beyond its tether length. Sample heights come from ray casts
/// along the tool z axis.
template <typename Surface>
ToolSolution solve_tool_equilibrium(const ToolModel& model, const Pose6& top_pose, const Surface& surface,
                                    const ToolMotion* motion = nullptr) {
  using scrubby_detail::Constraint;
  const Mat3 rot = top_pose.rotation_matrix();
  const Vec3 tool_z = rot.col(2);
  const auto corners = model.corners();

  std::vector<Constraint> cons;
  cons.reserve(static_cast<std::size_t>(model.samples_x * model.samples_y + 4));
  for (const auto& c : corners) cons.push_back({Eigen::Vector3d(1.0, c.x(), c.y()), 0.0, false, c});

  const double probe = model.rest_length + 0.05;
  for (int ix = 0; ix < model.samples_x; ++ix) {
    for (int iy = 0; iy < model.samples_y; ++iy) {
      const double x = model.plate_length * (static_cast<double>(ix) / (model.samples_x - 1) - 0.5);
      const double y = model.plate_width * (static_cast<double>(iy) / (model.samples_y - 1) - 0.5);
      const Vec3 origin = top_pose.apply(Vec3(x, y, 0.0));
      const auto t = surface.ray_cast(origin, tool_z);
      if (!t || *t > probe) continue;
      const double need = model.rest_length - *t;
      if (need <= 0.0) continue;
      cons.push_back({Eigen::Vector3d(1.0, x, y), need, true, Eigen::Vector2d(x, y)});
    }
  }

  ToolSolution out;
  out.state.top = top_pose;
  const bool any_contact = std::any_of(cons.begin(), cons.end(), [](const Constraint& c) { return c.contact; });
  if (!any_contact) {
    out.state.bottom = compose(top_pose, Pose6::translation(0.0, 0.0, model.rest_length));
    return out;
  }

  const double k = model.spring_k;
  Eigen::Vector3d hdiag = Eigen::Vector3d::Zero();
  for (const auto& c : corners) hdiag += k * Eigen::Vector3d(1.0, c.x() * c.x(), c.y() * c.y());
  const auto qp = scrubby_detail::solve_qp(hdiag, cons, 50);
  out.iterations = qp.iterations;
  out.converged = qp.converged;
  const Eigen::Vector3d plane = qp.x;

  // Spring forces push the top plate toward -z (back toward the gripper).
  std::array<double, 4> comp_raw{};
  std::array<double, 4> spring_force{};
  double total = 0.0;
  Vec3 torque_top = Vec3::Zero();  // about the top-plate origin, tool frame
  for (std::size_t i = 0; i < 4; ++i) {
    const auto& c = corners[i];
    const double comp = plane.dot(Eigen::Vector3d(1.0, c.x(), c.y()));
    comp_raw[i] = comp;
    double f = k * std::max(0.0, comp);
    if (comp > model.max_compression) f += k * model.stop_stiffness_ratio * (comp - model.max_compression);
    if (motion && motion->dt > 0.0 && comp > 0.0)
      f += model.damping * (comp - motion->previous_compression[i]) / motion->dt;
    f = std::max(0.0, f);
    spring_force[i] = f;
    out.state.compression[i] = std::clamp(comp, 0.0, model.max_compression);
    total += f;
    torque_top += Vec3(c.x(), c.y(), 0.0).cross(Vec3(0.0, 0.0, -f));
  }

  // Balance check uses the undamped spring forces against the QP reactions.
  Eigen::Vector3d spring_res = Eigen::Vector3d::Zero();   // (force, moment_x, moment_y) on bottom plate
  for (std::size_t i = 0; i < 4; ++i) {
    const auto& c = corners[i];
    const double fs = k * comp_raw[i];
    spring_res += Eigen::Vector3d(fs, c.y() * fs, -c.x() * fs);
  }
  Eigen::Vector3d contact_res = Eigen::Vector3d::Zero();
  for (std::size_t j = 0; j < cons.size(); ++j) {
    const double lam = qp.multipliers[j];
    if (lam == 0.0) continue;
    const auto& xy = cons[j].xy;
    contact_res += Eigen::Vector3d(lam, xy.y() * lam, -xy.x() * lam);
    if (cons[j].contact) out.contact_points.emplace_back(xy.x(), xy.y(), lam);
  }
  out.residual_force = std::abs(spring_res[0] - contact_res[0]);
  out.residual_moment = std::hypot(spring_res[1] - contact_res[1], spring_res[2] - contact_res[2]);

  // Shear: tangential drag mu * N against the plate's sliding direction.
  Vec3 drag_tool = Vec3::Zero();
  if (motion && model.friction_coefficient > 0.0) {
    const Vec3 v_tool = rot.transpose() * motion->velocity;
    const Eigen::Vector2d v_t(v_tool.x(), v_tool.y());
    const double speed = v_t.norm();
    constexpr double kSlipSpeed = 0.005;
    if (speed > 1e-9) {
      const double mag = model.friction_coefficient * total * std::min(1.0, speed / kSlipSpeed);
      const Eigen::Vector2d dir = -v_t / speed;
      drag_tool = Vec3(dir.x() * mag, dir.y() * mag, 0.0);
      Eigen::Vector2d offset = drag_tool.head<2>() / (4.0 * model.lateral_stiffness);
      if (offset.norm() > model.shear_limit) offset *= model.shear_limit / offset.norm();
      out.state.shear = offset;
    }
  }

  out.state.plane = plane;
  out.state.in_contact = total > 0.0;
  out.normal_force = total;
  const Eigen::Vector3d n_local = Eigen::Vector3d(plane[1], plane[2], 1.0).normalized();
  const Quat tilt = Quat::FromTwoVectors(Vec3::UnitZ(), n_local);
  out.state.bottom = compose(top_pose, Pose6(Vec3(out.state.shear.x(), out.state.shear.y(),
                                                  model.rest_length - plane[0]),
                                             tilt));

  // Drag acts at the bottom plate face; springs act at the top plate corners.
  const Vec3 drag_arm(out.state.shear.x(), out.state.shear.y(), model.rest_length - plane[0]);
  torque_top += drag_arm.cross(drag_tool);
  const Vec3 force_tool = Vec3(0.0, 0.0, -total) + drag_tool;
  // Move the moment from the top plate origin to the end-effector origin.
  const Vec3 mount_arm(0.0, 0.0, model.mount_offset);
  const Vec3 torque_ee_tool = torque_top + mount_arm.cross(force_tool);
  out.wrench.force = rot * force_tool;
  out.wrench.torque = rot * torque_ee_tool;
  return out;
}

/// Cells lying under the bottom plate and within the contact tolerance of its face.
inline std::vector<int> contact_patch(const ToolModel& model, const ToolState& state, const LimbSurface& surface) {
  std::vector<int> patch;
  if (!state.in_contact) return patch;
  const Pose6 top_inv = state.top.inverse();
  const Vec3 down = state.top.rotation_matrix().col(2);

  // Axial window spanned by the plate footprint.
  double s_lo = 1e9, s_hi = -1e9;
  for (const auto& c : model.corners()) {
    const double s = surface.axial_coordinate(state.top.apply(Vec3(c.x(), c.y(), model.rest_length)));
    s_lo = std::min(s_lo, s);
    s_hi = std::max(s_hi, s);
  }
  const double cell_len = surface.length() / surface.cells_axial();
  const int u0 = std::max(0, static_cast<int>(std::floor(s_lo / cell_len)) - 1);
  const int u1 = std::min(surface.cells_axial() - 1, static_cast<int>(std::floor(s_hi / cell_len)) + 1);

  const double hx = 0.5 * model.plate_length, hy = 0.5 * model.plate_width;
  for (int u = u0; u <= u1; ++u) {
    for (int v = 0; v < surface.cells_around(); ++v) {
      const int idx = surface.cell_index(u, v);
      if (surface.cell_normal(idx).dot(down) >= 0.0) continue;
      const Vec3 p = top_inv.apply(surface.cell_center(idx));
      const double x = p.x() - state.shear.x();
      const double y = p.y() - state.shear.y();
      if (std::abs(x) > hx || std::abs(y) > hy) continue;
      const double face = model.rest_length - state.plane.dot(Eigen::Vector3d(1.0, p.x(), p.y()));
      const double gap = p.z() - face;
      if (gap <= model.contact_tolerance && gap >= -model.contact_tolerance - 1e-3) patch.push_back(idx);
    }
  }
  return patch;
}

}  // namespace rabbit
