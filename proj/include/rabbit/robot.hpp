#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <string>
#include <utility>

#include "error.hpp"
#include "geometry.hpp"

namespace rabbit {

inline constexpr int kJoints = 7;
inline constexpr double kGravity = 9.81;
// Below this joint speed a joint is treated as stuck.
inline constexpr double kStictionVelocity = 1e-4;

// Standard Denavit-Hartenberg row: Rz(theta + offset) Tz(d) Tx(a) Rx(alpha).
struct DhLink {
  double d = 0.0;
  double a = 0.0;
  double alpha = 0.0;
  double theta_offset = 0.0;
};

struct KinematicChain {
  std::array<DhLink, kJoints> links{};
  Pose6 base;
  Pose6 tool_mount;
  Vec7 q_min = Vec7::Constant(-2.0 * kPi);
  Vec7 q_max = Vec7::Constant(2.0 * kPi);
};

struct DynamicsParams {
  Vec7 inertia = Vec7::Ones();
  Vec7 viscous = Vec7::Zero();
  Vec7 coulomb = Vec7::Zero();
  Vec7 stiction = Vec7::Zero();
  double stribeck_velocity = 0.05;
  // Point mass per link, located at link_com[i] in DH frame i.
  Vec7 link_mass = Vec7::Zero();
  std::array<Vec3, kJoints> link_com{};
  Vec7 torque_limit = Vec7::Constant(39.0);

  void validate() const {
    for (int i = 0; i < kJoints; ++i) {
      if (!(inertia[i] > 0.0)) throw ConfigError("joint inertia must be positive");
      if (coulomb[i] < 0.0 || stiction[i] < coulomb[i])
        throw ConfigError("friction requires stiction >= coulomb >= 0");
      if (viscous[i] < 0.0 || link_mass[i] < 0.0) throw ConfigError("negative viscous gain or link mass");
      if (!(torque_limit[i] > 0.0)) throw ConfigError("torque limits must be positive");
    }
    if (!(stribeck_velocity > 0.0)) throw ConfigError("stribeck velocity must be positive");
  }
};

struct JointState {
  Vec7 q = Vec7::Zero();
  Vec7 dq = Vec7::Zero();
  Vec7 tau_applied = Vec7::Zero();
};

inline Pose6 dh_transform(const DhLink& link, double q) {
  const double theta = q + link.theta_offset;
  const Quat rz(Eigen::AngleAxisd(theta, Vec3::UnitZ()));
  const Quat rx(Eigen::AngleAxisd(link.alpha, Vec3::UnitX()));
  const Vec3 p = rz * Vec3(link.a, 0.0, link.d);
  return {p, rz * rx};
}

// frames[0] = base, frames[i] = frame after joint i.
inline std::array<Pose6, kJoints + 1> joint_frames(const KinematicChain& chain, const Vec7& q) {
  std::array<Pose6, kJoints + 1> frames;
  frames[0] = chain.base;
  for (int i = 0; i < kJoints; ++i) frames[i + 1] = compose(frames[i], dh_transform(chain.links[i], q[i]));
  return frames;
}

inline Pose6 forward_kinematics(const KinematicChain& chain, const Vec7& q) {
  return compose(joint_frames(chain, q)[kJoints], chain.tool_mount);
}

// Geometric Jacobian of the tool mount: rows 0-2 linear, rows 3-5 angular, base frame.
inline Mat67 jacobian(const KinematicChain& chain, const Vec7& q) {
  const auto frames = joint_frames(chain, q);
  const Vec3 tip = compose(frames[kJoints], chain.tool_mount).position();
  Mat67 jac;
  for (int i = 0; i < kJoints; ++i) {
    const Vec3 axis = frames[i].orientation() * Vec3::UnitZ();
    const Vec3 origin = frames[i].position();
    jac.block<3, 1>(0, i) = axis.cross(tip - origin);
    jac.block<3, 1>(3, i) = axis;
  }
  return jac;
}

// Joint torques that statically hold the link point masses against gravity.
inline Vec7 gravity_torque(const KinematicChain& chain, const DynamicsParams& params, const Vec7& q) {
  const auto frames = joint_frames(chain, q);
  const Vec3 up_force_per_kg(0.0, 0.0, kGravity);
  Vec7 tau = Vec7::Zero();
  for (int k = 0; k < kJoints; ++k) {
    if (params.link_mass[k] == 0.0) continue;
    const Vec3 com = frames[k + 1].apply(params.link_com[k]);
    const Vec3 f = params.link_mass[k] * up_force_per_kg;
    for (int j = 0; j <= k; ++j) {
      const Vec3 axis = frames[j].orientation() * Vec3::UnitZ();
      tau[j] += axis.cross(com - frames[j].position()).dot(f);
    }
  }
  return tau;
}

// Resistive joint friction, subtracted from the net torque in the plant.
// Stuck joints (|dq| < kStictionVelocity) cancel tau_external up to the
// stiction level; moving joints see Coulomb + viscous + Stribeck excess.
inline Vec7 friction_torque(const DynamicsParams& params, const Vec7& dq, const Vec7& tau_external) {
  Vec7 f;
  for (int i = 0; i < kJoints; ++i) {
    const double v = dq[i];
    if (std::abs(v) < kStictionVelocity) {
      f[i] = std::clamp(tau_external[i], -params.stiction[i], params.stiction[i]);
    } else {
      const double sgn = v > 0.0 ? 1.0 : -1.0;
      const double ratio = v / params.stribeck_velocity;
      const double stribeck = (params.stiction[i] - params.coulomb[i]) * std::exp(-ratio * ratio);
      f[i] = sgn * (params.coulomb[i] + stribeck) + params.viscous[i] * v;
    }
  }
  return f;
}

/// Simulated arm: diagonal-inertia joint dynamics with gravity, friction and
/// an external contact load, integrated by semi-implicit Euler.
class Plant {
 public:
  Plant(KinematicChain chain, DynamicsParams params) : chain_(std::move(chain)), params_(std::move(params)) {
    params_.validate();
  }

  const KinematicChain& chain() const { return chain_; }
  const DynamicsParams& params() const { return params_; }

  /// tau_contact is the load torque from contact (-J^T * wrench on the tool).
  JointState step(const JointState& state, const Vec7& tau_command, const Vec7& tau_contact, double dt,
                  bool with_gravity = true) const {
    if (!(dt > 0.0 && dt <= 0.01)) throw ControllerFault("integration step outside (0, 0.01] s");
    if (!tau_command.allFinite() || !tau_contact.allFinite() || !state.q.allFinite() || !state.dq.allFinite())
      throw ControllerFault("non-finite joint state or torque");

    const Vec7 gravity = with_gravity ? gravity_torque(chain_, params_, state.q) : Vec7::Zero();
    const Vec7 net = tau_command - gravity - tau_contact;
    const Vec7 fric = friction_torque(params_, state.dq, net);

    JointState next = state;
    next.tau_applied = tau_command;
    for (int i = 0; i < kJoints; ++i) {
      const bool stuck = std::abs(state.dq[i]) < kStictionVelocity;
      const double ddq = (net[i] - fric[i]) / params_.inertia[i];
      double v = state.dq[i] + ddq * dt;
      if (stuck && std::abs(net[i]) <= params_.stiction[i]) v = 0.0;
      // Friction cannot reverse the motion within one step.
      if (!stuck && v * state.dq[i] < 0.0 && std::abs(net[i]) <= params_.stiction[i]) v = 0.0;
      next.dq[i] = v;
      next.q[i] = state.q[i] + v * dt;
      if (next.q[i] < chain_.q_min[i]) {
        next.q[i] = chain_.q_min[i];
        next.dq[i] = 0.0;
      } else if (next.q[i] > chain_.q_max[i]) {
        next.q[i] = chain_.q_max[i];
        next.dq[i] = 0.0;
      }
    }
    if (!next.q.allFinite() || !next.dq.allFinite()) throw ControllerFault("joint state diverged");
    return next;
  }

 private:
  KinematicChain chain_;
  DynamicsParams params_;
};

/// Cubic (zero end-velocity) joint-space point-to-point move.
struct CubicJointMove {
  Vec7 start = Vec7::Zero();
  Vec7 goal = Vec7::Zero();
  double duration = 1.0;

  Vec7 position(double t) const {
    const double s = std::clamp(t / duration, 0.0, 1.0);
    return start + (goal - start) * (3.0 * s * s - 2.0 * s * s * s);
  }
  Vec7 velocity(double t) const {
    const double s = std::clamp(t / duration, 0.0, 1.0);
    return (goal - start) * ((6.0 * s - 6.0 * s * s) / duration);
  }
};

}  // namespace rabbit
