#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <string>
#include <string_view>

#include "error.hpp"
#include "geometry.hpp"
#include "robot.hpp"
#include "task.hpp"

namespace rabbit {

/// Diagonal task-space gains. Translational entries come first in the
/// 6-vectors (N/m, N s/m, N/(m s)), rotational entries last (N m/rad, ...).
struct GainSet {
  Vec6 kp = Vec6::Zero();
  Vec6 kd = Vec6::Zero();
  Vec6 ki = Vec6::Zero();
  Vec3 kf_p = Vec3::Zero();
  Vec3 kf_d = Vec3::Zero();
  // Adds the desired force to the force channel so the P term only corrects the residual.
  bool force_feedforward = true;

  void validate() const {
    if ((kp.array() < 0.0).any() || (kd.array() < 0.0).any() || (ki.array() < 0.0).any() ||
        (kf_p.array() < 0.0).any() || (kf_d.array() < 0.0).any())
      throw ConfigError("gains must be non-negative");
    if (!(kp.head<3>().array() > 0.0).all()) throw ConfigError("translational stiffness must be positive");
  }
};

class GainSchedule {
 public:
  GainSchedule() = default;
  explicit GainSchedule(std::map<TaskKind, GainSet> gains) : gains_(std::move(gains)) { validate(); }

  const GainSet& select(TaskKind task) const {
    auto it = gains_.find(task);
    if (it == gains_.end()) throw ConfigError("no gains configured for task '" + std::string(to_string(task)) + "'");
    return it->second;
  }

  bool contains(TaskKind task) const { return gains_.count(task) != 0; }

  void validate() const {
    for (const auto& [task, g] : gains_) g.validate();
    if (contains(TaskKind::Dry)) {
      const double dry_kz = select(TaskKind::Dry).kp[2];
      for (TaskKind stiff : {TaskKind::Wash, TaskKind::Rinse}) {
        if (contains(stiff) && !(dry_kz < select(stiff).kp[2]))
          throw ConfigError("dry stiffness must be strictly below wash/rinse stiffness");
      }
    }
  }

 private:
  std::map<TaskKind, GainSet> gains_;
};

inline const GainSet& select_gains(const GainSchedule& schedule, TaskKind task) { return schedule.select(task); }

struct ControllerLimits {
  // Task-wrench magnitude that sets the integral clamp (limit / ki).
  Vec6 wrench_limit = (Vec6() << 40, 40, 40, 10, 10, 10).finished();
  double derivative_cutoff_hz = 50.0;
};

struct ControllerState {
  Vec6 integral_error = Vec6::Zero();
  Vec6 prev_error = Vec6::Zero();
  Vec6 error_rate = Vec6::Zero();
  Vec3 prev_force_error = Vec3::Zero();
  Vec3 force_error_rate = Vec3::Zero();
  bool in_contact = false;
  Vec3 measured_force = Vec3::Zero();
  bool saturated = false;
  bool primed = false;
};

// First-difference derivative through a one-pole low-pass.
inline double lowpass_alpha(double dt, double cutoff_hz) {
  const double rc = 1.0 / (2.0 * kPi * cutoff_hz);
  return dt / (dt + rc);
}

/// Task-space PID with contact-triggered force priority on base z.
///
/// Errors follow desired - actual for both pose and force (force expressed
/// as the force the tool exerts on the environment), and the returned joint
/// torque J^T w drives both toward zero. While in contact the z row of the
/// pose PID is replaced by the force PD (plus optional feedforward) and the
/// z integral is frozen.
inline Vec7 task_torque(const GainSet& gains, ControllerState& state, const Mat67& jac, const Vec6& e_x,
                        const Vec3& e_f, const Vec3& f_desired, double dt,
                        const ControllerLimits& limits = ControllerLimits{}) {
  if (!(dt > 0.0)) throw ControllerFault("controller step must be positive");
  if (!jac.allFinite() || !e_x.allFinite() || !e_f.allFinite() || !f_desired.allFinite())
    throw ControllerFault("non-finite controller input");

  const double alpha = lowpass_alpha(dt, limits.derivative_cutoff_hz);
  if (state.primed) {
    state.error_rate += alpha * ((e_x - state.prev_error) / dt - state.error_rate);
    state.force_error_rate += alpha * ((e_f - state.prev_force_error) / dt - state.force_error_rate);
  }
  state.prev_error = e_x;
  state.prev_force_error = e_f;
  state.primed = true;

  if (!state.saturated) {
    for (int i = 0; i < 6; ++i) {
      if (i == 2 && state.in_contact) continue;
      if (gains.ki[i] <= 0.0) continue;
      const double bound = limits.wrench_limit[i] / gains.ki[i];
      state.integral_error[i] = std::clamp(state.integral_error[i] + e_x[i] * dt, -bound, bound);
    }
  }

  Vec6 w = gains.kp.cwiseProduct(e_x) + gains.kd.cwiseProduct(state.error_rate) +
           gains.ki.cwiseProduct(state.integral_error);
  if (state.in_contact) {
    w[2] = gains.kf_p[2] * e_f[2] + gains.kf_d[2] * state.force_error_rate[2];
    if (gains.force_feedforward) w[2] += f_desired[2];
  }
  return jac.transpose() * w;
}

/// Velocity observer on a friction-free nominal plant.
///
/// The nominal joint velocity integrates the known (gravity-compensated)
/// command; the friction estimate is L * inertia * (nominal - measured).
/// The nominal state leaks toward the measurement at leak_ratio * L so it
/// cannot run away when the estimate saturates.
struct FrictionObserverState {
  Vec7 nominal_dq = Vec7::Zero();
  Vec7 gain = Vec7::Zero();
  Vec7 clamp = Vec7::Constant(5.0);
  Vec7 tau_fr_nom = Vec7::Zero();
  double leak_ratio = 0.1;
  bool primed = false;
};

inline Vec7 friction_observer_update(FrictionObserverState& obs, const Vec7& tau_command, const Vec7& dq_measured,
                                     const Vec7& inertia, double dt) {
  if (!obs.primed) {
    obs.nominal_dq = dq_measured;
    obs.primed = true;
  }
  // Compare the prediction for this tick, then propagate it with this tick's command.
  const Vec7 mismatch = obs.nominal_dq - dq_measured;
  const Vec7 raw = obs.gain.cwiseProduct(inertia).cwiseProduct(mismatch);
  obs.tau_fr_nom = raw.cwiseMax(-obs.clamp).cwiseMin(obs.clamp);
  obs.nominal_dq += (tau_command.cwiseQuotient(inertia) - obs.leak_ratio * obs.gain.cwiseProduct(mismatch)) * dt;
  return obs.tau_fr_nom;
}

struct ResultantTorque {
  Vec7 tau = Vec7::Zero();
  bool saturated = false;
};

// tau_task + tau_fr_nom + g, clamped to the per-joint torque limits.
inline ResultantTorque resultant_torque(const Vec7& tau_task, const Vec7& tau_fr_nom, const Vec7& gravity,
                                        const Vec7& torque_limit) {
  ResultantTorque out;
  const Vec7 sum = tau_task + tau_fr_nom + gravity;
  if (!sum.allFinite()) throw ControllerFault("non-finite resultant torque");
  out.tau = sum.cwiseMax(-torque_limit).cwiseMin(torque_limit);
  out.saturated = (out.tau.array() != sum.array()).any();
  return out;
}

/// Normal-force contact detector with hysteresis on |f_z|.
class ContactDetector {
 public:
  ContactDetector(double threshold = 0.5, double hysteresis = 0.2) : threshold_(threshold), hysteresis_(hysteresis) {
    if (!(threshold_ > hysteresis_ && hysteresis_ > 0.0))
      throw ConfigError("contact detector requires threshold > hysteresis > 0");
  }

  bool update(const Vec3& measured_force) {
    const double fz = std::abs(measured_force.z());
    if (!in_contact_ && fz > threshold_) in_contact_ = true;
    else if (in_contact_ && fz < threshold_ - hysteresis_) in_contact_ = false;
    return in_contact_;
  }

  bool in_contact() const { return in_contact_; }
  void reset() { in_contact_ = false; }

 private:
  double threshold_;
  double hysteresis_;
  bool in_contact_ = false;
};

}  // namespace rabbit
