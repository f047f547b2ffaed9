#pragma once

#include <cmath>

#include <Eigen/Core>
#include <Eigen/Geometry>

namespace rabbit {

using Vec3 = Eigen::Vector3d;
using Vec6 = Eigen::Matrix<double, 6, 1>;
using Vec7 = Eigen::Matrix<double, 7, 1>;
using Mat3 = Eigen::Matrix3d;
using Mat6 = Eigen::Matrix<double, 6, 6>;
using Mat67 = Eigen::Matrix<double, 6, 7>;
using Quat = Eigen::Quaterniond;

inline constexpr double kPi = 3.14159265358979323846;

// Rotation vector (axis * angle) of a unit quaternion, angle in [0, pi].
inline Vec3 quat_log(const Quat& q_in) {
  Quat q = q_in.normalized();
  if (q.w() < 0.0) q.coeffs() = -q.coeffs();
  const Vec3 v = q.vec();
  const double s = v.norm();
  if (s < 1e-12) {
    // first-order: angle ~ 2 s, axis = v / s
    return 2.0 * v;
  }
  const double angle = 2.0 * std::atan2(s, q.w());
  return v * (angle / s);
}

inline Quat quat_exp(const Vec3& rotvec) {
  const double angle = rotvec.norm();
  if (angle < 1e-12) {
    Quat q(1.0, 0.5 * rotvec.x(), 0.5 * rotvec.y(), 0.5 * rotvec.z());
    return q.normalized();
  }
  return Quat(Eigen::AngleAxisd(angle, rotvec / angle));
}

/// Rigid transform: position in meters, orientation as unit quaternion.
/// Orientation is renormalized on construction and after composition.
class Pose6 {
 public:
  Pose6() : position_(Vec3::Zero()), orientation_(Quat::Identity()) {}
  Pose6(const Vec3& position, const Quat& orientation)
      : position_(position), orientation_(orientation.normalized()) {}

  static Pose6 identity() { return {}; }
  static Pose6 translation(double x, double y, double z) { return {Vec3(x, y, z), Quat::Identity()}; }
  static Pose6 rotation(const Vec3& axis, double angle) {
    return {Vec3::Zero(), Quat(Eigen::AngleAxisd(angle, axis.normalized()))};
  }

  const Vec3& position() const { return position_; }
  const Quat& orientation() const { return orientation_; }
  Mat3 rotation_matrix() const { return orientation_.toRotationMatrix(); }

  Vec3 apply(const Vec3& point) const { return position_ + orientation_ * point; }

  Pose6 inverse() const {
    const Quat qi = orientation_.conjugate();
    return {-(qi * position_), qi};
  }

 private:
  Vec3 position_;
  Quat orientation_;
};

/// a ∘ b: b expressed in a's frame.
inline Pose6 compose(const Pose6& a, const Pose6& b) {
  return {a.position() + a.orientation() * b.position(), a.orientation() * b.orientation()};
}

inline Pose6 inverse(const Pose6& p) { return p.inverse(); }

struct Wrench {
  Vec3 force = Vec3::Zero();
  Vec3 torque = Vec3::Zero();

  Vec6 as_vector() const {
    Vec6 w;
    w << force, torque;
    return w;
  }
  bool finite() const { return force.allFinite() && torque.allFinite(); }
};

struct PoseError {
  Vec3 translational = Vec3::Zero();
  Vec3 rotational = Vec3::Zero();

  Vec6 as_vector() const {
    Vec6 e;
    e << translational, rotational;
    return e;
  }
};

// translational = desired - actual; rotational = log(desired * actual^-1), base frame.
inline PoseError pose_error(const Pose6& desired, const Pose6& actual) {
  PoseError e;
  e.translational = desired.position() - actual.position();
  e.rotational = quat_log(desired.orientation() * actual.orientation().conjugate());
  return e;
}

// J^T w for the task Jacobian.
inline Vec7 jacobian_transpose_times(const Mat67& jac, const Vec6& w) { return jac.transpose() * w; }

}  // namespace rabbit
