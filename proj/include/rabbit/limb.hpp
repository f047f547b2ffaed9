#pragma once

#include <algorithm>
#include <cstdint>
#include <cmath>
#include <optional>
#include <string_view>
#include <vector>

#include "error.hpp"
#include "geometry.hpp"
#include "task.hpp"

namespace rabbit {

enum class FluidState : std::uint8_t { Dry, Soapy, Wet };

inline std::string_view to_string(FluidState s) {
  switch (s) {
    case FluidState::Dry: return "dry";
    case FluidState::Soapy: return "soapy";
    case FluidState::Wet: return "wet";
  }
  return "unknown";
}

inline constexpr double kSkinTemperature = 36.6;
inline constexpr double kWaterTemperature = 20.0;
inline constexpr double kLatherTemperature = 32.0;

struct SurfaceCell {
  FluidState state = FluidState::Dry;
  double amount = 0.0;
  double temperature = kSkinTemperature;
  bool ever_soapy = false;
};

struct SurfaceHit {
  double signed_distance = 0.0;
  Vec3 normal = Vec3::UnitZ();
  int cell = 0;
};

/// Forearm stand-in: capsule around segment [proximal, distal] with a U x V
/// cell grid (U along the axis, V around it; v = 0 faces up).
class LimbSurface {
 public:
  LimbSurface(const Vec3& proximal, const Vec3& distal, double radius, int cells_axial, int cells_around)
      : a_(proximal), b_(distal), radius_(radius), nu_(cells_axial), nv_(cells_around) {
    const Vec3 d = b_ - a_;
    length_ = d.norm();
    if (!(length_ > 0.0) || !(radius_ > 0.0) || nu_ < 1 || nv_ < 3)
      throw ConfigError("invalid limb geometry");
    axis_ = d / length_;
    Vec3 up = Vec3::UnitZ() - axis_ * axis_.z();
    if (up.norm() < 1e-9) up = Vec3::UnitX() - axis_ * axis_.x();
    up_ = up.normalized();
    side_ = axis_.cross(up_);
    cells_.assign(static_cast<std::size_t>(nu_ * nv_), SurfaceCell{});
  }

  const Vec3& proximal() const { return a_; }
  const Vec3& distal() const { return b_; }
  const Vec3& axis() const { return axis_; }
  double radius() const { return radius_; }
  double length() const { return length_; }
  int cells_axial() const { return nu_; }
  int cells_around() const { return nv_; }
  int cell_count() const { return nu_ * nv_; }
  int cell_index(int u, int v) const { return u * nv_ + v; }
  int cell_u(int index) const { return index / nv_; }
  int cell_v(int index) const { return index % nv_; }

  SurfaceCell& cell(int index) { return cells_[static_cast<std::size_t>(index)]; }
  const SurfaceCell& cell(int index) const { return cells_[static_cast<std::size_t>(index)]; }
  std::vector<SurfaceCell>& cells() { return cells_; }
  const std::vector<SurfaceCell>& cells() const { return cells_; }

  // Angle of cell v's center, measured from the up direction around the axis.
  double cell_angle(int v) const { return 2.0 * kPi * v / nv_; }

  Vec3 cell_center(int index) const {
    const double s = (cell_u(index) + 0.5) / nu_;
    const double phi = cell_angle(cell_v(index));
    return a_ + axis_ * (s * length_) + radius_ * (std::cos(phi) * up_ + std::sin(phi) * side_);
  }

  Vec3 cell_normal(int index) const {
    const double phi = cell_angle(cell_v(index));
    return std::cos(phi) * up_ + std::sin(phi) * side_;
  }

  double axial_coordinate(const Vec3& p) const { return (p - a_).dot(axis_); }

  int cell_of(const Vec3& p) const {
    const double s = std::clamp(axial_coordinate(p) / length_, 0.0, 1.0);
    const int u = std::min(nu_ - 1, static_cast<int>(s * nu_));
    const Vec3 closest = a_ + axis_ * (std::clamp(axial_coordinate(p), 0.0, length_));
    const Vec3 r = p - closest;
    double phi = std::atan2(r.dot(side_), r.dot(up_));
    if (phi < 0.0) phi += 2.0 * kPi;
    const int v = static_cast<int>(std::floor(phi / (2.0 * kPi) * nv_ + 0.5)) % nv_;
    return cell_index(u, v);
  }

  SurfaceHit query(const Vec3& p) const {
    const double t = std::clamp(axial_coordinate(p), 0.0, length_);
    const Vec3 closest = a_ + axis_ * t;
    const Vec3 r = p - closest;
    const double dist = r.norm();
    SurfaceHit hit;
    hit.signed_distance = dist - radius_;
    hit.normal = dist > 1e-12 ? Vec3(r / dist) : up_;
    hit.cell = cell_of(p);
    return hit;
  }

  /// First intersection along origin + t * dir (dir need not be unit), t >= 0.
  /// Origins inside the capsule report t = 0.
  std::optional<double> ray_cast(const Vec3& origin, const Vec3& dir) const {
    if (query(origin).signed_distance <= 0.0) return 0.0;
    std::optional<double> best;
    auto consider = [&](double t) {
      if (t >= 0.0 && (!best || t < *best)) best = t;
    };
    // Cylinder body.
    const Vec3 oc = origin - a_;
    const Vec3 d_perp = dir - axis_ * dir.dot(axis_);
    const Vec3 o_perp = oc - axis_ * oc.dot(axis_);
    const double qa = d_perp.squaredNorm();
    if (qa > 1e-18) {
      const double qb = 2.0 * d_perp.dot(o_perp);
      const double qc = o_perp.squaredNorm() - radius_ * radius_;
      const double disc = qb * qb - 4.0 * qa * qc;
      if (disc >= 0.0) {
        const double t = (-qb - std::sqrt(disc)) / (2.0 * qa);
        const double s = (oc + dir * t).dot(axis_);
        if (s >= 0.0 && s <= length_) consider(t);
      }
    }
    // End caps.
    for (const Vec3* c : {&a_, &b_}) {
      const Vec3 oc2 = origin - *c;
      const double qa2 = dir.squaredNorm();
      const double qb2 = 2.0 * dir.dot(oc2);
      const double qc2 = oc2.squaredNorm() - radius_ * radius_;
      const double disc = qb2 * qb2 - 4.0 * qa2 * qc2;
      if (disc < 0.0) continue;
      const double t = (-qb2 - std::sqrt(disc)) / (2.0 * qa2);
      const double s = (origin + dir * t - a_).dot(axis_);
      if ((c == &a_ && s <= 0.0) || (c == &b_ && s >= length_)) consider(t);
    }
    return best;
  }

 private:
  Vec3 a_, b_;
  double radius_;
  int nu_, nv_;
  double length_ = 0.0;
  Vec3 axis_, up_, side_;
  std::vector<SurfaceCell> cells_;
};

inline SurfaceHit surface_contact_query(const LimbSurface& surface, const Vec3& point) { return surface.query(point); }

/// Infinite plane, used for flat-surface tool and force tests.
struct PlaneSurface {
  Vec3 point = Vec3::Zero();
  Vec3 normal = Vec3::UnitZ();

  std::optional<double> ray_cast(const Vec3& origin, const Vec3& dir) const {
    const double h = (origin - point).dot(normal);
    if (h <= 0.0) return 0.0;
    const double dn = dir.dot(normal);
    if (dn >= 0.0) return std::nullopt;
    return -h / dn;
  }
};

// ---------------------------------------------------------------------------

struct ForceBand {
  double min = 0.0;
  double max = 0.0;
  bool contains(double f) const { return f >= min && f <= max; }
};

struct TreatmentRules {
  ForceBand wash{2.0, 8.0};
  ForceBand rinse{2.0, 8.0};
  ForceBand dry{1.0, 6.0};
  double soap_rate = 1.0;        // per contact-second
  double rinse_rate = 1.0;       // per contact-second
  double dry_absorption = 1.0;   // per pat event
  double rinse_wet_amount = 0.8;
  double spread_rate = 0.02;     // per second per downhill neighbor
  double spread_threshold = 0.5;
  double temperature_tau = 5.0;  // s

  void validate() const {
    for (const ForceBand* b : {&wash, &rinse, &dry})
      if (!(b->min < b->max)) throw ConfigError("force band requires min < max");
    if (!(soap_rate > 0.0 && rinse_rate > 0.0 && dry_absorption > 0.0 && spread_rate > 0.0 && temperature_tau > 0.0))
      throw ConfigError("treatment rates must be positive");
    if (!(rinse_wet_amount > 0.0 && rinse_wet_amount <= 1.0)) throw ConfigError("rinse wet amount must lie in (0, 1]");
  }
};

/// Applies one contact interval (Wash/Rinse) or one pat event (Dry, dt unused).
/// Returns false when the force is outside the task band (no state change).
inline bool apply_treatment(LimbSurface& surface, const std::vector<int>& patch, TaskKind task, double normal_force,
                            double dt, const TreatmentRules& rules) {
  switch (task) {
    case TaskKind::Wash:
      if (!rules.wash.contains(normal_force)) return false;
      for (int i : patch) {
        auto& c = surface.cell(i);
        if (c.state != FluidState::Soapy) {
          c.state = FluidState::Soapy;
          c.amount = 0.0;
        }
        c.amount = std::min(1.0, c.amount + rules.soap_rate * dt);
        c.ever_soapy = true;
      }
      return true;
    case TaskKind::Rinse:
      if (!rules.rinse.contains(normal_force)) return false;
      for (int i : patch) {
        auto& c = surface.cell(i);
        if (c.state != FluidState::Soapy) continue;
        c.amount -= rules.rinse_rate * dt;
        if (c.amount <= 0.0) {
          c.state = FluidState::Wet;
          c.amount = rules.rinse_wet_amount;
          c.temperature = kWaterTemperature;
        }
      }
      return true;
    case TaskKind::Dry:
      if (!rules.dry.contains(normal_force)) return false;
      for (int i : patch) {
        auto& c = surface.cell(i);
        if (c.state != FluidState::Wet) continue;
        c.amount -= rules.dry_absorption;
        if (c.amount <= 1e-12) {
          c.state = FluidState::Dry;
          c.amount = 0.0;
        }
      }
      return true;
    case TaskKind::FreeMotion:
      return false;
  }
  return false;
}

inline double target_temperature(FluidState s) {
  switch (s) {
    case FluidState::Wet: return kWaterTemperature;
    case FluidState::Soapy: return kLatherTemperature;
    case FluidState::Dry: return kSkinTemperature;
  }
  return kSkinTemperature;
}

/// Downhill water creep around the circumference plus temperature relaxation.
/// Flows are computed from the pre-step state, so total water is conserved.
inline void fluid_spread(LimbSurface& surface, double dt, const TreatmentRules& rules) {
  const int nu = surface.cells_axial();
  const int nv = surface.cells_around();
  std::vector<double> delta(static_cast<std::size_t>(surface.cell_count()), 0.0);
  std::vector<char> wetted(delta.size(), 0);
  for (int u = 0; u < nu; ++u) {
    for (int v = 0; v < nv; ++v) {
      const int src = surface.cell_index(u, v);
      const auto& c = surface.cell(src);
      if (c.state != FluidState::Wet || c.amount <= rules.spread_threshold) continue;
      const double height = surface.cell_center(src).z();
      for (int nb_v : {(v + 1) % nv, (v + nv - 1) % nv}) {
        const int dst = surface.cell_index(u, nb_v);
        const auto& n = surface.cell(dst);
        if (n.state == FluidState::Soapy) continue;
        if (!(surface.cell_center(dst).z() < height - 1e-12)) continue;
        const double room = 1.0 - n.amount - delta[static_cast<std::size_t>(dst)];
        const double flow = std::min(rules.spread_rate * dt, std::max(0.0, room));
        if (flow <= 0.0) continue;
        delta[static_cast<std::size_t>(src)] -= flow;
        delta[static_cast<std::size_t>(dst)] += flow;
        wetted[static_cast<std::size_t>(dst)] = 1;
      }
    }
  }
  const double relax = 1.0 - std::exp(-dt / rules.temperature_tau);
  for (int i = 0; i < surface.cell_count(); ++i) {
    auto& c = surface.cell(i);
    const auto k = static_cast<std::size_t>(i);
    if (delta[k] != 0.0) {
      c.amount += delta[k];
      if (wetted[k] && c.state == FluidState::Dry) c.state = FluidState::Wet;
    }
    c.temperature += (target_temperature(c.state) - c.temperature) * relax;
  }
}

}  // namespace rabbit
