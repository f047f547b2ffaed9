#pragma once

#include <cstdint>
#include <deque>

#include "error.hpp"
#include "geometry.hpp"
#include "rng.hpp"

namespace rabbit {

struct ForceSensorModel {
  double sigma = 0.0;       // N, per axis
  double drift_rate = 0.0;  // N/s, per axis
  int latency = 0;          // control ticks
  std::uint64_t seed = 1;
  double tick_period = 0.001;

  void validate() const {
    if (!(sigma >= 0.0) || latency < 0 || !(tick_period > 0.0)) throw ConfigError("invalid force sensor model");
  }
};

/// Delay line plus seeded Gaussian noise and a linear bias drift.
/// Ticks must be supplied in order, one call per control tick.
class ForceSensor {
 public:
  explicit ForceSensor(const ForceSensorModel& model) : model_(model), rng_(model.seed) { model_.validate(); }

  Vec3 measure(const Vec3& true_force, std::int64_t tick) {
    history_.push_back(true_force);
    Vec3 out = Vec3::Zero();
    if (static_cast<int>(history_.size()) > model_.latency) {
      out = history_.front();
      history_.pop_front();
    }
    out += Vec3::Constant(model_.drift_rate * static_cast<double>(tick) * model_.tick_period);
    if (model_.sigma > 0.0)
      for (int i = 0; i < 3; ++i) out[i] += model_.sigma * rng_.gaussian();
    return out;
  }

  const ForceSensorModel& model() const { return model_; }

 private:
  ForceSensorModel model_;
  XorShift64Star rng_;
  std::deque<Vec3> history_;
};

inline Vec3 measure_force(ForceSensor& sensor, const Vec3& true_force, std::int64_t tick) {
  return sensor.measure(true_force, tick);
}

}  // namespace rabbit
