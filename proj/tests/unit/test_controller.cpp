#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "rabbit/calibration.hpp"
#include "rabbit/config.hpp"
#include "rabbit/controller.hpp"
#include "rabbit/robot.hpp"
#include "rabbit/sensor.hpp"

using namespace rabbit;

namespace {

Mat67 padded_identity() {
  Mat67 j = Mat67::Zero();
  j.block<6, 6>(0, 0).setIdentity();
  return j;
}

GainSet translational_gains(double kp) {
  GainSet g;
  g.kp = Vec6::Constant(kp);
  return g;
}

}  // namespace

TEST(TaskTorque, ZeroErrorZeroTorque) {
  GainSet g = translational_gains(100.0);
  g.kd = Vec6::Constant(5.0);
  g.ki = Vec6::Constant(1.0);
  ControllerState s;
  const Vec7 tau = task_torque(g, s, padded_identity(), Vec6::Zero(), Vec3::Zero(), Vec3::Zero(), 1e-3);
  EXPECT_EQ(tau, Vec7::Zero());
}

TEST(TaskTorque, PositionErrorPushesTowardTarget) {
  // With e = desired - actual the stiffness term is +Kp e, so the first joint sees +10.
  const GainSet g = translational_gains(100.0);
  ControllerState s;
  Vec6 e = Vec6::Zero();
  e[0] = 0.1;
  const Vec7 tau = task_torque(g, s, padded_identity(), e, Vec3::Zero(), Vec3::Zero(), 1e-3);
  EXPECT_NEAR(tau[0], 10.0, 1e-12);
  for (int i = 1; i < kJoints; ++i) EXPECT_EQ(tau[i], 0.0);
}

TEST(TaskTorque, OneDofClosedLoopErrorShrinks) {
  // Prismatic-like 1-DoF: unit mass along x driven by the x row of J^T w.
  const GainSet g = translational_gains(100.0);
  ControllerState s;
  double x = 0.0, v = 0.0;
  const double target = 0.1, dt = 1e-3;
  const double e0 = std::abs(target - x);
  for (int k = 0; k < 50; ++k) {
    Vec6 e = Vec6::Zero();
    e[0] = target - x;
    const double f = task_torque(g, s, padded_identity(), e, Vec3::Zero(), Vec3::Zero(), dt)[0];
    v += f * dt;
    x += v * dt;
  }
  EXPECT_LT(std::abs(target - x), e0);
}

TEST(TaskTorque, ContactForceChannel) {
  GainSet g = translational_gains(100.0);
  g.kf_p = Vec3(0.0, 0.0, 0.8);
  g.force_feedforward = false;
  ControllerState s;
  s.in_contact = true;
  Vec6 e = Vec6::Zero();
  e[2] = 0.05;  // ignored in contact
  const Vec3 desired(0, 0, -5), measured(0, 0, -3);
  const Vec7 tau = task_torque(g, s, padded_identity(), e, desired - measured, desired, 1e-3);
  EXPECT_NEAR(tau[2], 0.8 * -2.0, 1e-12);
  EXPECT_NEAR(std::abs(tau[2]), 1.6, 1e-12);

  g.force_feedforward = true;
  ControllerState s2;
  s2.in_contact = true;
  const Vec7 tau_ff = task_torque(g, s2, padded_identity(), e, desired - measured, desired, 1e-3);
  EXPECT_NEAR(tau_ff[2], -1.6 - 5.0, 1e-12);
}

TEST(TaskTorque, IntegralClampedAndFrozenWhenSaturated) {
  GainSet g = translational_gains(1.0);
  g.ki = Vec6::Constant(10.0);
  ControllerLimits lim;
  ControllerState s;
  Vec6 e = Vec6::Constant(1.0);
  for (int k = 0; k < 100000; ++k) task_torque(g, s, padded_identity(), e, Vec3::Zero(), Vec3::Zero(), 1e-3, lim);
  EXPECT_NEAR(s.integral_error[0], lim.wrench_limit[0] / 10.0, 1e-12);
  const Vec6 frozen = s.integral_error;
  s.saturated = true;
  task_torque(g, s, padded_identity(), -e, Vec3::Zero(), Vec3::Zero(), 1e-3, lim);
  EXPECT_EQ(s.integral_error, frozen);
}

TEST(TaskTorque, RejectsNonFinite) {
  ControllerState s;
  Vec6 e = Vec6::Zero();
  e[1] = std::nan("");
  EXPECT_THROW(task_torque(translational_gains(1.0), s, padded_identity(), e, Vec3::Zero(), Vec3::Zero(), 1e-3),
               ControllerFault);
}

TEST(FrictionObserver, PerfectTrackingGivesZero) {
  FrictionObserverState obs;
  obs.gain = Vec7::Constant(20.0);
  const Vec7 inertia = Vec7::Ones();
  Vec7 dq = Vec7::Zero();
  const Vec7 tau = Vec7::Constant(0.3);
  for (int k = 0; k < 100; ++k) {
    const Vec7 est = friction_observer_update(obs, tau, dq, inertia, 1e-3);
    EXPECT_LT(est.norm(), 1e-12);
    dq += tau.cwiseQuotient(inertia) * 1e-3;  // frictionless plant
  }
}

TEST(FrictionObserver, DisabledGainGivesZero) {
  FrictionObserverState obs;
  const Vec7 inertia = Vec7::Ones();
  for (int k = 0; k < 100; ++k)
    EXPECT_EQ(friction_observer_update(obs, Vec7::Constant(3.0), Vec7::Zero(), inertia, 1e-3), Vec7::Zero());
}

TEST(FrictionObserver, BreaksStictionWithinHalfSecond) {
  const ScenarioConfig cfg = default_scenario();
  DynamicsParams p = cfg.dynamics;
  p.link_mass.setZero();
  const Plant plant(cfg.chain, p);
  FrictionObserverState obs;
  obs.gain = Vec7::Constant(20.0);
  obs.clamp = Vec7::Constant(5.0);
  Vec7 tau = Vec7::Zero();
  tau[0] = 0.5 * p.stiction[0];
  JointState s;
  double grown = 0.0;
  int breakaway = -1;
  for (int k = 0; k < 500 && breakaway < 0; ++k) {
    const Vec7 est = friction_observer_update(obs, tau, s.dq, p.inertia, 1e-3);
    grown = std::max(grown, est[0]);
    s = plant.step(s, tau + est, Vec7::Zero(), 1e-3, false);
    if (std::abs(s.dq[0]) >= kStictionVelocity) breakaway = k;
  }
  EXPECT_GT(grown, 0.0);
  EXPECT_GE(breakaway, 0) << "joint still stuck after 0.5 s";
}

TEST(ResultantTorque, Cases) {
  const Vec7 limit = Vec7::Constant(39.0);
  const ResultantTorque zero = resultant_torque(Vec7::Zero(), Vec7::Zero(), Vec7::Zero(), limit);
  EXPECT_EQ(zero.tau, Vec7::Zero());
  EXPECT_FALSE(zero.saturated);

  const ResultantTorque pass = resultant_torque(Vec7::Zero(), Vec7::Ones(), Vec7::Zero(), limit);
  EXPECT_EQ(pass.tau, Vec7::Ones());

  Vec7 big = Vec7::Zero();
  big[5] = 50.0;
  const ResultantTorque clamped = resultant_torque(big, Vec7::Zero(), Vec7::Zero(), limit);
  EXPECT_EQ(clamped.tau[5], 39.0);
  EXPECT_TRUE(clamped.saturated);
}

TEST(GainSchedule, DefaultOrderingAndSelection) {
  const ScenarioConfig cfg = default_scenario();
  const GainSet& wash = select_gains(cfg.gains, TaskKind::Wash);
  const GainSet& rinse = select_gains(cfg.gains, TaskKind::Rinse);
  const GainSet& dry = select_gains(cfg.gains, TaskKind::Dry);
  EXPECT_GT(wash.kp[2], dry.kp[2]);
  EXPECT_EQ(wash.kp, rinse.kp);
  EXPECT_EQ(wash.kd, rinse.kd);
  EXPECT_EQ(wash.ki, rinse.ki);
  EXPECT_EQ(wash.kf_p, rinse.kf_p);
  EXPECT_EQ(wash.kf_d, rinse.kf_d);
}

TEST(GainSchedule, UnknownTaskAndBadOrderingRejected) {
  GainSchedule only_wash({{TaskKind::Wash, translational_gains(100.0)}});
  EXPECT_THROW(only_wash.select(TaskKind::Dry), ConfigError);
  EXPECT_THROW(GainSchedule({{TaskKind::Wash, translational_gains(100.0)}, {TaskKind::Dry, translational_gains(100.0)}}),
               ConfigError);
}

TEST(ContactDetector, ThresholdAndHysteresis) {
  ContactDetector d(0.5, 0.2);
  EXPECT_FALSE(d.update(Vec3::Zero()));

  ContactDetector ramp(0.5, 0.2);
  int flipped = -1;
  for (int k = 0; k <= 100; ++k)
    if (ramp.update(Vec3(0, 0, k * 0.01)) && flipped < 0) flipped = k;
  EXPECT_EQ(flipped, 51);

  ContactDetector osc(0.5, 0.2);
  std::vector<bool> trace;
  for (int k = 0; k < 20; ++k) trace.push_back(osc.update(Vec3(0, 0, k % 2 ? 0.45 : 0.55)));
  for (bool b : trace) EXPECT_TRUE(b);
  EXPECT_TRUE(osc.update(Vec3(0, 0, 0.31)));
  EXPECT_FALSE(osc.update(Vec3(0, 0, 0.29)));
}

TEST(Calibration, ExactRecovery) {
  XorShift64Star rng(8);
  Eigen::MatrixXd a(3, 5);
  for (int i = 0; i < a.size(); ++i) a.data()[i] = rng.uniform(-1.0, 1.0);
  const Vec3 b(0.1, 0.2, -0.3);
  std::vector<CalibrationSample> samples;
  for (int n = 0; n < 50; ++n) {
    Eigen::VectorXd f(5);
    for (int j = 0; j < 5; ++j) f[j] = rng.uniform(-1.0, 1.0);
    samples.push_back({f, a * f + b});
  }
  const DigitCalibration cal = fit_digit_calibration(samples);
  EXPECT_LT((cal.A - a).cwiseAbs().maxCoeff(), 1e-8);
  EXPECT_LT((cal.b - b).cwiseAbs().maxCoeff(), 1e-8);
  EXPECT_LT(cal.residual_rms, 1e-8);
  EXPECT_EQ(cal.feature_count(), 5);
}

TEST(Calibration, NoisyResidualMatchesSigma) {
  XorShift64Star rng(9);
  Eigen::MatrixXd a = Eigen::MatrixXd::Random(3, 3);
  std::vector<CalibrationSample> samples;
  for (int n = 0; n < 500; ++n) {
    Eigen::VectorXd f(3);
    for (int j = 0; j < 3; ++j) f[j] = rng.uniform(-1.0, 1.0);
    Vec3 force = a * f;
    for (int i = 0; i < 3; ++i) force[i] += 0.05 * rng.gaussian();
    samples.push_back({f, force});
  }
  const DigitCalibration cal = fit_digit_calibration(samples);
  EXPECT_GE(cal.residual_rms, 0.04);
  EXPECT_LE(cal.residual_rms, 0.06);
}

TEST(Calibration, RankDeficiency) {
  std::vector<CalibrationSample> two(2, {Eigen::VectorXd::Ones(3), Vec3::Zero()});
  EXPECT_THROW(fit_digit_calibration(two), CalibrationError);
  std::vector<CalibrationSample> collinear;
  for (int n = 0; n < 10; ++n) {
    Eigen::VectorXd f(3);
    f << n, 2.0 * n, 3.0;
    collinear.push_back({f, Vec3::Zero()});
  }
  EXPECT_THROW(fit_digit_calibration(collinear), CalibrationError);
}

TEST(ForceSensor, ExactWhenIdeal) {
  ForceSensor s(ForceSensorModel{});
  for (int k = 0; k < 10; ++k) {
    const Vec3 f(k, -k, 2.0 * k);
    EXPECT_EQ(measure_force(s, f, k), f);
  }
}

TEST(ForceSensor, LatencyDelaysByTicks) {
  ForceSensorModel m;
  m.latency = 3;
  ForceSensor s(m);
  for (int k = 0; k < 20; ++k) {
    const Vec3 out = s.measure(Vec3(k, 0, 0), k);
    EXPECT_EQ(out.x(), k < 3 ? 0.0 : k - 3.0);
  }
}

TEST(ForceSensor, NoiseStatistics) {
  ForceSensorModel m;
  m.sigma = 0.1;
  m.seed = 77;
  ForceSensor s(m);
  double sum = 0.0, sq = 0.0;
  constexpr int n = 10000;
  for (int k = 0; k < n; ++k) {
    const double x = s.measure(Vec3::Zero(), k).x();
    sum += x;
    sq += x * x;
  }
  const double mean = sum / n;
  const double sd = std::sqrt(sq / n - mean * mean);
  EXPECT_GE(sd, 0.095);
  EXPECT_LE(sd, 0.105);
}

TEST(ForceSensor, DriftIsLinear) {
  ForceSensorModel m;
  m.drift_rate = 0.5;
  ForceSensor s(m);
  EXPECT_NEAR(s.measure(Vec3::Zero(), 2000).z(), 1.0, 1e-12);
}
