#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <ostream>
#include <set>
#include <string>
#include <vector>

#include "config.hpp"
#include "controller.hpp"
#include "error.hpp"
#include "limb.hpp"
#include "perception.hpp"
#include "planner.hpp"
#include "render.hpp"
#include "robot.hpp"
#include "scrubby.hpp"
#include "sensor.hpp"

namespace rabbit {

struct LoopSettings {
  double dt = 0.001;
  ControllerLimits limits;
  double contact_threshold = 0.5;
  double contact_hysteresis = 0.2;
  ObserverConfig observer;
  ForceSensorModel sensor;
};

struct TickOutcome {
  Pose6 ee;
  Vec3 force_true = Vec3::Zero();      // force the tool exerts on the body
  Vec3 force_measured = Vec3::Zero();
  double normal_force = 0.0;
  bool contact = false;
  bool saturated = false;
  Vec7 tau = Vec7::Zero();
  ToolState tool;
  int tool_iterations = 0;
};

/// One control tick per call: tool statics, force sensing, contact
/// detection, task-space control with friction compensation, and one plant
/// integration step.
template <typename Surface>
class ClosedLoop {
 public:
  ClosedLoop(const KinematicChain& chain, const DynamicsParams& dynamics, const ToolModel& tool,
             const Surface& surface, const LoopSettings& settings, const Vec7& q0)
      : plant_(chain, dynamics),
        tool_(tool),
        surface_(&surface),
        settings_(settings),
        sensor_(settings.sensor),
        detector_(settings.contact_threshold, settings.contact_hysteresis) {
    tool_.validate();
    state_.q = q0;
    observer_.gain = settings.observer.gain;
    observer_.clamp = settings.observer.clamp;
    observer_.leak_ratio = settings.observer.leak_ratio;
  }

  TickOutcome tick(const TrajectoryPoint& ref, const GainSet& gains) {
    const auto& chain = plant_.chain();
    const double dt = settings_.dt;
    TickOutcome out;
    out.ee = forward_kinematics(chain, state_.q);
    const Mat67 jac = jacobian(chain, state_.q);

    ToolMotion motion;
    motion.previous_compression = previous_compression_;
    motion.dt = ticks_ == 0 ? 0.0 : dt;
    motion.velocity = jac.topRows<3>() * state_.dq;
    const ToolSolution sol = solve_tool_equilibrium(tool_, tool_.top_plate(out.ee), *surface_, &motion);
    previous_compression_ = sol.state.compression;
    if (!sol.converged) ++unconverged_;
    out.tool = sol.state;
    out.tool_iterations = sol.iterations;
    out.normal_force = sol.normal_force;
    out.force_true = -sol.wrench.force;
    out.force_measured = sensor_.measure(out.force_true, ticks_);
    out.contact = detector_.update(out.force_measured);

    ctrl_.in_contact = out.contact;
    ctrl_.measured_force = out.force_measured;
    const Vec6 e_x = pose_error(ref.pose, out.ee).as_vector();
    const Vec3 e_f = ref.force - out.force_measured;
    const Vec7 tau_task = task_torque(gains, ctrl_, jac, e_x, e_f, ref.force, dt, settings_.limits);

    Vec7 tau_fr = Vec7::Zero();
    if (settings_.observer.enabled) {
      Vec6 w_meas = Vec6::Zero();
      w_meas.head<3>() = -out.force_measured;
      const Vec7 tau_known = tau_task + jac.transpose() * w_meas;
      tau_fr = friction_observer_update(observer_, tau_known, state_.dq, plant_.params().inertia, dt);
    }
    const Vec7 g = gravity_torque(chain, plant_.params(), state_.q);
    const ResultantTorque res = resultant_torque(tau_task, tau_fr, g, plant_.params().torque_limit);
    if (res.saturated && !ctrl_.saturated) ++saturation_events_;
    ctrl_.saturated = res.saturated;
    out.saturated = res.saturated;
    out.tau = res.tau;

    const Vec7 tau_contact = -(jac.transpose() * sol.wrench.as_vector());
    state_ = plant_.step(state_, res.tau, tau_contact, dt);
    ++ticks_;
    return out;
  }

  const JointState& state() const { return state_; }
  Pose6 ee_pose() const { return forward_kinematics(plant_.chain(), state_.q); }
  std::int64_t ticks() const { return ticks_; }
  int saturation_events() const { return saturation_events_; }
  int unconverged_solves() const { return unconverged_; }
  void set_surface(const Surface& surface) { surface_ = &surface; }

 private:
  Plant plant_;
  ToolModel tool_;
  const Surface* surface_;
  LoopSettings settings_;
  ForceSensor sensor_;
  ContactDetector detector_;
  JointState state_;
  ControllerState ctrl_;
  FrictionObserverState observer_;
  std::array<double, 4> previous_compression_{};
  std::int64_t ticks_ = 0;
  int saturation_events_ = 0;
  int unconverged_ = 0;
};

inline LoopSettings loop_settings(const ScenarioConfig& cfg, std::uint64_t seed) {
  LoopSettings s;
  s.dt = cfg.timing.control_dt;
  s.limits = cfg.limits;
  s.contact_threshold = cfg.contact_threshold;
  s.contact_hysteresis = cfg.contact_hysteresis;
  s.observer = cfg.observer;
  s.sensor = cfg.sensor;
  s.sensor.seed = seed * 0x9E3779B97F4A7C15ULL + 0x5851F42D4C957F2DULL;
  return s;
}

// ---------------------------------------------------------------------------

struct TickRecord {
  std::int64_t tick = 0;
  double t = 0.0;
  TaskKind task = TaskKind::FreeMotion;
  int ref_index = 0;
  PhaseTag tag = PhaseTag::Approach;
  Vec3 ee = Vec3::Zero();
  Vec3 ref = Vec3::Zero();
  Vec3 force_measured = Vec3::Zero();
  double normal_force = 0.0;
  double desired_normal = 0.0;
  bool contact = false;
  bool saturated = false;
  Vec7 tau = Vec7::Zero();
};

struct TrialEvent {
  double t = 0.0;
  std::string phase;
  std::string kind;
  std::string detail;
};

struct PhaseSummary {
  TaskKind task = TaskKind::FreeMotion;
  bool skipped = false;
  std::size_t region_pixels = 0;
  std::size_t waypoints = 0;
  std::size_t reference_points = 0;
  std::int64_t ticks = 0;
  std::int64_t ineffective_contact_ticks = 0;
};

struct CoverageReport {
  double coverage_pct = 0.0;
  double residual_soap_pct = 0.0;
  double residual_water_pct = 0.0;
  double peak_force_n = 0.0;
  double force_rms_err_n = 0.0;
  double duration_s = 0.0;
  int saturation_events = 0;
};

struct TrialOptions {
  std::vector<TaskKind> phases;  // empty: use the scenario's phases
  bool record_ticks = true;
};

struct TrialResult {
  std::vector<TickRecord> log;
  std::vector<TrialEvent> events;
  std::vector<PhaseSummary> phases;
  std::vector<MotionPrimitive> primitives;
  CoverageReport report;
  std::int64_t ticks = 0;
  LimbSurface surface;
};

inline LimbSurface make_limb(const ScenarioConfig& cfg) {
  LimbSurface limb(cfg.limb.proximal, cfg.limb.distal, cfg.limb.radius, cfg.limb.cells_axial, cfg.limb.cells_around);
  const double half = cfg.limb.initial_half_angle_deg * kPi / 180.0;
  for (int i = 0; i < limb.cell_count(); ++i) {
    const double up = std::clamp(limb.cell_normal(i).z(), -1.0, 1.0);
    const bool covered = std::acos(up) <= half + 1e-12;
    const FluidState s = covered ? cfg.limb.initial_state : FluidState::Dry;
    set_cell_state(limb.cell(i), s, s == FluidState::Soapy ? 1.0 : cfg.treatment.rinse_wet_amount);
  }
  return limb;
}

inline CoverageReport summarize_surface(const LimbSurface& limb) {
  CoverageReport r;
  int up = 0, soaped = 0, soap = 0, water = 0;
  for (int i = 0; i < limb.cell_count(); ++i) {
    const auto& c = limb.cell(i);
    if (limb.cell_normal(i).z() > 0.0) {
      ++up;
      if (c.ever_soapy) ++soaped;
    }
    if (c.state == FluidState::Soapy) ++soap;
    if (c.state == FluidState::Wet) ++water;
  }
  const double n = limb.cell_count();
  r.coverage_pct = up ? 100.0 * soaped / up : 0.0;
  r.residual_soap_pct = 100.0 * soap / n;
  r.residual_water_pct = 100.0 * water / n;
  return r;
}

/// Moves each waypoint along its image column onto the nearest region pixel,
/// so its depth sample lies on the target surface.
inline WaypointSet snap_to_region(WaypointSet set, const Region& region) {
  for (auto& w : set.points) {
    const int u = std::clamp(static_cast<int>(std::lround(w.pixel.x())), 0, region.width() - 1);
    const int v = static_cast<int>(std::lround(w.pixel.y()));
    int best = -1;
    for (int y = 0; y < region.height(); ++y)
      if (region.at(u, y) && (best < 0 || std::abs(y - v) < std::abs(best - v))) best = y;
    if (best >= 0) w.pixel.y() = best;
  }
  return set;
}

namespace trial_detail {

inline std::uint64_t mix(std::uint64_t seed, std::uint64_t salt) {
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (salt + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

inline double median_region_depth(const DepthImage& depth, const Region& region) {
  std::vector<double> d;
  for (std::size_t i = 0; i < region.size(); ++i)
    if (region[i] && depth[i] > 0) d.push_back(depth[i]);
  if (d.empty()) throw PlanningError("target region has no valid depth");
  std::nth_element(d.begin(), d.begin() + static_cast<std::ptrdiff_t>(d.size() / 2), d.end());
  return d[d.size() / 2] / 1000.0;
}

}  // namespace trial_detail

/// Perception-planning-execution sequence over the configured phases.
inline TrialResult run_trial(const ScenarioConfig& cfg, const TrialOptions& options = {}) {
  const std::vector<TaskKind> phases = options.phases.empty() ? cfg.phases : options.phases;
  TrialResult result{{}, {}, {}, {}, {}, 0, make_limb(cfg)};
  LimbSurface& limb = result.surface;
  const CameraModel camera = cfg.camera.model();
  const ToolFootprint footprint{cfg.tool.plate_length, cfg.tool.plate_width};
  const double dt = cfg.timing.control_dt;
  const int decimation = cfg.timing.ticks_per_reference;

  ClosedLoop<LimbSurface> loop(cfg.chain, cfg.dynamics, cfg.tool, limb, loop_settings(cfg, cfg.seed), cfg.q_start);
  double peak = 0.0;
  double err_sq = 0.0;
  std::int64_t err_n = 0;
  auto now = [&] { return static_cast<double>(loop.ticks()) * dt; };

  for (std::size_t phase_idx = 0; phase_idx < phases.size(); ++phase_idx) {
    const TaskKind task = phases[phase_idx];
    const std::string name(to_string(task));
    PhaseSummary summary;
    summary.task = task;
    const GainSet& gains = cfg.gains.select(task);

    RenderOptions ropt;
    ropt.tone = cfg.tone;
    ropt.bed_height = cfg.bed_height;
    ropt.noise = cfg.noise;
    ropt.noise.seed = trial_detail::mix(cfg.seed, phase_idx);
    const RenderedScene scene = render_rgbt(limb, camera, ropt);
    const SegMask mask = segment_rgbt(scene.rgb, scene.thermal, cfg.segmentation);
    const Region region = target_region(mask, task);
    summary.region_pixels = region_area(region);
    result.events.push_back({now(), name, "perception",
                             "region_px=" + std::to_string(summary.region_pixels) +
                                 " dead_time_s=" + std::to_string(cfg.timing.perception_dead_time)});

    MotionPrimitive prim;
    prim.task = task;
    if (summary.region_pixels == 0) {
      summary.skipped = true;
      const bool dry_visible = task == TaskKind::Wash &&
                               std::count(mask.data().begin(), mask.data().end(), std::uint8_t{kDrySkin}) > 0;
      result.events.push_back({now(), name, dry_visible ? "warning" : "skip",
                               dry_visible ? "dry skin visible but no plannable region" : "empty target region"});
    } else {
      const double depth_m = trial_detail::median_region_depth(scene.depth, region);
      const PixelFootprint px = to_pixels(footprint, camera, depth_m);
      WaypointSet wps = snap_to_region(plan_waypoints(region, px, task), region);
      wps = lift_to_3d(wps, scene.depth, camera);
      summary.waypoints = wps.size();
      prim = generate_primitive(task, wps, cfg.primitive, loop.ee_pose());
    }
    summary.reference_points = prim.size();

    const std::int64_t phase_start = loop.ticks();
    std::vector<int> pat_cells;
    double pat_force = 0.0;
    bool in_pat = false;
    auto finish_pat = [&] {
      if (!pat_cells.empty()) {
        std::sort(pat_cells.begin(), pat_cells.end());
        pat_cells.erase(std::unique(pat_cells.begin(), pat_cells.end()), pat_cells.end());
        apply_treatment(limb, pat_cells, TaskKind::Dry, pat_force, 0.0, cfg.treatment);
      }
      pat_cells.clear();
      pat_force = 0.0;
    };

    for (std::size_t idx = 0; idx < prim.points.size(); ++idx) {
      const TrajectoryPoint& ref = prim.points[idx];
      if (in_pat && ref.phase != PhaseTag::Pat) finish_pat();
      in_pat = ref.phase == PhaseTag::Pat;
      for (int k = 0; k < decimation; ++k) {
        const TickOutcome o = loop.tick(ref, gains);
        const double fn = o.normal_force;
        peak = std::max(peak, fn);
        const double f_des = -ref.force.z();
        if (f_des != 0.0 && fn > 0.0) {
          err_sq += (f_des - fn) * (f_des - fn);
          ++err_n;
        }
        if (o.tool.in_contact) {
          const auto patch = contact_patch(cfg.tool, o.tool, limb);
          if (task == TaskKind::Dry) {
            if (in_pat && cfg.treatment.dry.contains(fn)) {
              pat_cells.insert(pat_cells.end(), patch.begin(), patch.end());
              pat_force = fn;
            } else if (in_pat) {
              ++summary.ineffective_contact_ticks;
            }
          } else if (!apply_treatment(limb, patch, task, fn, dt, cfg.treatment)) {
            ++summary.ineffective_contact_ticks;
          }
        }
        if (loop.ticks() % cfg.timing.spread_every_ticks == 0)
          fluid_spread(limb, dt * cfg.timing.spread_every_ticks, cfg.treatment);
        if (options.record_ticks) {
          TickRecord r;
          r.tick = loop.ticks() - 1;
          r.t = r.tick * dt;
          r.task = task;
          r.ref_index = static_cast<int>(idx);
          r.tag = ref.phase;
          r.ee = o.ee.position();
          r.ref = ref.pose.position();
          r.force_measured = o.force_measured;
          r.normal_force = fn;
          r.desired_normal = f_des;
          r.contact = o.contact;
          r.saturated = o.saturated;
          r.tau = o.tau;
          result.log.push_back(r);
        }
      }
    }
    if (in_pat) finish_pat();
    summary.ticks = loop.ticks() - phase_start;
    result.events.push_back({now(), name, "complete",
                             "ticks=" + std::to_string(summary.ticks) +
                                 " ineffective_contact_ticks=" + std::to_string(summary.ineffective_contact_ticks)});
    result.phases.push_back(summary);
    result.primitives.push_back(std::move(prim));
  }
  if (loop.unconverged_solves() > 0)
    result.events.push_back({now(), "trial", "warning",
                             "tool equilibrium unconverged on " + std::to_string(loop.unconverged_solves()) + " ticks"});

  result.ticks = loop.ticks();
  result.report = summarize_surface(limb);
  result.report.peak_force_n = peak;
  result.report.force_rms_err_n = err_n ? std::sqrt(err_sq / static_cast<double>(err_n)) : 0.0;
  result.report.duration_s = static_cast<double>(result.ticks) * dt;
  result.report.saturation_events = loop.saturation_events();
  return result;
}

struct TickContract {
  bool ok = true;
  std::int64_t groups = 0;
  std::string first_violation;
};

/// Checks that the log holds contiguous ticks and that every reference
/// index is held for exactly `ticks_per_reference` consecutive ticks, in
/// order, within each phase.
inline TickContract check_tick_contract(const std::vector<TickRecord>& log, int ticks_per_reference) {
  TickContract c;
  auto fail = [&](std::size_t i, const std::string& why) {
    if (c.ok) c.first_violation = "tick " + std::to_string(log[i].tick) + ": " + why;
    c.ok = false;
  };
  std::size_t i = 0;
  while (i < log.size()) {
    const std::size_t start = i;
    while (i < log.size() && log[i].task == log[start].task && log[i].ref_index == log[start].ref_index) ++i;
    ++c.groups;
    if (static_cast<int>(i - start) != ticks_per_reference)
      fail(start, "reference held for " + std::to_string(i - start) + " ticks");
    if (start > 0 && log[start].ref_index != 0) {
      if (log[start].task != log[start - 1].task) fail(start, "phase does not start at reference 0");
      else if (log[start].ref_index != log[start - 1].ref_index + 1) fail(start, "reference index skipped");
    }
  }
  for (std::size_t k = 1; k < log.size(); ++k)
    if (log[k].tick != log[k - 1].tick + 1) fail(k, "non-contiguous tick");
  return c;
}

// ---------------------------------------------------------------------------

inline double round_to(double v, double quantum) { return std::round(v / quantum) * quantum; }

inline Json report_json(const CoverageReport& r) {
  Json j;
  j["coverage_pct"] = round_to(r.coverage_pct, 1e-6);
  j["residual_soap_pct"] = round_to(r.residual_soap_pct, 1e-6);
  j["residual_water_pct"] = round_to(r.residual_water_pct, 1e-6);
  j["peak_force_n"] = round_to(r.peak_force_n, 1e-6);
  j["force_rms_err_n"] = round_to(r.force_rms_err_n, 1e-6);
  j["duration_s"] = round_to(r.duration_s, 1e-6);
  j["saturation_events"] = r.saturation_events;
  return j;
}

inline void write_trial_csv(std::ostream& out, const std::vector<TickRecord>& log) {
  out << "tick,t,phase,ref_index,tag,x,y,z,ref_x,ref_y,ref_z,fx,fy,fz,f_normal,f_desired,contact,saturated,"
         "tau1,tau2,tau3,tau4,tau5,tau6,tau7\n";
  char buf[640];
  for (const auto& r : log) {
    const std::string phase(to_string(r.task));
    const std::string tag(to_string(r.tag));
    std::snprintf(buf, sizeof(buf),
                  "%lld,%.3f,%s,%d,%s,%.6f,%.6f,%.6f,%.6f,%.6f,%.6f,%.4f,%.4f,%.4f,%.4f,%.4f,%d,%d,"
                  "%.4f,%.4f,%.4f,%.4f,%.4f,%.4f,%.4f\n",
                  static_cast<long long>(r.tick), r.t, phase.c_str(), r.ref_index, tag.c_str(), r.ee.x(), r.ee.y(),
                  r.ee.z(), r.ref.x(), r.ref.y(), r.ref.z(), r.force_measured.x(), r.force_measured.y(),
                  r.force_measured.z(), r.normal_force, r.desired_normal, r.contact ? 1 : 0, r.saturated ? 1 : 0,
                  r.tau[0], r.tau[1], r.tau[2], r.tau[3], r.tau[4], r.tau[5], r.tau[6]);
    out << buf;
  }
}

inline void write_events_csv(std::ostream& out, const std::vector<TrialEvent>& events) {
  out << "t,phase,event,detail\n";
  for (const auto& e : events) out << e.t << ',' << e.phase << ',' << e.kind << ',' << e.detail << '\n';
}

}  // namespace rabbit
