#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "controller.hpp"
#include "error.hpp"
#include "limb.hpp"
#include "perception.hpp"
#include "planner.hpp"
#include "render.hpp"
#include "robot.hpp"
#include "scrubby.hpp"
#include "sensor.hpp"
#include "task.hpp"

namespace rabbit {

using Json = nlohmann::ordered_json;

inline constexpr const char* kSchemaVersion = "rabbit-scenario/1";

// Every accepted key with its default value. User files may omit any key
// but may not introduce new ones.
inline constexpr const char* kDefaultScenarioJson = R"json({
  "schema_version": "rabbit-scenario/1",
  "seed": 7,
  "phases": ["wash", "rinse", "dry"],
  "limb": {
    "proximal": [0.45, -0.125, 0.04],
    "distal": [0.45, 0.125, 0.04],
    "radius": 0.04,
    "cells_axial": 50,
    "cells_around": 144,
    "initial_state": "dry",
    "initial_half_angle_deg": 40.0
  },
  "bed_height": 0.0,
  "camera": {
    "target": [0.45, 0.0, 0.0],
    "height": 0.6,
    "tilt_deg": 0.0,
    "width": 160,
    "height_px": 240,
    "focal": 320.0
  },
  "render": {
    "tone": 2,
    "noise": true,
    "rgb_sigma": 3.0,
    "thermal_sigma": 0.5
  },
  "segmentation": {
    "min_red_blue_spread": 15,
    "min_red": 45,
    "skin_gate": [28.0, 42.0],
    "soap_min_brightness": 0.85,
    "soap_max_saturation": 0.15,
    "water_band": [16.0, 26.0],
    "dry_band": [30.0, 40.0],
    "smooth": true
  },
  "robot": {
    "dh": [
      [0.36, 0.0, -1.5707963267948966, 0.0],
      [0.0, 0.0, 1.5707963267948966, 0.0],
      [0.42, 0.0, 1.5707963267948966, 0.0],
      [0.0, 0.0, -1.5707963267948966, 0.0],
      [0.40, 0.0, -1.5707963267948966, 0.0],
      [0.0, 0.0, 1.5707963267948966, 0.0],
      [0.126, 0.0, 0.0, 0.0]
    ],
    "q_min": [-2.9, -2.0, -2.9, -2.0, -2.9, -2.0, -3.0],
    "q_max": [2.9, 2.0, 2.9, 2.0, 2.9, 2.0, 3.0],
    "q_start": [0.328606, 0.621253, -0.406951, -1.979826, 0.407681, 0.620088, 1.224304],
    "inertia": [0.8, 0.8, 0.4, 0.4, 0.15, 0.1, 0.05],
    "viscous": [1.0, 1.0, 0.6, 0.6, 0.3, 0.2, 0.1],
    "coulomb": [0.3, 0.3, 0.2, 0.2, 0.1, 0.1, 0.05],
    "stiction": [0.45, 0.45, 0.3, 0.3, 0.15, 0.15, 0.08],
    "stribeck_velocity": 0.05,
    "link_mass": [4.0, 4.0, 3.0, 2.7, 1.7, 1.8, 0.3],
    "link_com": [[0.0, -0.03, 0.12], [0.0, 0.04, 0.0], [0.0, 0.03, -0.1], [0.0, -0.03, 0.0],
                 [0.0, 0.02, -0.1], [0.0, 0.0, 0.0], [0.0, 0.0, -0.02]],
    "torque_limit": [176.0, 176.0, 110.0, 110.0, 110.0, 40.0, 40.0]
  },
  "tool": {
    "plate_length": 0.10,
    "plate_width": 0.06,
    "spring_k": 300.0,
    "rest_length": 0.03,
    "max_compression": 0.02,
    "shear_limit": 0.01,
    "damping": 5.0,
    "mount_offset": 0.05,
    "friction_coefficient": 0.2,
    "lateral_stiffness": 400.0,
    "contact_tolerance": 0.015,
    "stop_stiffness_ratio": 100.0,
    "samples": [5, 7]
  },
  "gains": {
    "wash": {
      "kp": [800.0, 800.0, 800.0, 40.0, 40.0, 40.0],
      "kd": [60.0, 60.0, 60.0, 2.5, 2.5, 2.5],
      "ki": [0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
      "kf_p": [0.0, 0.0, 0.8],
      "kf_d": [0.0, 0.0, 0.08],
      "force_feedforward": true
    },
    "rinse": {
      "kp": [800.0, 800.0, 800.0, 40.0, 40.0, 40.0],
      "kd": [60.0, 60.0, 60.0, 2.5, 2.5, 2.5],
      "ki": [0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
      "kf_p": [0.0, 0.0, 0.8],
      "kf_d": [0.0, 0.0, 0.08],
      "force_feedforward": true
    },
    "dry": {
      "kp": [800.0, 800.0, 300.0, 40.0, 40.0, 40.0],
      "kd": [60.0, 60.0, 40.0, 2.5, 2.5, 2.5],
      "ki": [0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
      "kf_p": [0.0, 0.0, 0.6],
      "kf_d": [0.0, 0.0, 0.08],
      "force_feedforward": true
    },
    "free_motion": {
      "kp": [800.0, 800.0, 800.0, 40.0, 40.0, 40.0],
      "kd": [60.0, 60.0, 60.0, 2.5, 2.5, 2.5],
      "ki": [0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
      "kf_p": [0.0, 0.0, 0.0],
      "kf_d": [0.0, 0.0, 0.0],
      "force_feedforward": false
    }
  },
  "controller": {
    "wrench_limit": [40.0, 40.0, 40.0, 10.0, 10.0, 10.0],
    "derivative_cutoff_hz": 50.0,
    "contact_threshold": 0.5,
    "contact_hysteresis": 0.2
  },
  "friction_observer": {
    "enabled": true,
    "gain": [40.0, 40.0, 40.0, 40.0, 40.0, 40.0, 40.0],
    "clamp": [5.0, 5.0, 5.0, 5.0, 5.0, 5.0, 5.0],
    "leak_ratio": 0.1
  },
  "sensor": {
    "sigma": 0.05,
    "drift_rate": 0.0,
    "latency": 1
  },
  "primitive": {
    "stroke_speed": 0.03,
    "approach_speed": 0.08,
    "lift_height": 0.04,
    "pat_hold": 0.7,
    "press_depth": 0.01,
    "wash_force": 5.0,
    "rinse_force": 5.0,
    "dry_force": 3.0
  },
  "treatment": {
    "wash_band": [2.0, 8.0],
    "rinse_band": [2.0, 8.0],
    "dry_band": [1.0, 6.0],
    "soap_rate": 1.0,
    "rinse_rate": 1.0,
    "dry_absorption": 1.0,
    "rinse_wet_amount": 0.8,
    "spread_rate": 0.02,
    "spread_threshold": 0.5,
    "temperature_tau": 5.0
  },
  "timing": {
    "control_dt": 0.001,
    "ticks_per_reference": 14,
    "spread_every_ticks": 10,
    "perception_dead_time": 3.0
  }
})json";

struct LimbConfig {
  Vec3 proximal = Vec3::Zero();
  Vec3 distal = Vec3::Zero();
  double radius = 0.04;
  int cells_axial = 1;
  int cells_around = 3;
  FluidState initial_state = FluidState::Dry;
  double initial_half_angle_deg = 40.0;
};

struct CameraConfig {
  Vec3 target = Vec3::Zero();
  double height = 0.6;
  double tilt_deg = 0.0;
  int width = 160;
  int height_px = 240;
  double focal = 320.0;

  CameraModel model() const { return overhead_camera(target, height, tilt_deg * kPi / 180.0, width, height_px, focal); }
};

struct ObserverConfig {
  bool enabled = true;
  Vec7 gain = Vec7::Zero();
  Vec7 clamp = Vec7::Zero();
  double leak_ratio = 0.1;
};

struct TimingConfig {
  double control_dt = 0.001;
  int ticks_per_reference = 14;
  int spread_every_ticks = 10;
  double perception_dead_time = 3.0;
};

struct ScenarioConfig {
  std::string schema_version;
  std::uint64_t seed = 7;
  std::vector<TaskKind> phases;
  LimbConfig limb;
  double bed_height = 0.0;
  CameraConfig camera;
  int tone = 0;
  RenderNoise noise;
  SegParams segmentation;
  KinematicChain chain;
  DynamicsParams dynamics;
  Vec7 q_start = Vec7::Zero();
  ToolModel tool;
  GainSchedule gains;
  ControllerLimits limits;
  double contact_threshold = 0.5;
  double contact_hysteresis = 0.2;
  ObserverConfig observer;
  ForceSensorModel sensor;
  PrimitiveConfig primitive;
  TreatmentRules treatment;
  TimingConfig timing;
};

namespace config_detail {

inline std::string join(const std::string& path, const std::string& key) { return path.empty() ? key : path + "." + key; }

// Overlays `user` on `defaults`, rejecting keys the defaults do not know.
inline void merge_into(Json& defaults, const Json& user, const std::string& path) {
  if (!user.is_object()) throw ConfigError("'" + (path.empty() ? std::string("<root>") : path) + "' must be an object");
  for (auto it = user.begin(); it != user.end(); ++it) {
    const std::string where = join(path, it.key());
    if (!defaults.contains(it.key())) throw ConfigError("unknown key '" + where + "'");
    Json& slot = defaults[it.key()];
    if (slot.is_object()) {
      merge_into(slot, it.value(), where);
    } else {
      const bool both_numbers = slot.is_number() && it.value().is_number();
      if (!both_numbers && slot.type() != it.value().type())
        throw ConfigError("key '" + where + "' has the wrong type");
      slot = it.value();
    }
  }
}

inline double num(const Json& j, const std::string& path) {
  if (!j.is_number()) throw ConfigError("'" + path + "' must be a number");
  return j.get<double>();
}

inline int integer(const Json& j, const std::string& path) {
  if (!j.is_number_integer()) throw ConfigError("'" + path + "' must be an integer");
  return j.get<int>();
}

template <int N>
Eigen::Matrix<double, N, 1> vec(const Json& j, const std::string& path) {
  if (!j.is_array() || j.size() != static_cast<std::size_t>(N))
    throw ConfigError("'" + path + "' must be an array of " + std::to_string(N) + " numbers");
  Eigen::Matrix<double, N, 1> v;
  for (int i = 0; i < N; ++i) v[i] = num(j[static_cast<std::size_t>(i)], path);
  return v;
}

inline ForceBand band(const Json& j, const std::string& path) {
  const auto v = vec<2>(j, path);
  return {v[0], v[1]};
}

inline GainSet gain_set(const Json& j, const std::string& path) {
  GainSet g;
  g.kp = vec<6>(j.at("kp"), path + ".kp");
  g.kd = vec<6>(j.at("kd"), path + ".kd");
  g.ki = vec<6>(j.at("ki"), path + ".ki");
  g.kf_p = vec<3>(j.at("kf_p"), path + ".kf_p");
  g.kf_d = vec<3>(j.at("kf_d"), path + ".kf_d");
  g.force_feedforward = j.at("force_feedforward").get<bool>();
  return g;
}

inline TaskKind task(const std::string& name) {
  const auto t = parse_task(name);
  if (!t) throw ConfigError("unknown task '" + name + "'");
  return *t;
}

inline FluidState fluid_state(const std::string& s) {
  if (s == "dry") return FluidState::Dry;
  if (s == "soapy") return FluidState::Soapy;
  if (s == "wet") return FluidState::Wet;
  throw ConfigError("unknown fluid state '" + s + "'");
}

inline std::pair<int, int> line_column(const std::string& text, std::size_t byte) {
  int line = 1, col = 1;
  for (std::size_t i = 0; i < text.size() && i + 1 < byte; ++i) {
    if (text[i] == '\n') {
      ++line;
      col = 1;
    } else {
      ++col;
    }
  }
  return {line, col};
}

}  // namespace config_detail

inline Json default_scenario_json() { return Json::parse(kDefaultScenarioJson); }

inline Json parse_json_text(const std::string& text, const std::string& source) {
  try {
    return Json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    const auto [line, col] = config_detail::line_column(text, e.byte);
    throw ConfigError(source + ":" + std::to_string(line) + ":" + std::to_string(col) + ": malformed JSON");
  }
}

/// Merged view of defaults and user overrides, before typed conversion.
inline Json merge_scenario(const Json& user) {
  Json merged = default_scenario_json();
  config_detail::merge_into(merged, user, "");
  return merged;
}

inline ScenarioConfig scenario_from_json(const Json& user) {
  using namespace config_detail;
  const Json j = merge_scenario(user);
  ScenarioConfig c;
  c.schema_version = j.at("schema_version").get<std::string>();
  if (c.schema_version != kSchemaVersion)
    throw ConfigError("unsupported schema_version '" + c.schema_version + "' (expected " + kSchemaVersion + ")");
  if (!j.at("seed").is_number_unsigned()) throw ConfigError("'seed' must be a non-negative integer");
  c.seed = j.at("seed").get<std::uint64_t>();
  for (const auto& p : j.at("phases")) c.phases.push_back(task(p.get<std::string>()));

  const Json& limb = j.at("limb");
  c.limb.proximal = vec<3>(limb.at("proximal"), "limb.proximal");
  c.limb.distal = vec<3>(limb.at("distal"), "limb.distal");
  c.limb.radius = num(limb.at("radius"), "limb.radius");
  c.limb.cells_axial = integer(limb.at("cells_axial"), "limb.cells_axial");
  c.limb.cells_around = integer(limb.at("cells_around"), "limb.cells_around");
  c.limb.initial_state = fluid_state(limb.at("initial_state").get<std::string>());
  c.limb.initial_half_angle_deg = num(limb.at("initial_half_angle_deg"), "limb.initial_half_angle_deg");
  c.bed_height = num(j.at("bed_height"), "bed_height");

  const Json& cam = j.at("camera");
  c.camera.target = vec<3>(cam.at("target"), "camera.target");
  c.camera.height = num(cam.at("height"), "camera.height");
  c.camera.tilt_deg = num(cam.at("tilt_deg"), "camera.tilt_deg");
  c.camera.width = integer(cam.at("width"), "camera.width");
  c.camera.height_px = integer(cam.at("height_px"), "camera.height_px");
  c.camera.focal = num(cam.at("focal"), "camera.focal");
  c.camera.model().validate();

  const Json& render = j.at("render");
  c.tone = integer(render.at("tone"), "render.tone");
  if (c.tone < 0 || c.tone >= static_cast<int>(kSkinTones.size())) throw ConfigError("render.tone must lie in [0, 5]");
  c.noise.enabled = render.at("noise").get<bool>();
  c.noise.rgb_sigma = num(render.at("rgb_sigma"), "render.rgb_sigma");
  c.noise.thermal_sigma = num(render.at("thermal_sigma"), "render.thermal_sigma");

  const Json& seg = j.at("segmentation");
  c.segmentation.min_red_blue_spread = integer(seg.at("min_red_blue_spread"), "segmentation.min_red_blue_spread");
  c.segmentation.min_red = integer(seg.at("min_red"), "segmentation.min_red");
  const auto gate = vec<2>(seg.at("skin_gate"), "segmentation.skin_gate");
  c.segmentation.skin_gate_lo = gate[0];
  c.segmentation.skin_gate_hi = gate[1];
  c.segmentation.soap_min_brightness = num(seg.at("soap_min_brightness"), "segmentation.soap_min_brightness");
  c.segmentation.soap_max_saturation = num(seg.at("soap_max_saturation"), "segmentation.soap_max_saturation");
  const auto water = vec<2>(seg.at("water_band"), "segmentation.water_band");
  const auto dry = vec<2>(seg.at("dry_band"), "segmentation.dry_band");
  c.segmentation.water_lo = water[0];
  c.segmentation.water_hi = water[1];
  c.segmentation.dry_lo = dry[0];
  c.segmentation.dry_hi = dry[1];
  c.segmentation.smooth = seg.at("smooth").get<bool>();

  const Json& robot = j.at("robot");
  const Json& dh = robot.at("dh");
  if (!dh.is_array() || dh.size() != kJoints) throw ConfigError("robot.dh must list 7 links");
  for (int i = 0; i < kJoints; ++i) {
    const auto row = vec<4>(dh[static_cast<std::size_t>(i)], "robot.dh");
    c.chain.links[static_cast<std::size_t>(i)] = {row[0], row[1], row[2], row[3]};
  }
  c.chain.q_min = vec<7>(robot.at("q_min"), "robot.q_min");
  c.chain.q_max = vec<7>(robot.at("q_max"), "robot.q_max");
  c.q_start = vec<7>(robot.at("q_start"), "robot.q_start");
  c.dynamics.inertia = vec<7>(robot.at("inertia"), "robot.inertia");
  c.dynamics.viscous = vec<7>(robot.at("viscous"), "robot.viscous");
  c.dynamics.coulomb = vec<7>(robot.at("coulomb"), "robot.coulomb");
  c.dynamics.stiction = vec<7>(robot.at("stiction"), "robot.stiction");
  c.dynamics.stribeck_velocity = num(robot.at("stribeck_velocity"), "robot.stribeck_velocity");
  c.dynamics.link_mass = vec<7>(robot.at("link_mass"), "robot.link_mass");
  const Json& coms = robot.at("link_com");
  if (!coms.is_array() || coms.size() != kJoints) throw ConfigError("robot.link_com must list 7 points");
  for (int i = 0; i < kJoints; ++i)
    c.dynamics.link_com[static_cast<std::size_t>(i)] = vec<3>(coms[static_cast<std::size_t>(i)], "robot.link_com");
  c.dynamics.torque_limit = vec<7>(robot.at("torque_limit"), "robot.torque_limit");
  c.dynamics.validate();

  const Json& tool = j.at("tool");
  c.tool.plate_length = num(tool.at("plate_length"), "tool.plate_length");
  c.tool.plate_width = num(tool.at("plate_width"), "tool.plate_width");
  c.tool.spring_k = num(tool.at("spring_k"), "tool.spring_k");
  c.tool.rest_length = num(tool.at("rest_length"), "tool.rest_length");
  c.tool.max_compression = num(tool.at("max_compression"), "tool.max_compression");
  c.tool.shear_limit = num(tool.at("shear_limit"), "tool.shear_limit");
  c.tool.damping = num(tool.at("damping"), "tool.damping");
  c.tool.mount_offset = num(tool.at("mount_offset"), "tool.mount_offset");
  c.tool.friction_coefficient = num(tool.at("friction_coefficient"), "tool.friction_coefficient");
  c.tool.lateral_stiffness = num(tool.at("lateral_stiffness"), "tool.lateral_stiffness");
  c.tool.contact_tolerance = num(tool.at("contact_tolerance"), "tool.contact_tolerance");
  c.tool.stop_stiffness_ratio = num(tool.at("stop_stiffness_ratio"), "tool.stop_stiffness_ratio");
  const Json& samples = tool.at("samples");
  if (!samples.is_array() || samples.size() != 2) throw ConfigError("tool.samples must be [nx, ny]");
  c.tool.samples_x = integer(samples[0], "tool.samples");
  c.tool.samples_y = integer(samples[1], "tool.samples");
  c.tool.validate();

  std::map<TaskKind, GainSet> gains;
  for (auto it = j.at("gains").begin(); it != j.at("gains").end(); ++it)
    gains[task(it.key())] = gain_set(it.value(), "gains." + it.key());
  c.gains = GainSchedule(std::move(gains));

  const Json& ctl = j.at("controller");
  c.limits.wrench_limit = vec<6>(ctl.at("wrench_limit"), "controller.wrench_limit");
  c.limits.derivative_cutoff_hz = num(ctl.at("derivative_cutoff_hz"), "controller.derivative_cutoff_hz");
  c.contact_threshold = num(ctl.at("contact_threshold"), "controller.contact_threshold");
  c.contact_hysteresis = num(ctl.at("contact_hysteresis"), "controller.contact_hysteresis");
  if (!(c.limits.derivative_cutoff_hz > 0.0)) throw ConfigError("controller.derivative_cutoff_hz must be positive");

  const Json& obs = j.at("friction_observer");
  c.observer.enabled = obs.at("enabled").get<bool>();
  c.observer.gain = vec<7>(obs.at("gain"), "friction_observer.gain");
  c.observer.clamp = vec<7>(obs.at("clamp"), "friction_observer.clamp");
  c.observer.leak_ratio = num(obs.at("leak_ratio"), "friction_observer.leak_ratio");
  if ((c.observer.gain.array() < 0.0).any() || (c.observer.clamp.array() < 0.0).any() || c.observer.leak_ratio < 0.0)
    throw ConfigError("friction observer gains must be non-negative");

  const Json& sensor = j.at("sensor");
  c.sensor.sigma = num(sensor.at("sigma"), "sensor.sigma");
  c.sensor.drift_rate = num(sensor.at("drift_rate"), "sensor.drift_rate");
  c.sensor.latency = integer(sensor.at("latency"), "sensor.latency");

  const Json& prim = j.at("primitive");
  c.primitive.stroke_speed = num(prim.at("stroke_speed"), "primitive.stroke_speed");
  c.primitive.approach_speed = num(prim.at("approach_speed"), "primitive.approach_speed");
  c.primitive.lift_height = num(prim.at("lift_height"), "primitive.lift_height");
  c.primitive.pat_hold = num(prim.at("pat_hold"), "primitive.pat_hold");
  c.primitive.press_depth = num(prim.at("press_depth"), "primitive.press_depth");
  c.primitive.wash_force = num(prim.at("wash_force"), "primitive.wash_force");
  c.primitive.rinse_force = num(prim.at("rinse_force"), "primitive.rinse_force");
  c.primitive.dry_force = num(prim.at("dry_force"), "primitive.dry_force");
  c.primitive.tool_reach = c.tool.reach();
  c.primitive.tool_orientation = stroke_aligned_orientation(c.camera.model());

  const Json& tr = j.at("treatment");
  c.treatment.wash = band(tr.at("wash_band"), "treatment.wash_band");
  c.treatment.rinse = band(tr.at("rinse_band"), "treatment.rinse_band");
  c.treatment.dry = band(tr.at("dry_band"), "treatment.dry_band");
  c.treatment.soap_rate = num(tr.at("soap_rate"), "treatment.soap_rate");
  c.treatment.rinse_rate = num(tr.at("rinse_rate"), "treatment.rinse_rate");
  c.treatment.dry_absorption = num(tr.at("dry_absorption"), "treatment.dry_absorption");
  c.treatment.rinse_wet_amount = num(tr.at("rinse_wet_amount"), "treatment.rinse_wet_amount");
  c.treatment.spread_rate = num(tr.at("spread_rate"), "treatment.spread_rate");
  c.treatment.spread_threshold = num(tr.at("spread_threshold"), "treatment.spread_threshold");
  c.treatment.temperature_tau = num(tr.at("temperature_tau"), "treatment.temperature_tau");
  c.treatment.validate();

  const Json& tm = j.at("timing");
  c.timing.control_dt = num(tm.at("control_dt"), "timing.control_dt");
  c.timing.ticks_per_reference = integer(tm.at("ticks_per_reference"), "timing.ticks_per_reference");
  c.timing.spread_every_ticks = integer(tm.at("spread_every_ticks"), "timing.spread_every_ticks");
  c.timing.perception_dead_time = num(tm.at("perception_dead_time"), "timing.perception_dead_time");
  if (!(c.timing.control_dt > 0.0 && c.timing.control_dt <= 0.01) || c.timing.ticks_per_reference < 1 ||
      c.timing.spread_every_ticks < 1)
    throw ConfigError("invalid timing configuration");
  c.sensor.tick_period = c.timing.control_dt;
  c.sensor.validate();
  c.primitive.validate();
  return c;
}

inline ScenarioConfig default_scenario() { return scenario_from_json(Json::object()); }

inline ScenarioConfig load_scenario(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open config '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return scenario_from_json(parse_json_text(ss.str(), path.string()));
}

}  // namespace rabbit
