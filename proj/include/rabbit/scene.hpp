#pragma once

#include <cstdint>
#include <cstdio>
#include <string>

#include "config.hpp"
#include "render.hpp"
#include "trial.hpp"

namespace rabbit {

// One generated benchmark scene. Hair is not modelled and is always false.
struct SceneSpec {
  int id = 0;
  int tone = 0;
  Coverage coverage = Coverage::None;
  int camera_pose = 0;
  bool hair = false;
  bool noise = false;
};

// Tone cycles fastest, then coverage, then camera pose.
inline SceneSpec scene_spec(int index, bool noise, int tones = static_cast<int>(kSkinTones.size())) {
  if (tones < 1 || tones > static_cast<int>(kSkinTones.size())) throw ConfigError("tones must be in 1..6");
  SceneSpec s;
  s.id = index;
  s.tone = index % tones;
  s.coverage = static_cast<Coverage>((index / tones) % kCoverageCount);
  s.camera_pose = (index / (tones * kCoverageCount)) % kCameraPresetCount;
  s.noise = noise;
  return s;
}

inline std::string scene_name(int id) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "scene_%04d", id);
  return buf;
}

inline RenderedScene generate_scene(const ScenarioConfig& cfg, const SceneSpec& spec, std::uint64_t seed) {
  LimbSurface limb = make_limb(cfg);
  XorShift64Star rng(trial_detail::mix(seed, 2 * static_cast<std::uint64_t>(spec.id)));
  apply_coverage(limb, spec.coverage, rng);
  const Vec3 center = 0.5 * (cfg.limb.proximal + cfg.limb.distal);
  const CameraModel camera = camera_preset(spec.camera_pose, Vec3(center.x(), center.y(), cfg.bed_height));
  RenderOptions opt;
  opt.tone = spec.tone;
  opt.bed_height = cfg.bed_height;
  opt.noise = cfg.noise;
  opt.noise.enabled = spec.noise;
  opt.noise.seed = trial_detail::mix(seed, 2 * static_cast<std::uint64_t>(spec.id) + 1);
  return render_rgbt(limb, camera, opt);
}

}  // namespace rabbit
