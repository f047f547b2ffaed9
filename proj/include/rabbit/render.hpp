#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <string>
#include <string_view>

#include "error.hpp"
#include "geometry.hpp"
#include "image.hpp"
#include "limb.hpp"
#include "planner.hpp"
#include "rng.hpp"

namespace rabbit {

// Six skin tones spanning the Fitzpatrick scale, lightest first.
inline constexpr std::array<Rgb, 6> kSkinTones{{
    {244, 208, 177},
    {231, 185, 151},
    {208, 152, 112},
    {175, 118, 80},
    {126, 81, 52},
    {80, 52, 36},
}};

inline constexpr Rgb kLatherColor{236, 236, 230};
inline constexpr Rgb kBedColor{70, 110, 170};
inline constexpr double kBedTemperature = 22.0;
inline constexpr double kWetDarkening = 0.9;

struct RenderNoise {
  bool enabled = false;
  double rgb_sigma = 3.0;      // 8-bit levels
  double thermal_sigma = 0.5;  // C
  std::uint64_t seed = 1;
};

struct RenderOptions {
  int tone = 0;  // index into kSkinTones
  double bed_height = 0.0;
  RenderNoise noise;
};

struct RenderedScene {
  RgbImage rgb;
  ThermalImage thermal;
  DepthImage depth;
  SegMask mask;
};

inline Rgb skin_color(int tone, FluidState state) {
  if (tone < 0 || tone >= static_cast<int>(kSkinTones.size())) throw ConfigError("skin tone index out of range");
  const Rgb base = kSkinTones[static_cast<std::size_t>(tone)];
  switch (state) {
    case FluidState::Soapy: return kLatherColor;
    case FluidState::Wet:
      return Rgb{static_cast<std::uint8_t>(std::lround(base.r * kWetDarkening)),
                 static_cast<std::uint8_t>(std::lround(base.g * kWetDarkening)),
                 static_cast<std::uint8_t>(std::lround(base.b * kWetDarkening))};
    case FluidState::Dry: break;
  }
  return base;
}

inline std::uint8_t state_label(FluidState s) {
  switch (s) {
    case FluidState::Soapy: return kSoap;
    case FluidState::Wet: return kWater;
    case FluidState::Dry: break;
  }
  return kDrySkin;
}

/// Ray-cast RGB, thermal, depth and ground-truth label images of the limb
/// lying on a horizontal bed.
inline RenderedScene render_rgbt(const LimbSurface& surface, const CameraModel& camera, const RenderOptions& opt) {
  camera.validate();
  const int w = camera.width, h = camera.height;
  RenderedScene out{RgbImage(w, h), ThermalImage(w, h), DepthImage(w, h), SegMask(w, h)};
  const PlaneSurface bed{Vec3(0.0, 0.0, opt.bed_height), Vec3::UnitZ()};
  const Vec3 origin = camera.camera_to_base.position();
  const Mat3 rot = camera.camera_to_base.rotation_matrix();
  XorShift64Star rng(opt.noise.seed);

  for (int v = 0; v < h; ++v) {
    for (int u = 0; u < w; ++u) {
      const Vec3 dir = rot * camera.ray(u, v);  // parameter along dir equals camera depth
      const auto t_limb = surface.ray_cast(origin, dir);
      const auto t_bed = bed.ray_cast(origin, dir);
      Rgb color{0, 0, 0};
      double temp = kBedTemperature;
      double depth = 0.0;
      std::uint8_t label = kBackground;
      if (t_limb && (!t_bed || *t_limb <= *t_bed)) {
        const auto& cell = surface.cell(surface.cell_of(origin + dir * *t_limb));
        color = skin_color(opt.tone, cell.state);
        temp = cell.temperature;
        depth = *t_limb;
        label = state_label(cell.state);
      } else if (t_bed) {
        color = kBedColor;
        depth = *t_bed;
      }
      if (opt.noise.enabled) {
        auto jitter = [&](std::uint8_t c) {
          return static_cast<std::uint8_t>(std::clamp(std::lround(c + opt.noise.rgb_sigma * rng.gaussian()), 0L, 255L));
        };
        color = Rgb{jitter(color.r), jitter(color.g), jitter(color.b)};
        temp += opt.noise.thermal_sigma * rng.gaussian();
      }
      out.rgb.at(u, v) = color;
      out.thermal.at(u, v) = celsius_to_centikelvin(temp);
      out.depth.at(u, v) = static_cast<std::uint16_t>(std::clamp(std::lround(depth * 1000.0), 0L, 65535L));
      out.mask.at(u, v) = label;
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Synthetic scene variation: camera presets and coverage categories.

enum class Coverage : std::uint8_t { None, PartialSoap, PartialWater, FullSoap, FullWater };
inline constexpr int kCoverageCount = 5;
inline constexpr int kCameraPresetCount = 6;

inline std::string_view to_string(Coverage c) {
  switch (c) {
    case Coverage::None: return "none";
    case Coverage::PartialSoap: return "partial_soap";
    case Coverage::PartialWater: return "partial_water";
    case Coverage::FullSoap: return "full_soap";
    case Coverage::FullWater: return "full_water";
  }
  return "unknown";
}

// Downward-looking camera centered over `target`; image rows run along base +y.
inline CameraModel overhead_camera(const Vec3& target, double height, double tilt_rad = 0.0, int width = 160,
                                   int height_px = 240, double focal = 320.0) {
  CameraModel cam;
  cam.fx = cam.fy = focal;
  cam.width = width;
  cam.height = height_px;
  cam.cx = 0.5 * width - 0.5;
  cam.cy = 0.5 * height_px - 0.5;
  const Quat down(0.0, 0.0, 1.0, 0.0);  // pi about base y: camera z -> -Z, camera y -> +Y
  const Quat tilt(Eigen::AngleAxisd(tilt_rad, Vec3::UnitX()));
  cam.camera_to_base = Pose6(target + Vec3(0.0, 0.0, height), down * tilt);
  return cam;
}

inline CameraModel camera_preset(int index, const Vec3& target) {
  struct Preset {
    double dx, dy, height, tilt_deg;
  };
  static constexpr std::array<Preset, kCameraPresetCount> presets{{
      {0.0, 0.0, 0.60, 0.0},
      {0.02, 0.0, 0.58, 0.0},
      {-0.02, 0.01, 0.62, 0.0},
      {0.0, -0.01, 0.60, 4.0},
      {0.01, 0.01, 0.64, -4.0},
      {-0.01, -0.01, 0.56, 2.0},
  }};
  const auto& p = presets[static_cast<std::size_t>(((index % kCameraPresetCount) + kCameraPresetCount) %
                                                   kCameraPresetCount)];
  return overhead_camera(target + Vec3(p.dx, p.dy, 0.0), p.height, p.tilt_deg * kPi / 180.0);
}

inline void set_cell_state(SurfaceCell& cell, FluidState state, double amount) {
  cell.state = state;
  cell.amount = state == FluidState::Dry ? 0.0 : amount;
  cell.temperature = target_temperature(state);
  if (state == FluidState::Soapy) cell.ever_soapy = true;
}

/// Paints a coverage category onto the surface. Partial categories cover a
/// seeded axial band of the limb.
inline void apply_coverage(LimbSurface& surface, Coverage coverage, XorShift64Star& rng) {
  for (auto& c : surface.cells()) set_cell_state(c, FluidState::Dry, 0.0);
  if (coverage == Coverage::None) return;
  const FluidState state =
      coverage == Coverage::PartialSoap || coverage == Coverage::FullSoap ? FluidState::Soapy : FluidState::Wet;
  const double amount = state == FluidState::Soapy ? 1.0 : 0.8;
  const bool full = coverage == Coverage::FullSoap || coverage == Coverage::FullWater;
  const int nu = surface.cells_axial();
  const int band = std::max(1, nu / 3 + static_cast<int>(rng.below(static_cast<std::uint64_t>(nu / 3 + 1))));
  const int u0 = static_cast<int>(rng.below(static_cast<std::uint64_t>(nu - band + 1)));
  for (int i = 0; i < surface.cell_count(); ++i) {
    const int u = surface.cell_u(i);
    if (full || (u >= u0 && u < u0 + band)) set_cell_state(surface.cell(i), state, amount);
  }
}

}  // namespace rabbit
