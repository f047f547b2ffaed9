#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "error.hpp"
#include "image.hpp"
#include "rng.hpp"

namespace rabbit {

/// Thresholds for the rule-based RGB-thermal segmenter. Temperatures in C.
struct SegParams {
  // Skin chroma gate: R > G > B with at least this R-B spread and R within bounds.
  int min_red_blue_spread = 15;
  int min_red = 45;
  // Thermal skin gate (used when chroma fails, e.g. under white lather).
  double skin_gate_lo = 28.0;
  double skin_gate_hi = 42.0;
  // Lather: bright and nearly colorless.
  double soap_min_brightness = 0.85;
  double soap_max_saturation = 0.15;
  double water_lo = 16.0;
  double water_hi = 26.0;
  double dry_lo = 30.0;
  double dry_hi = 40.0;
  bool smooth = true;
};

inline bool skin_chroma(const Rgb& p, const SegParams& sp) {
  return p.r > p.g && p.g > p.b && (p.r - p.b) >= sp.min_red_blue_spread && p.r >= sp.min_red;
}

inline double band_distance(double t, double lo, double hi) {
  if (t < lo) return lo - t;
  if (t > hi) return t - hi;
  return 0.0;
}

inline std::uint8_t classify_pixel(const Rgb& p, double temp_c, const SegParams& sp) {
  const int mx = std::max({p.r, p.g, p.b});
  const int mn = std::min({p.r, p.g, p.b});
  const double brightness = mx / 255.0;
  const double saturation = mx == 0 ? 0.0 : static_cast<double>(mx - mn) / mx;
  if (brightness > sp.soap_min_brightness && saturation < sp.soap_max_saturation) return kSoap;

  const bool thermal_gate = temp_c >= sp.skin_gate_lo && temp_c <= sp.skin_gate_hi;
  if (!skin_chroma(p, sp) && !thermal_gate) return kBackground;
  if (temp_c >= sp.water_lo && temp_c <= sp.water_hi) return kWater;
  if (temp_c >= sp.dry_lo && temp_c <= sp.dry_hi) return kDrySkin;
  return band_distance(temp_c, sp.water_lo, sp.water_hi) < band_distance(temp_c, sp.dry_lo, sp.dry_hi) ? kWater
                                                                                                      : kDrySkin;
}

// One pass of 3x3 majority voting; ties keep the center label.
inline SegMask majority_smooth(const SegMask& in) {
  SegMask out(in.width(), in.height());
  for (int y = 0; y < in.height(); ++y) {
    for (int x = 0; x < in.width(); ++x) {
      std::array<int, kNumClasses> votes{};
      for (int dy = -1; dy <= 1; ++dy)
        for (int dx = -1; dx <= 1; ++dx)
          if (in.contains(x + dx, y + dy)) ++votes[in.at(x + dx, y + dy)];
      const std::uint8_t center = in.at(x, y);
      std::uint8_t best = center;
      for (std::uint8_t c = 0; c < kNumClasses; ++c)
        if (votes[c] > votes[best]) best = c;
      out.at(x, y) = best;
    }
  }
  return out;
}

/// Rule-based stand-in for a learned RGB-T segmentation model.
inline SegMask segment_rgbt(const RgbImage& rgb, const ThermalImage& thermal, const SegParams& params = {}) {
  if (!rgb.same_size(thermal)) throw ImageError("RGB and thermal images differ in size");
  SegMask mask(rgb.width(), rgb.height());
  for (std::size_t i = 0; i < rgb.size(); ++i)
    mask[i] = classify_pixel(rgb[i], centikelvin_to_celsius(thermal[i]), params);
  return params.smooth ? majority_smooth(mask) : mask;
}

// ---------------------------------------------------------------------------

struct IoUCounts {
  std::array<std::uint64_t, kNumClasses> intersection{};
  std::array<std::uint64_t, kNumClasses> union_{};

  IoUCounts& operator+=(const IoUCounts& o) {
    for (int c = 0; c < kNumClasses; ++c) {
      intersection[c] += o.intersection[c];
      union_[c] += o.union_[c];
    }
    return *this;
  }
};

struct IoUReport {
  std::array<double, kNumClasses> per_class{};
  std::array<bool, kNumClasses> defined{};
  double miou = 0.0;
};

inline IoUCounts iou_counts(const SegMask& pred, const SegMask& truth) {
  if (!pred.same_size(truth)) throw ImageError("prediction and ground truth differ in size");
  IoUCounts counts;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const auto p = pred[i];
    const auto t = truth[i];
    if (p == t) {
      ++counts.intersection[p];
      ++counts.union_[p];
    } else {
      ++counts.union_[p];
      ++counts.union_[t];
    }
  }
  return counts;
}

// Classes absent from both masks are undefined and excluded from the mean.
inline IoUReport iou_report(const IoUCounts& counts) {
  IoUReport r;
  double sum = 0.0;
  int n = 0;
  for (int c = 0; c < kNumClasses; ++c) {
    r.defined[c] = counts.union_[c] > 0;
    if (!r.defined[c]) continue;
    r.per_class[c] = static_cast<double>(counts.intersection[c]) / static_cast<double>(counts.union_[c]);
    sum += r.per_class[c];
    ++n;
  }
  r.miou = n > 0 ? sum / n : 0.0;
  return r;
}

inline IoUReport iou(const SegMask& pred, const SegMask& truth) { return iou_report(iou_counts(pred, truth)); }

// ---------------------------------------------------------------------------

template <typename Id>
struct DatasetSplit {
  std::vector<Id> train;
  std::vector<Id> val;
  std::vector<Id> test;
};

/// Seeded Fisher-Yates shuffle, then 8:1:1 by floor with the remainder in train.
template <typename Id>
DatasetSplit<Id> split_dataset(std::vector<Id> ids, std::uint64_t seed) {
  XorShift64Star rng(seed);
  for (std::size_t i = ids.size(); i > 1; --i) {
    const auto j = static_cast<std::size_t>(rng.below(i));
    std::swap(ids[i - 1], ids[j]);
  }
  const std::size_t n = ids.size();
  const std::size_t n_val = n / 10;
  const std::size_t n_test = n / 10;
  const std::size_t n_train = n - n_val - n_test;
  DatasetSplit<Id> split;
  split.train.assign(ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(n_train));
  split.val.assign(ids.begin() + static_cast<std::ptrdiff_t>(n_train),
                   ids.begin() + static_cast<std::ptrdiff_t>(n_train + n_val));
  split.test.assign(ids.begin() + static_cast<std::ptrdiff_t>(n_train + n_val), ids.end());
  return split;
}

}  // namespace rabbit
