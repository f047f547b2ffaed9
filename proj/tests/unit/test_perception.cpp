#include <gtest/gtest.h>

#include <set>
#include <sstream>

#include "rabbit/config.hpp"
#include "rabbit/image.hpp"
#include "rabbit/perception.hpp"
#include "rabbit/render.hpp"
#include "rabbit/scene.hpp"
#include "rabbit/trial.hpp"

using namespace rabbit;

namespace {

LimbSurface default_limb() {
  const ScenarioConfig cfg = default_scenario();
  LimbSurface limb = make_limb(cfg);
  for (auto& c : limb.cells()) set_cell_state(c, FluidState::Dry, 0.0);
  return limb;
}

CameraModel default_camera() { return default_scenario().camera.model(); }

}  // namespace

TEST(Segmenter, UniformWarmSkinIsDrySkin) {
  RgbImage rgb(20, 10, kSkinTones[2]);
  ThermalImage th(20, 10, celsius_to_centikelvin(36.6));
  const SegMask m = segment_rgbt(rgb, th);
  for (auto v : m.data()) EXPECT_EQ(v, kDrySkin);
}

TEST(Segmenter, CoolSkinIsWater) {
  for (const Rgb& tone : kSkinTones) {
    RgbImage rgb(12, 12, tone);
    ThermalImage th(12, 12, celsius_to_centikelvin(20.0));
    const SegMask m = segment_rgbt(rgb, th);
    for (auto v : m.data()) EXPECT_EQ(v, kWater);
  }
}

TEST(Segmenter, LatherBlobIsSoapAtAnyTemperature) {
  for (double temp : {20.0, 32.0, 36.6}) {
    RgbImage rgb(30, 30, kSkinTones[4]);
    ThermalImage th(30, 30, celsius_to_centikelvin(36.6));
    for (int y = 10; y < 20; ++y)
      for (int x = 10; x < 20; ++x) {
        rgb.at(x, y) = kLatherColor;
        th.at(x, y) = celsius_to_centikelvin(temp);
      }
    SegParams raw;
    raw.smooth = false;
    const SegMask m = segment_rgbt(rgb, th, raw);
    for (int y = 0; y < 30; ++y)
      for (int x = 0; x < 30; ++x) {
        const bool inside = x >= 10 && x < 20 && y >= 10 && y < 20;
        EXPECT_EQ(m.at(x, y), inside ? kSoap : kDrySkin) << x << "," << y << " at " << temp;
      }
  }
}

TEST(Segmenter, RenderedSoapPatchIsPixelExact) {
  LimbSurface limb = default_limb();
  for (int i = 0; i < limb.cell_count(); ++i)
    if (limb.cell_u(i) >= 20 && limb.cell_u(i) < 30) set_cell_state(limb.cell(i), FluidState::Soapy, 1.0);
  for (int tone = 0; tone < 6; ++tone) {
    RenderOptions opt;
    opt.tone = tone;
    const RenderedScene sc = render_rgbt(limb, default_camera(), opt);
    SegParams raw = default_scenario().segmentation;
    raw.smooth = false;
    EXPECT_EQ(segment_rgbt(sc.rgb, sc.thermal, raw), sc.mask) << "tone " << tone;
  }
}

TEST(Segmenter, SizeMismatchRejected) {
  EXPECT_THROW(segment_rgbt(RgbImage(3, 3), ThermalImage(3, 4)), ImageError);
}

TEST(IoU, IdentityDisjointHalf) {
  SegMask a(6, 4);
  for (std::size_t i = 0; i < a.size(); ++i) a[i] = static_cast<std::uint8_t>(i % 3);
  const IoUReport same = iou(a, a);
  EXPECT_DOUBLE_EQ(same.miou, 1.0);
  EXPECT_FALSE(same.defined[3]);

  SegMask p(6, 4, 1), t(6, 4, 3);
  const IoUReport dis = iou(p, t);
  EXPECT_EQ(dis.per_class[1], 0.0);
  EXPECT_EQ(dis.per_class[3], 0.0);
  EXPECT_EQ(dis.miou, 0.0);

  SegMask truth(6, 4), pred(6, 4, 1);
  for (int y = 0; y < 4; ++y)
    for (int x = 0; x < 6; ++x) truth.at(x, y) = x < 3 ? 1 : 0;
  const IoUReport half = iou(pred, truth);
  EXPECT_NEAR(half.per_class[1], 0.5, 1e-12);
  EXPECT_NEAR(half.per_class[0], 0.0, 1e-12);
  EXPECT_NEAR(half.miou, 0.25, 1e-12);
}

TEST(Split, SizesAndDeterminism) {
  auto ids = [](int n) {
    std::vector<int> v(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) v[static_cast<std::size_t>(i)] = i;
    return v;
  };
  const auto s10 = split_dataset(ids(10), 1);
  EXPECT_EQ(s10.train.size(), 8u);
  EXPECT_EQ(s10.val.size(), 1u);
  EXPECT_EQ(s10.test.size(), 1u);
  const auto s1000 = split_dataset(ids(1000), 1);
  EXPECT_EQ(s1000.train.size(), 800u);
  EXPECT_EQ(s1000.test.size(), 100u);
  const auto s1003 = split_dataset(ids(1003), 1);
  EXPECT_EQ(s1003.train.size(), 803u);
  EXPECT_EQ(s1003.val.size(), 100u);
  EXPECT_EQ(s1003.test.size(), 100u);

  std::set<int> all(s1003.train.begin(), s1003.train.end());
  all.insert(s1003.val.begin(), s1003.val.end());
  all.insert(s1003.test.begin(), s1003.test.end());
  EXPECT_EQ(all.size(), 1003u);

  EXPECT_EQ(split_dataset(ids(50), 5).test, split_dataset(ids(50), 5).test);
  EXPECT_NE(split_dataset(ids(50), 5).train, split_dataset(ids(50), 6).train);
}

TEST(Pnm, RoundTripBitIdentical) {
  XorShift64Star rng(4);
  RgbImage rgb(7, 5);
  for (auto& p : rgb.data())
    p = Rgb{static_cast<std::uint8_t>(rng.below(256)), static_cast<std::uint8_t>(rng.below(256)),
            static_cast<std::uint8_t>(rng.below(256))};
  std::stringstream s1;
  write_ppm(s1, rgb);
  EXPECT_EQ(read_ppm(s1), rgb);

  DepthImage depth(6, 3);
  for (auto& d : depth.data()) d = static_cast<std::uint16_t>(rng.below(65536));
  std::stringstream s2;
  write_pgm16(s2, depth);
  EXPECT_EQ(read_pgm16<DepthTag>(s2), depth);

  SegMask mask(4, 4);
  for (auto& m : mask.data()) m = static_cast<std::uint8_t>(rng.below(kNumClasses));
  std::stringstream s3;
  write_mask(s3, mask);
  EXPECT_EQ(read_mask(s3), mask);
}

TEST(Pnm, HeaderCaseAndBigEndian) {
  std::string bytes = "P6\n2 2\n255\n";
  for (int i = 0; i < 12; ++i) bytes.push_back(static_cast<char>(i * 10));
  std::istringstream in(bytes);
  const RgbImage img = read_ppm(in);
  EXPECT_EQ(img.width(), 2);
  EXPECT_EQ(img.height(), 2);
  EXPECT_EQ(img.at(1, 1), (Rgb{90, 100, 110}));

  DepthImage one(1, 1, 0x9000);
  std::ostringstream out;
  write_pgm16(out, one);
  const std::string s = out.str();
  ASSERT_GE(s.size(), 2u);
  EXPECT_EQ(static_cast<unsigned char>(s[s.size() - 2]), 0x90);
  EXPECT_EQ(static_cast<unsigned char>(s[s.size() - 1]), 0x00);
}

TEST(Pnm, MalformedInputs) {
  std::istringstream bad_magic("P3\n1 1\n255\n");
  EXPECT_THROW(read_ppm(bad_magic), ImageError);
  std::istringstream truncated("P6\n2 2\n255\nabc");
  EXPECT_THROW(read_ppm(truncated), ImageError);
  std::istringstream bad_label(std::string("P5\n1 1\n255\n") + char(9));
  EXPECT_THROW(read_mask(bad_label), ImageError);
  EXPECT_THROW(load_ppm("/nonexistent/file.ppm"), ImageError);
}

TEST(Render, DrySurfaceLabelsAndTemperature) {
  const RenderedScene sc = render_rgbt(default_limb(), default_camera(), RenderOptions{});
  std::size_t skin = 0;
  for (std::size_t i = 0; i < sc.mask.size(); ++i) {
    ASSERT_TRUE(sc.mask[i] == kBackground || sc.mask[i] == kDrySkin);
    if (sc.mask[i] == kDrySkin) {
      ++skin;
      EXPECT_EQ(sc.thermal[i], celsius_to_centikelvin(36.6));
      EXPECT_GT(sc.depth[i], 0);
    }
  }
  EXPECT_GT(skin, 1000u);
}

TEST(Render, SoapStripeMatchesIndependentRayCast) {
  LimbSurface limb = default_limb();
  for (int i = 0; i < limb.cell_count(); ++i)
    if (limb.cell_u(i) >= 20 && limb.cell_u(i) < 25) set_cell_state(limb.cell(i), FluidState::Soapy, 1.0);
  const CameraModel cam = default_camera();
  const RenderedScene sc = render_rgbt(limb, cam, RenderOptions{});

  // Ray against the infinite cylinder, kept only where the hit lies on the body.
  const Vec3 a = limb.proximal(), axis = limb.axis();
  const double cell_len = limb.length() / limb.cells_axial();
  const double s_lo = 20 * cell_len, s_hi = 25 * cell_len;
  const Vec3 origin = cam.camera_to_base.position();
  const Mat3 rot = cam.camera_to_base.rotation_matrix();
  int checked = 0;
  for (int v = 0; v < cam.height; ++v)
    for (int u = 0; u < cam.width; ++u) {
      const Vec3 d = rot * cam.ray(u, v);
      const Vec3 oc = origin - a;
      const Vec3 dp = d - axis * d.dot(axis), op = oc - axis * oc.dot(axis);
      const double qa = dp.squaredNorm(), qb = 2 * dp.dot(op), qc = op.squaredNorm() - limb.radius() * limb.radius();
      const double disc = qb * qb - 4 * qa * qc;
      if (disc < 0) continue;
      const double t = (-qb - std::sqrt(disc)) / (2 * qa);
      const double s = (oc + d * t).dot(axis);
      if (s < 0.01 || s > limb.length() - 0.01) continue;
      if (std::abs(s - s_lo) < 1e-6 || std::abs(s - s_hi) < 1e-6) continue;
      const bool in_stripe = s >= s_lo && s < s_hi;
      EXPECT_EQ(sc.mask.at(u, v), in_stripe ? kSoap : kDrySkin) << u << "," << v;
      ++checked;
    }
  EXPECT_GT(checked, 1000);
}

TEST(Render, SeededNoiseIsReproducible) {
  RenderOptions opt;
  opt.noise.enabled = true;
  opt.noise.seed = 12;
  const LimbSurface limb = default_limb();
  const RenderedScene a = render_rgbt(limb, default_camera(), opt);
  const RenderedScene b = render_rgbt(limb, default_camera(), opt);
  EXPECT_EQ(a.rgb, b.rgb);
  EXPECT_EQ(a.thermal, b.thermal);
  const RenderedScene clean = render_rgbt(limb, default_camera(), RenderOptions{});
  EXPECT_NE(a.rgb, clean.rgb);
  EXPECT_NE(a.thermal, clean.thermal);
  EXPECT_EQ(a.mask, clean.mask);
}

TEST(Scenes, EnumerationCyclesAxes) {
  std::set<std::pair<int, int>> tone_cov;
  std::set<int> poses;
  for (int i = 0; i < 60; ++i) {
    const SceneSpec s = scene_spec(i, false);
    tone_cov.insert({s.tone, static_cast<int>(s.coverage)});
    poses.insert(s.camera_pose);
    EXPECT_FALSE(s.hair);
  }
  EXPECT_EQ(tone_cov.size(), 30u);
  EXPECT_EQ(poses.size(), 2u);
  EXPECT_THROW(scene_spec(0, false, 7), ConfigError);
}

TEST(Scenes, NoiseFreeClosure) {
  const ScenarioConfig cfg = default_scenario();
  IoUCounts total;
  for (int i = 0; i < 30; ++i) {
    const RenderedScene sc = generate_scene(cfg, scene_spec(i, false), 3);
    total += iou_counts(segment_rgbt(sc.rgb, sc.thermal, cfg.segmentation), sc.mask);
  }
  EXPECT_GE(iou_report(total).miou, 0.95);
}
