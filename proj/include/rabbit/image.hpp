#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "error.hpp"

namespace rabbit {

/// Row-major W x H grid. Tag keeps same-typed rasters (thermal vs depth) distinct.
template <typename T, typename Tag = void>
class Grid {
 public:
  using value_type = T;

  Grid() = default;
  Grid(int width, int height, T fill = T{})
      : width_(width), height_(height), data_(static_cast<std::size_t>(width) * static_cast<std::size_t>(height), fill) {
    if (width < 0 || height < 0) throw ImageError("negative image dimensions");
  }

  int width() const { return width_; }
  int height() const { return height_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }
  bool contains(int x, int y) const { return x >= 0 && y >= 0 && x < width_ && y < height_; }

  T& at(int x, int y) { return data_[index(x, y)]; }
  const T& at(int x, int y) const { return data_[index(x, y)]; }
  T& operator[](std::size_t i) { return data_[i]; }
  const T& operator[](std::size_t i) const { return data_[i]; }

  std::vector<T>& data() { return data_; }
  const std::vector<T>& data() const { return data_; }

  bool same_size(int w, int h) const { return w == width_ && h == height_; }
  template <typename U, typename G>
  bool same_size(const Grid<U, G>& other) const {
    return other.width() == width_ && other.height() == height_;
  }

  friend bool operator==(const Grid& a, const Grid& b) {
    return a.width_ == b.width_ && a.height_ == b.height_ && a.data_ == b.data_;
  }

 private:
  std::size_t index(int x, int y) const {
    return static_cast<std::size_t>(y) * static_cast<std::size_t>(width_) + static_cast<std::size_t>(x);
  }

  int width_ = 0;
  int height_ = 0;
  std::vector<T> data_;
};

struct Rgb {
  std::uint8_t r = 0, g = 0, b = 0;
  friend bool operator==(const Rgb&, const Rgb&) = default;
};

struct ThermalTag {};
struct DepthTag {};
struct LabelTag {};

using RgbImage = Grid<Rgb>;
using ThermalImage = Grid<std::uint16_t, ThermalTag>;  // centi-kelvin
using DepthImage = Grid<std::uint16_t, DepthTag>;      // millimeters, 0 = invalid
using SegMask = Grid<std::uint8_t, LabelTag>;
using Region = Grid<std::uint8_t>;                     // binary 0/1

enum Label : std::uint8_t { kBackground = 0, kDrySkin = 1, kWater = 2, kSoap = 3 };
inline constexpr int kNumClasses = 4;

inline constexpr std::uint16_t kThermalMin = 23315;  // -50 C
inline constexpr std::uint16_t kThermalMax = 37315;  // 100 C

inline std::uint16_t celsius_to_centikelvin(double celsius) {
  const double ck = std::round((celsius + 273.15) * 100.0);
  if (ck < kThermalMin) return kThermalMin;
  if (ck > kThermalMax) return kThermalMax;
  return static_cast<std::uint16_t>(ck);
}

inline double centikelvin_to_celsius(std::uint16_t ck) { return ck / 100.0 - 273.15; }

// ---------------------------------------------------------------------------
// Binary PNM (P5/P6). 16-bit samples are big-endian.

namespace pnm_detail {

struct Header {
  char kind = 0;  // '5' or '6'
  int width = 0;
  int height = 0;
  int maxval = 0;
};

inline void skip_space_and_comments(std::istream& in) {
  for (;;) {
    const int c = in.peek();
    if (c == '#') {
      std::string ignored;
      std::getline(in, ignored);
    } else if (c == ' ' || c == '\t' || c == '\n' || c == '\r') {
      in.get();
    } else {
      return;
    }
  }
}

inline int read_header_int(std::istream& in) {
  skip_space_and_comments(in);
  int value = 0;
  int digits = 0;
  while (in.peek() >= '0' && in.peek() <= '9') {
    value = value * 10 + (in.get() - '0');
    if (++digits > 9) throw ImageError("malformed PNM header: number too long");
  }
  if (digits == 0) throw ImageError("malformed PNM header: expected a number");
  return value;
}

inline Header read_header(std::istream& in) {
  Header h;
  char magic[2] = {0, 0};
  if (!in.read(magic, 2) || magic[0] != 'P' || (magic[1] != '5' && magic[1] != '6'))
    throw ImageError("malformed PNM header: expected P5 or P6");
  h.kind = magic[1];
  h.width = read_header_int(in);
  h.height = read_header_int(in);
  h.maxval = read_header_int(in);
  const int sep = in.get();
  if (sep != ' ' && sep != '\t' && sep != '\n' && sep != '\r')
    throw ImageError("malformed PNM header: missing separator before raster");
  if (h.width <= 0 || h.height <= 0) throw ImageError("malformed PNM header: non-positive size");
  return h;
}

inline void read_payload(std::istream& in, std::vector<unsigned char>& buf) {
  in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
  if (static_cast<std::size_t>(in.gcount()) != buf.size()) throw ImageError("truncated PNM payload");
}

inline std::ifstream open_in(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ImageError("cannot open " + path.string());
  return in;
}

inline std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ImageError("cannot write " + path.string());
  return out;
}

}  // namespace pnm_detail

inline void write_ppm(std::ostream& out, const RgbImage& img) {
  out << "P6\n" << img.width() << ' ' << img.height() << "\n255\n";
  for (const Rgb& p : img.data()) {
    const char px[3] = {static_cast<char>(p.r), static_cast<char>(p.g), static_cast<char>(p.b)};
    out.write(px, 3);
  }
}

inline RgbImage read_ppm(std::istream& in) {
  const auto h = pnm_detail::read_header(in);
  if (h.kind != '6') throw ImageError("expected P6 (RGB) image");
  if (h.maxval != 255) throw ImageError("RGB image maxval must be 255");
  std::vector<unsigned char> buf(static_cast<std::size_t>(h.width) * h.height * 3);
  pnm_detail::read_payload(in, buf);
  RgbImage img(h.width, h.height);
  for (std::size_t i = 0; i < img.size(); ++i) img[i] = Rgb{buf[3 * i], buf[3 * i + 1], buf[3 * i + 2]};
  return img;
}

template <typename Tag>
void write_pgm16(std::ostream& out, const Grid<std::uint16_t, Tag>& img) {
  out << "P5\n" << img.width() << ' ' << img.height() << "\n65535\n";
  for (std::uint16_t v : img.data()) {
    const char px[2] = {static_cast<char>(v >> 8), static_cast<char>(v & 0xFF)};
    out.write(px, 2);
  }
}

template <typename Tag>
Grid<std::uint16_t, Tag> read_pgm16(std::istream& in) {
  const auto h = pnm_detail::read_header(in);
  if (h.kind != '5') throw ImageError("expected P5 (grayscale) image");
  if (h.maxval != 65535) throw ImageError("16-bit image maxval must be 65535");
  std::vector<unsigned char> buf(static_cast<std::size_t>(h.width) * h.height * 2);
  pnm_detail::read_payload(in, buf);
  Grid<std::uint16_t, Tag> img(h.width, h.height);
  for (std::size_t i = 0; i < img.size(); ++i)
    img[i] = static_cast<std::uint16_t>((buf[2 * i] << 8) | buf[2 * i + 1]);
  return img;
}

inline void write_mask(std::ostream& out, const SegMask& mask) {
  out << "P5\n" << mask.width() << ' ' << mask.height() << "\n255\n";
  out.write(reinterpret_cast<const char*>(mask.data().data()), static_cast<std::streamsize>(mask.size()));
}

inline SegMask read_mask(std::istream& in) {
  const auto h = pnm_detail::read_header(in);
  if (h.kind != '5') throw ImageError("expected P5 mask");
  if (h.maxval != 255) throw ImageError("mask maxval must be 255");
  std::vector<unsigned char> buf(static_cast<std::size_t>(h.width) * h.height);
  pnm_detail::read_payload(in, buf);
  SegMask mask(h.width, h.height);
  for (std::size_t i = 0; i < mask.size(); ++i) {
    if (buf[i] >= kNumClasses) throw ImageError("mask label out of range");
    mask[i] = buf[i];
  }
  return mask;
}

inline ThermalImage read_thermal(std::istream& in) {
  auto img = read_pgm16<ThermalTag>(in);
  for (std::uint16_t v : img.data())
    if (v < kThermalMin || v > kThermalMax) throw ImageError("thermal sample outside [-50, 100] C");
  return img;
}

inline void save_ppm(const std::filesystem::path& p, const RgbImage& img) {
  auto out = pnm_detail::open_out(p);
  write_ppm(out, img);
}
inline RgbImage load_ppm(const std::filesystem::path& p) {
  auto in = pnm_detail::open_in(p);
  return read_ppm(in);
}
inline void save_thermal(const std::filesystem::path& p, const ThermalImage& img) {
  auto out = pnm_detail::open_out(p);
  write_pgm16(out, img);
}
inline ThermalImage load_thermal(const std::filesystem::path& p) {
  auto in = pnm_detail::open_in(p);
  return read_thermal(in);
}
inline void save_depth(const std::filesystem::path& p, const DepthImage& img) {
  auto out = pnm_detail::open_out(p);
  write_pgm16(out, img);
}
inline DepthImage load_depth(const std::filesystem::path& p) {
  auto in = pnm_detail::open_in(p);
  return read_pgm16<DepthTag>(in);
}
inline void save_mask(const std::filesystem::path& p, const SegMask& m) {
  auto out = pnm_detail::open_out(p);
  write_mask(out, m);
}
inline SegMask load_mask(const std::filesystem::path& p) {
  auto in = pnm_detail::open_in(p);
  return read_mask(in);
}

}  // namespace rabbit
