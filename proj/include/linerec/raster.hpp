#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

// Grayscale raster with intensities in [0,1], 1 = white paper, 0 = full ink.
// On disk: binary PGM (P5, maxval 255). Color overlays for visualization go
// out as binary PPM (P6).

namespace linerec {

struct Raster {
  int h = 0, w = 0;
  std::vector<double> px;  // row-major, h*w

  Raster() = default;
  Raster(int height, int width, double fill = 1.0)
      : h(height), w(width), px(static_cast<size_t>(height) * width, fill) {
    if (height < 1 || width < 1) throw std::invalid_argument("Raster: extents must be >= 1");
  }

  double& at(int y, int x) { return px[static_cast<size_t>(y) * w + x]; }
  double at(int y, int x) const { return px[static_cast<size_t>(y) * w + x]; }

  // bilinear sample; anything outside the frame reads as white
  double sample(double y, double x) const {
    const int y0 = static_cast<int>(std::floor(y));
    const int x0 = static_cast<int>(std::floor(x));
    const double fy = y - y0, fx = x - x0;
    auto get = [&](int yy, int xx) -> double {
      if (yy < 0 || xx < 0 || yy >= h || xx >= w) return 1.0;
      return at(yy, xx);
    };
    return (1 - fy) * ((1 - fx) * get(y0, x0) + fx * get(y0, x0 + 1)) +
           fy * ((1 - fx) * get(y0 + 1, x0) + fx * get(y0 + 1, x0 + 1));
  }
};

namespace detail {
inline int pnm_token(std::istream& in) {
  // skips whitespace and # comments, reads one nonnegative integer
  int c = in.get();
  while (c != EOF) {
    if (c == '#') {
      while (c != EOF && c != '\n') c = in.get();
    } else if (std::isspace(c)) {
      c = in.get();
    } else {
      break;
    }
  }
  if (c == EOF || !std::isdigit(c)) throw std::runtime_error("malformed PNM header");
  int val = 0;
  while (c != EOF && std::isdigit(c)) {
    val = val * 10 + (c - '0');
    c = in.get();
  }
  return val;
}
}  // namespace detail

inline void save_pgm(const Raster& r, const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  out << "P5\n" << r.w << " " << r.h << "\n255\n";
  std::vector<uint8_t> row(static_cast<size_t>(r.w));
  for (int y = 0; y < r.h; ++y) {
    for (int x = 0; x < r.w; ++x) {
      const double v = std::clamp(r.at(y, x), 0.0, 1.0);
      row[static_cast<size_t>(x)] = static_cast<uint8_t>(std::lround(v * 255.0));
    }
    out.write(reinterpret_cast<const char*>(row.data()), r.w);
  }
  if (!out) throw std::runtime_error("short write: " + path);
}

inline Raster load_pgm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open: " + path);
  char m0 = 0, m1 = 0;
  in.get(m0);
  in.get(m1);
  if (m0 != 'P' || m1 != '5') throw std::runtime_error("not a binary PGM: " + path);
  const int w = detail::pnm_token(in);
  const int h = detail::pnm_token(in);
  const int maxval = detail::pnm_token(in);
  if (maxval != 255) throw std::runtime_error("unsupported PGM maxval in " + path);
  Raster r(h, w);
  std::vector<uint8_t> buf(static_cast<size_t>(w) * h);
  in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
  if (in.gcount() != static_cast<std::streamsize>(buf.size()))
    throw std::runtime_error("truncated PGM: " + path);
  for (size_t i = 0; i < buf.size(); ++i) r.px[i] = buf[i] / 255.0;
  return r;
}

// RGB canvas for box/label overlays.
struct RgbImage {
  int h = 0, w = 0;
  std::vector<uint8_t> px;  // h*w*3

  RgbImage(int height, int width) : h(height), w(width), px(static_cast<size_t>(height) * width * 3, 255) {}

  explicit RgbImage(const Raster& r) : RgbImage(r.h, r.w) {
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        const uint8_t v = static_cast<uint8_t>(std::lround(std::clamp(r.at(y, x), 0.0, 1.0) * 255.0));
        uint8_t* p = &px[(static_cast<size_t>(y) * w + x) * 3];
        p[0] = p[1] = p[2] = v;
      }
  }

  void set(int y, int x, uint8_t r, uint8_t g, uint8_t b) {
    if (y < 0 || x < 0 || y >= h || x >= w) return;
    uint8_t* p = &px[(static_cast<size_t>(y) * w + x) * 3];
    p[0] = r;
    p[1] = g;
    p[2] = b;
  }

  void rect(int y0, int x0, int y1, int x1, uint8_t r, uint8_t g, uint8_t b) {
    for (int x = x0; x <= x1; ++x) {
      set(y0, x, r, g, b);
      set(y1, x, r, g, b);
    }
    for (int y = y0; y <= y1; ++y) {
      set(y, x0, r, g, b);
      set(y, x1, r, g, b);
    }
  }
};

inline void save_ppm(const RgbImage& img, const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  out << "P6\n" << img.w << " " << img.h << "\n255\n";
  out.write(reinterpret_cast<const char*>(img.px.data()), static_cast<std::streamsize>(img.px.size()));
  if (!out) throw std::runtime_error("short write: " + path);
}

}  // namespace linerec
