#pragma once

#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <string>
#include <vector>

#include "hullfuse/mask.hpp"

namespace hullfuse {

/// Dense scalar field over an image grid.
struct ScalarField {
  int width = 0, height = 0;
  std::vector<double> data;

  ScalarField() = default;
  ScalarField(int w, int h, double v = 0)
      : width(w), height(h), data(static_cast<size_t>(w) * h, v) {}

  double at(int x, int y) const { return data[static_cast<size_t>(y) * width + x]; }
  double& at(int x, int y) { return data[static_cast<size_t>(y) * width + x]; }
};

namespace detail {

// 1D squared-distance transform via the lower envelope of parabolas
// (Felzenszwalb & Huttenlocher). Exact for integer seed values.
inline void edt_1d(const double* f, double* d, int n, int* v, double* z) {
  int k = 0;
  v[0] = 0;
  z[0] = -std::numeric_limits<double>::infinity();
  z[1] = std::numeric_limits<double>::infinity();
  for (int q = 1; q < n; ++q) {
    double s;
    for (;;) {
      s = ((f[q] + q * q) - (f[v[k]] + v[k] * v[k])) / (2.0 * q - 2.0 * v[k]);
      if (s <= z[k]) {
        --k;
      } else {
        break;
      }
    }
    ++k;
    v[k] = q;
    z[k] = s;
    z[k + 1] = std::numeric_limits<double>::infinity();
  }
  k = 0;
  for (int q = 0; q < n; ++q) {
    while (z[k + 1] < q) ++k;
    double dq = q - v[k];
    d[q] = dq * dq + f[v[k]];
  }
}

}  // namespace detail

/// Exact squared Euclidean distance (in pixels^2) from every pixel to the
/// nearest foreground pixel; zero on foreground.
inline ScalarField distance_transform_squared(const BinaryMask& mask) {
  const int w = mask.width, h = mask.height;
  if (w == 0 || h == 0) throw InvalidArgument("distance transform: empty mask");
  const double inf = 1e18;
  ScalarField fld(w, h);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) fld.at(x, y) = mask.at(x, y) ? 0.0 : inf;

  std::vector<double> f(std::max(w, h)), d(std::max(w, h)), z(std::max(w, h) + 1);
  std::vector<int> v(std::max(w, h));
  // columns then rows
  for (int x = 0; x < w; ++x) {
    for (int y = 0; y < h; ++y) f[y] = fld.at(x, y);
    detail::edt_1d(f.data(), d.data(), h, v.data(), z.data());
    for (int y = 0; y < h; ++y) fld.at(x, y) = d[y];
  }
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) f[x] = fld.at(x, y);
    detail::edt_1d(f.data(), d.data(), w, v.data(), z.data());
    for (int x = 0; x < w; ++x) fld.at(x, y) = d[x];
  }
  return fld;
}

/// Exact Euclidean distance in pixels to the nearest foreground pixel.
inline ScalarField distance_transform(const BinaryMask& mask) {
  ScalarField fld = distance_transform_squared(mask);
  for (double& v : fld.data) v = std::sqrt(v);
  return fld;
}

/// Distance to the nearest background pixel (the transform of the inverse mask).
inline ScalarField inverse_distance_transform(const BinaryMask& mask) {
  BinaryMask inv(mask.width, mask.height);
  for (size_t i = 0; i < mask.data.size(); ++i) inv.data[i] = !mask.data[i];
  return distance_transform(inv);
}

/// Min-pool downsample by 2; conservative companion of downsample_mask.
inline ScalarField downsample_min(const ScalarField& f) {
  ScalarField out((f.width + 1) / 2, (f.height + 1) / 2,
                  std::numeric_limits<double>::infinity());
  for (int y = 0; y < f.height; ++y)
    for (int x = 0; x < f.width; ++x)
      out.at(x / 2, y / 2) = std::min(out.at(x / 2, y / 2), f.at(x, y));
  return out;
}

// Debug dump: magic, u32 width, u32 height, then row-major float32 samples.
inline void write_float_grid(const ScalarField& f, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path);
  out.write("FGRID32\0", 8);
  uint32_t wh[2] = {static_cast<uint32_t>(f.width), static_cast<uint32_t>(f.height)};
  out.write(reinterpret_cast<const char*>(wh), sizeof(wh));
  std::vector<float> vals(f.data.begin(), f.data.end());
  out.write(reinterpret_cast<const char*>(vals.data()),
            static_cast<std::streamsize>(vals.size() * sizeof(float)));
}

inline ScalarField read_float_grid(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  char magic[8];
  in.read(magic, 8);
  if (std::string(magic, 7) != "FGRID32")
    throw InvalidArgument(path + ": not a float grid file");
  uint32_t wh[2];
  in.read(reinterpret_cast<char*>(wh), sizeof(wh));
  ScalarField f(static_cast<int>(wh[0]), static_cast<int>(wh[1]));
  std::vector<float> vals(f.data.size());
  in.read(reinterpret_cast<char*>(vals.data()),
          static_cast<std::streamsize>(vals.size() * sizeof(float)));
  if (!in) throw IoError(path + ": truncated float grid");
  for (size_t i = 0; i < vals.size(); ++i) f.data[i] = vals[i];
  return f;
}

}  // namespace hullfuse
