#pragma once

#include <array>
#include <cstdint>
#include <fstream>
#include <queue>
#include <string>
#include <vector>

#include "hullfuse/common.hpp"

namespace hullfuse {

/// Binary foreground mask; row-major, true = foreground.
struct BinaryMask {
  int width = 0, height = 0;
  std::vector<uint8_t> data;

  BinaryMask() = default;
  BinaryMask(int w, int h, bool value = false)
      : width(w), height(h), data(static_cast<size_t>(w) * h, value ? 1 : 0) {}

  bool at(int x, int y) const { return data[static_cast<size_t>(y) * width + x] != 0; }
  void set(int x, int y, bool v) { data[static_cast<size_t>(y) * width + x] = v ? 1 : 0; }
  bool in_bounds(int x, int y) const {
    return x >= 0 && x < width && y >= 0 && y < height;
  }
  size_t count() const {
    size_t c = 0;
    for (uint8_t v : data) c += v != 0;
    return c;
  }
  bool operator==(const BinaryMask& o) const {
    return width == o.width && height == o.height && data == o.data;
  }
};

struct PixelCoord {
  int x = 0, y = 0;
  bool operator==(const PixelCoord& o) const { return x == o.x && y == o.y; }
};

namespace detail {
// 8-neighborhood in clockwise order starting from +x (image y grows down).
inline constexpr std::array<std::array<int, 2>, 8> kMoore = {
    {{1, 0}, {1, 1}, {0, 1}, {-1, 1}, {-1, 0}, {-1, -1}, {0, -1}, {1, -1}}};
}  // namespace detail

inline bool has_background_8neighbor(const BinaryMask& m, int x, int y) {
  for (const auto& d : detail::kMoore) {
    int nx = x + d[0], ny = y + d[1];
    if (!m.in_bounds(nx, ny) || !m.at(nx, ny)) return true;
  }
  return false;
}

/// Largest 8-connected foreground component (all other pixels cleared).
inline BinaryMask largest_component(const BinaryMask& m) {
  std::vector<int> label(m.data.size(), 0);
  int next = 0, best_label = 0;
  size_t best_size = 0;
  std::vector<int> stack;
  for (int y = 0; y < m.height; ++y) {
    for (int x = 0; x < m.width; ++x) {
      size_t idx = static_cast<size_t>(y) * m.width + x;
      if (!m.data[idx] || label[idx]) continue;
      ++next;
      size_t size = 0;
      stack.push_back(static_cast<int>(idx));
      label[idx] = next;
      while (!stack.empty()) {
        int cur = stack.back();
        stack.pop_back();
        ++size;
        int cy = cur / m.width, cx = cur % m.width;
        for (const auto& d : detail::kMoore) {
          int nx = cx + d[0], ny = cy + d[1];
          if (!m.in_bounds(nx, ny)) continue;
          size_t nidx = static_cast<size_t>(ny) * m.width + nx;
          if (m.data[nidx] && !label[nidx]) {
            label[nidx] = next;
            stack.push_back(static_cast<int>(nidx));
          }
        }
      }
      if (size > best_size) {
        best_size = size;
        best_label = next;
      }
    }
  }
  BinaryMask out(m.width, m.height);
  for (size_t i = 0; i < m.data.size(); ++i) out.data[i] = label[i] == best_label;
  return out;
}

/// Ordered outer contour of the largest foreground component (Moore
/// tracing, clockwise in image coordinates), uniformly subsampled to at most
/// max_points while preserving contour order. max_points <= 0 disables
/// subsampling. Every returned pixel is foreground with a background
/// 8-neighbor. Throws EmptySilhouetteError on an all-background mask.
inline std::vector<PixelCoord> silhouette_boundary(const BinaryMask& mask,
                                                   int max_points) {
  BinaryMask comp = largest_component(mask);
  int sx = -1, sy = -1;
  for (int y = 0; y < comp.height && sx < 0; ++y)
    for (int x = 0; x < comp.width; ++x)
      if (comp.at(x, y)) {
        sx = x;
        sy = y;
        break;
      }
  if (sx < 0) throw EmptySilhouetteError("mask has no foreground pixels");

  // Moore-neighbor tracing. State is (current pixel, backtrack direction
  // pointing at the background pixel the scan entered from); the trace stops
  // when the initial state repeats (Jacob's criterion). The raster scan finds
  // the start pixel coming from the west, so the initial backtrack is 4.
  std::vector<PixelCoord> contour;
  {
    int px = sx, py = sy;
    int back = 4;
    const int start_back = back;
    contour.push_back({px, py});
    for (size_t guard = comp.data.size() * 8 + 16; guard-- > 0;) {
      int found = -1;
      int last_bg = back;
      for (int k = 1; k <= 8; ++k) {
        int dir = (back + k) % 8;
        int nx = px + detail::kMoore[dir][0];
        int ny = py + detail::kMoore[dir][1];
        if (comp.in_bounds(nx, ny) && comp.at(nx, ny)) {
          found = dir;
          break;
        }
        last_bg = dir;
      }
      if (found < 0) break;  // isolated pixel
      px += detail::kMoore[found][0];
      py += detail::kMoore[found][1];
      // direction from the new pixel to the last background pixel examined
      int bg_x = px - detail::kMoore[found][0] + detail::kMoore[last_bg][0];
      int bg_y = py - detail::kMoore[found][1] + detail::kMoore[last_bg][1];
      back = -1;
      for (int d = 0; d < 8; ++d)
        if (px + detail::kMoore[d][0] == bg_x && py + detail::kMoore[d][1] == bg_y)
          back = d;
      if (back < 0) back = (found + 4) % 8;  // diagonal step: fall back to reverse
      if (px == sx && py == sy && back == start_back) break;
      contour.push_back({px, py});
    }
    // drop duplicate pixels introduced by spurs while keeping order
    std::vector<PixelCoord> unique;
    std::vector<uint8_t> seen(comp.data.size(), 0);
    for (const auto& p : contour) {
      size_t idx = static_cast<size_t>(p.y) * comp.width + p.x;
      if (!seen[idx]) {
        seen[idx] = 1;
        unique.push_back(p);
      }
    }
    contour = std::move(unique);
  }

  if (max_points > 0 && static_cast<int>(contour.size()) > max_points) {
    std::vector<PixelCoord> sampled;
    sampled.reserve(max_points);
    const size_t n = contour.size();
    for (int k = 0; k < max_points; ++k)
      sampled.push_back(contour[(static_cast<size_t>(k) * n) / max_points]);
    contour = std::move(sampled);
  }
  return contour;
}

/// Outward unit normal (in pixel coordinates) at a boundary pixel, estimated
/// from the local 3x3 foreground occupancy. Zero when the neighborhood gives
/// no direction.
inline Vec2 boundary_outward_normal(const BinaryMask& mask, const PixelCoord& p) {
  Vec2 n = Vec2::Zero();
  for (const auto& d : detail::kMoore) {
    int nx = p.x + d[0], ny = p.y + d[1];
    bool fg = mask.in_bounds(nx, ny) && mask.at(nx, ny);
    if (!fg) n += Vec2(d[0], d[1]);
  }
  double len = n.norm();
  return len > 0 ? Vec2(n / len) : Vec2::Zero();
}

/// Max-pool downsample by 2 (any foreground child marks the parent).
inline BinaryMask downsample_mask(const BinaryMask& m) {
  BinaryMask out((m.width + 1) / 2, (m.height + 1) / 2);
  for (int y = 0; y < m.height; ++y)
    for (int x = 0; x < m.width; ++x)
      if (m.at(x, y)) out.set(x / 2, y / 2, true);
  return out;
}

inline double mask_iou(const BinaryMask& a, const BinaryMask& b) {
  if (a.width != b.width || a.height != b.height)
    throw InvalidArgument("IoU: mask sizes differ");
  size_t inter = 0, uni = 0;
  for (size_t i = 0; i < a.data.size(); ++i) {
    bool fa = a.data[i], fb = b.data[i];
    inter += fa && fb;
    uni += fa || fb;
  }
  return uni == 0 ? 1.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

// ---------------------------------------------------------------------------
// PGM / PPM files (binary variants). Masks use PGM with 0 = background and
// 255 = foreground.

inline void write_pgm(const BinaryMask& m, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path);
  out << "P5\n" << m.width << " " << m.height << "\n255\n";
  std::vector<uint8_t> bytes(m.data.size());
  for (size_t i = 0; i < m.data.size(); ++i) bytes[i] = m.data[i] ? 255 : 0;
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
}

namespace detail {
inline int read_pnm_token(std::istream& in) {
  // skips whitespace and '#' comments
  for (;;) {
    int c = in.peek();
    if (c == '#') {
      std::string line;
      std::getline(in, line);
    } else if (std::isspace(c)) {
      in.get();
    } else {
      break;
    }
  }
  int v;
  in >> v;
  return v;
}
}  // namespace detail

inline BinaryMask read_pgm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  std::string magic;
  in >> magic;
  if (magic != "P5") throw InvalidArgument(path + ": expected binary PGM (P5)");
  int w = detail::read_pnm_token(in);
  int h = detail::read_pnm_token(in);
  int maxval = detail::read_pnm_token(in);
  in.get();  // single whitespace after header
  if (w <= 0 || h <= 0 || maxval != 255)
    throw InvalidArgument(path + ": unsupported PGM header");
  std::vector<uint8_t> bytes(static_cast<size_t>(w) * h);
  in.read(reinterpret_cast<char*>(bytes.data()),
          static_cast<std::streamsize>(bytes.size()));
  if (!in) throw IoError(path + ": truncated PGM data");
  BinaryMask m(w, h);
  for (size_t i = 0; i < bytes.size(); ++i) m.data[i] = bytes[i] >= 128;
  return m;
}

/// Row-major 8-bit RGB image.
struct RgbImage {
  int width = 0, height = 0;
  std::vector<uint8_t> data;  // 3 bytes per pixel

  RgbImage() = default;
  RgbImage(int w, int h) : width(w), height(h), data(static_cast<size_t>(w) * h * 3, 0) {}

  const uint8_t* pixel(int x, int y) const {
    return data.data() + 3 * (static_cast<size_t>(y) * width + x);
  }
  uint8_t* pixel(int x, int y) {
    return data.data() + 3 * (static_cast<size_t>(y) * width + x);
  }

  /// Bilinear sample at continuous pixel coordinates, clamped to the image.
  Vec3 sample_bilinear(const Vec2& px) const {
    double x = std::min(std::max(px.x() - 0.5, 0.0), width - 1.0);
    double y = std::min(std::max(px.y() - 0.5, 0.0), height - 1.0);
    int x0 = static_cast<int>(x), y0 = static_cast<int>(y);
    int x1 = std::min(x0 + 1, width - 1), y1 = std::min(y0 + 1, height - 1);
    double ax = x - x0, ay = y - y0;
    Vec3 out = Vec3::Zero();
    auto acc = [&](int xi, int yi, double w) {
      const uint8_t* p = pixel(xi, yi);
      out += w * Vec3(p[0], p[1], p[2]);
    };
    acc(x0, y0, (1 - ax) * (1 - ay));
    acc(x1, y0, ax * (1 - ay));
    acc(x0, y1, (1 - ax) * ay);
    acc(x1, y1, ax * ay);
    return out / 255.0;
  }
};

inline void write_ppm(const RgbImage& img, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path);
  out << "P6\n" << img.width << " " << img.height << "\n255\n";
  out.write(reinterpret_cast<const char*>(img.data.data()),
            static_cast<std::streamsize>(img.data.size()));
}

inline RgbImage read_ppm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  std::string magic;
  in >> magic;
  if (magic != "P6") throw InvalidArgument(path + ": expected binary PPM (P6)");
  int w = detail::read_pnm_token(in);
  int h = detail::read_pnm_token(in);
  int maxval = detail::read_pnm_token(in);
  in.get();
  if (w <= 0 || h <= 0 || maxval != 255)
    throw InvalidArgument(path + ": unsupported PPM header");
  RgbImage img(w, h);
  in.read(reinterpret_cast<char*>(img.data.data()),
          static_cast<std::streamsize>(img.data.size()));
  if (!in) throw IoError(path + ": truncated PPM data");
  return img;
}

}  // namespace hullfuse
