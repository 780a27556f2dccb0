#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "hullfuse/distance_transform.hpp"
#include "hullfuse/geometry.hpp"
#include "hullfuse/mask.hpp"

namespace hullfuse {

// Camera-space near plane; triangles are clipped against it before projection.
inline constexpr double kNearPlane = 1e-4;

namespace detail {

struct ClipVertex {
  Vec3 cam;      // camera-space position
  Vec3 attr;     // interpolated attribute (e.g. color)
};

/// Clips a camera-space triangle against z >= kNearPlane. Returns 0-4 vertices.
inline int clip_near(const ClipVertex in[3], ClipVertex out[4]) {
  int n = 0;
  for (int i = 0; i < 3; ++i) {
    const ClipVertex& a = in[i];
    const ClipVertex& b = in[(i + 1) % 3];
    bool ain = a.cam.z() >= kNearPlane, bin = b.cam.z() >= kNearPlane;
    if (ain) out[n++] = a;
    if (ain != bin) {
      double t = (kNearPlane - a.cam.z()) / (b.cam.z() - a.cam.z());
      out[n].cam = a.cam + t * (b.cam - a.cam);
      out[n].attr = a.attr + t * (b.attr - a.attr);
      ++n;
    }
  }
  return n;
}

inline double edge_function(const Vec2& a, const Vec2& b, const Vec2& p) {
  return (b.x() - a.x()) * (p.y() - a.y()) - (b.y() - a.y()) * (p.x() - a.x());
}

/// Top-left rule: an edge owns its boundary pixels when it is a top edge or a
/// left edge of a counter-clockwise triangle in image coordinates (y down).
inline bool edge_top_left(const Vec2& a, const Vec2& b) {
  return (a.y() == b.y() && b.x() < a.x()) || (b.y() < a.y());
}

/// Visits covered pixels of one projected triangle: fn(x, y, b0, b1, b2) with
/// barycentric coordinates. Degenerate triangles are skipped.
template <class Fn>
void fill_triangle(const Vec2& p0, const Vec2& p1, const Vec2& p2, int width,
                   int height, Fn&& fn) {
  Vec2 a = p0, b = p1, c = p2;
  double area = edge_function(a, b, c);
  if (area == 0) return;
  if (area < 0) {
    std::swap(b, c);
    area = -area;
  }
  int min_x = std::max(0, static_cast<int>(std::floor(std::min({a.x(), b.x(), c.x()}) - 0.5)));
  int max_x = std::min(width - 1, static_cast<int>(std::ceil(std::max({a.x(), b.x(), c.x()}))));
  int min_y = std::max(0, static_cast<int>(std::floor(std::min({a.y(), b.y(), c.y()}) - 0.5)));
  int max_y = std::min(height - 1, static_cast<int>(std::ceil(std::max({a.y(), b.y(), c.y()}))));
  const bool tl0 = edge_top_left(b, c), tl1 = edge_top_left(c, a), tl2 = edge_top_left(a, b);
  for (int y = min_y; y <= max_y; ++y) {
    for (int x = min_x; x <= max_x; ++x) {
      Vec2 p(x + 0.5, y + 0.5);
      double e0 = edge_function(b, c, p);
      double e1 = edge_function(c, a, p);
      double e2 = edge_function(a, b, p);
      bool inside = (e0 > 0 || (e0 == 0 && tl0)) && (e1 > 0 || (e1 == 0 && tl1)) &&
                    (e2 > 0 || (e2 == 0 && tl2));
      if (inside) fn(x, y, e0 / area, e1 / area, e2 / area);
    }
  }
}

}  // namespace detail

/// Binary coverage mask of all projected triangles (front and back facing,
/// no depth test). Deterministic and independent of face order. Throws
/// EmptySilhouetteError when the mesh is entirely behind the camera or no
/// pixel is covered.
inline BinaryMask rasterize_silhouette(const MatX3& vertices,
                                       const std::vector<Eigen::Vector3i>& faces,
                                       const PinholeCamera& cam) {
  BinaryMask mask(cam.width, cam.height);
  bool any_in_front = false;
  std::vector<Vec3> cam_pts(vertices.rows());
  for (int i = 0; i < vertices.rows(); ++i) {
    cam_pts[i] = cam.to_camera(vertices.row(i).transpose());
    any_in_front |= cam_pts[i].z() >= kNearPlane;
  }
  if (!any_in_front) throw EmptySilhouetteError("mesh entirely behind camera");
  auto project_cam = [&](const Vec3& c) {
    return Vec2(cam.fx * c.x() / c.z() + cam.cx, cam.fy * c.y() / c.z() + cam.cy);
  };
  detail::ClipVertex tri[3], clipped[4];
  for (const auto& f : faces) {
    for (int i = 0; i < 3; ++i) tri[i] = {cam_pts[f[i]], Vec3::Zero()};
    int n = detail::clip_near(tri, clipped);
    for (int i = 2; i < n; ++i) {
      detail::fill_triangle(project_cam(clipped[0].cam), project_cam(clipped[i - 1].cam),
                            project_cam(clipped[i].cam), cam.width, cam.height,
                            [&](int x, int y, double, double, double) {
                              mask.set(x, y, true);
                            });
    }
  }
  if (mask.count() == 0) throw EmptySilhouetteError("projected mesh covers no pixel");
  return mask;
}

/// Per-pixel nearest camera-space depth (+inf where nothing is drawn).
inline ScalarField rasterize_depth(const MatX3& vertices,
                                   const std::vector<Eigen::Vector3i>& faces,
                                   const PinholeCamera& cam) {
  ScalarField depth(cam.width, cam.height, std::numeric_limits<double>::infinity());
  std::vector<Vec3> cam_pts(vertices.rows());
  for (int i = 0; i < vertices.rows(); ++i)
    cam_pts[i] = cam.to_camera(vertices.row(i).transpose());
  auto project_cam = [&](const Vec3& c) {
    return Vec2(cam.fx * c.x() / c.z() + cam.cx, cam.fy * c.y() / c.z() + cam.cy);
  };
  detail::ClipVertex tri[3], clipped[4];
  for (const auto& f : faces) {
    for (int i = 0; i < 3; ++i) tri[i] = {cam_pts[f[i]], Vec3::Zero()};
    int n = detail::clip_near(tri, clipped);
    for (int i = 2; i < n; ++i) {
      const Vec3 pc[3] = {clipped[0].cam, clipped[i - 1].cam, clipped[i].cam};
      double inv_z[3] = {1.0 / pc[0].z(), 1.0 / pc[1].z(), 1.0 / pc[2].z()};
      detail::fill_triangle(project_cam(pc[0]), project_cam(pc[1]), project_cam(pc[2]),
                            cam.width, cam.height,
                            [&](int x, int y, double b0, double b1, double b2) {
                              double z = 1.0 / (b0 * inv_z[0] + b1 * inv_z[1] +
                                                b2 * inv_z[2]);
                              if (z < depth.at(x, y)) depth.at(x, y) = z;
                            });
    }
  }
  return depth;
}

/// Flat-shaded render of per-vertex colors with a depth test, over black.
/// Colors are in [0,1]; interpolation is perspective correct.
inline RgbImage render_vertex_colors(const MatX3& vertices,
                                     const std::vector<Eigen::Vector3i>& faces,
                                     const MatX3& colors, const PinholeCamera& cam) {
  RgbImage img(cam.width, cam.height);
  ScalarField depth(cam.width, cam.height, std::numeric_limits<double>::infinity());
  std::vector<Vec3> cam_pts(vertices.rows());
  for (int i = 0; i < vertices.rows(); ++i)
    cam_pts[i] = cam.to_camera(vertices.row(i).transpose());
  auto project_cam = [&](const Vec3& c) {
    return Vec2(cam.fx * c.x() / c.z() + cam.cx, cam.fy * c.y() / c.z() + cam.cy);
  };
  detail::ClipVertex tri[3], clipped[4];
  for (const auto& f : faces) {
    for (int i = 0; i < 3; ++i) tri[i] = {cam_pts[f[i]], colors.row(f[i]).transpose()};
    int n = detail::clip_near(tri, clipped);
    for (int i = 2; i < n; ++i) {
      const detail::ClipVertex v[3] = {clipped[0], clipped[i - 1], clipped[i]};
      double inv_z[3] = {1.0 / v[0].cam.z(), 1.0 / v[1].cam.z(), 1.0 / v[2].cam.z()};
      detail::fill_triangle(
          project_cam(v[0].cam), project_cam(v[1].cam), project_cam(v[2].cam),
          cam.width, cam.height, [&](int x, int y, double b0, double b1, double b2) {
            double z = 1.0 / (b0 * inv_z[0] + b1 * inv_z[1] + b2 * inv_z[2]);
            if (z >= depth.at(x, y)) return;
            depth.at(x, y) = z;
            Vec3 c = z * (b0 * inv_z[0] * v[0].attr + b1 * inv_z[1] * v[1].attr +
                          b2 * inv_z[2] * v[2].attr);
            uint8_t* px = img.pixel(x, y);
            for (int ch = 0; ch < 3; ++ch)
              px[ch] = static_cast<uint8_t>(
                  std::lround(std::min(1.0, std::max(0.0, c[ch])) * 255.0));
          });
    }
  }
  return img;
}

}  // namespace hullfuse
