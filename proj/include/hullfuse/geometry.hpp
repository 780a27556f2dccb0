#pragma once

#include <cmath>

#include "hullfuse/common.hpp"

namespace hullfuse {

/// Oriented 3D line in Plucker form: unit direction and moment
/// (moment = p x direction for any point p on the line).
struct PluckerRay {
  Vec3 direction;
  Vec3 moment;

  static PluckerRay through_points(const Vec3& a, const Vec3& b) {
    PluckerRay r;
    Vec3 d = b - a;
    double len = d.norm();
    if (len < 1e-15) throw InvalidArgument("degenerate ray: coincident points");
    r.direction = d / len;
    r.moment = a.cross(r.direction);
    return r;
  }

  /// Point on the line closest to the origin.
  Vec3 closest_point_to_origin() const { return direction.cross(moment); }

  bool valid(double tol = 1e-9) const {
    return std::abs(direction.norm() - 1.0) <= tol &&
           std::abs(moment.dot(direction)) <= tol;
  }
};

/// Euclidean distance from a point to the ray's line.
inline double point_line_distance(const PluckerRay& ray, const Vec3& point) {
  return (point.cross(ray.direction) - ray.moment).norm();
}

/// The residual whose norm is point_line_distance.
inline Vec3 point_line_residual(const PluckerRay& ray, const Vec3& point) {
  return point.cross(ray.direction) - ray.moment;
}

/// Calibrated pinhole camera with a rigid world-to-camera transform.
/// Pixel (ix, iy) covers the unit square with center (ix + 0.5, iy + 0.5);
/// projections and ray origins use continuous pixel coordinates.
struct PinholeCamera {
  double fx = 0, fy = 0;
  double cx = 0, cy = 0;
  Mat3 rotation = Mat3::Identity();  // world-to-camera
  Vec3 translation = Vec3::Zero();
  int width = 0, height = 0;

  Vec3 camera_center() const { return -rotation.transpose() * translation; }

  Vec3 to_camera(const Vec3& p) const { return rotation * p + translation; }

  /// Continuous pixel coordinates; z must be positive.
  Vec2 project(const Vec3& world) const {
    Vec3 c = to_camera(world);
    return {fx * c.x() / c.z() + cx, fy * c.y() / c.z() + cy};
  }

  bool in_image(const Vec2& px) const {
    return px.x() >= 0 && px.x() <= width && px.y() >= 0 && px.y() <= height;
  }

  void validate() const {
    if (fx <= 0 || fy <= 0) throw InvalidArgument("camera: focal lengths must be positive");
    if ((rotation * rotation.transpose() - Mat3::Identity()).norm() > 1e-6 ||
        rotation.determinant() < 0)
      throw InvalidArgument("camera: rotation is not orthonormal");
    if (width <= 0 || height <= 0) throw InvalidArgument("camera: bad image size");
  }
};

/// World-space ray through a (possibly fractional) pixel coordinate, oriented
/// away from the camera center.
inline PluckerRay ray_through_pixel(const PinholeCamera& cam, const Vec2& pixel) {
  if (!cam.in_image(pixel)) throw InvalidArgument("pixel outside image bounds");
  Vec3 dir_cam((pixel.x() - cam.cx) / cam.fx, (pixel.y() - cam.cy) / cam.fy, 1.0);
  Vec3 dir_world = cam.rotation.transpose() * dir_cam;
  Vec3 center = cam.camera_center();
  return PluckerRay::through_points(center, center + dir_world);
}

/// Rigidly transforms a line, preserving orientation.
inline PluckerRay transform_ray(const Mat3& rot, const Vec3& t, const PluckerRay& ray) {
  Vec3 p = ray.closest_point_to_origin();
  return PluckerRay::through_points(rot * p + t, rot * (p + ray.direction) + t);
}

}  // namespace hullfuse
