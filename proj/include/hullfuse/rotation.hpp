#pragma once

#include <cmath>

#include "hullfuse/common.hpp"

namespace hullfuse {

// Below this angle Rodrigues' formula switches to its series expansion.
inline constexpr double kSmallAngle = 1e-8;

/// Axis-angle to rotation matrix (Rodrigues).
inline Mat3 rodrigues(const Vec3& aa) {
  const double theta2 = aa.squaredNorm();
  const Mat3 k = skew(aa);
  if (theta2 < kSmallAngle * kSmallAngle) {
    // sin(t)/t = 1 - t^2/6, (1-cos(t))/t^2 = 1/2 - t^2/24
    return Mat3::Identity() + (1.0 - theta2 / 6.0) * k +
           (0.5 - theta2 / 24.0) * (k * k);
  }
  const double theta = std::sqrt(theta2);
  return Mat3::Identity() + (std::sin(theta) / theta) * k +
         ((1.0 - std::cos(theta)) / theta2) * (k * k);
}

/// d(rodrigues)/d(aa_i) for the three components. Closed form away from zero
/// (Gallego & Yezzi), quadratic series near zero.
inline void rodrigues_jacobian(const Vec3& aa, Mat3 d[3]) {
  const double theta2 = aa.squaredNorm();
  if (theta2 < 1e-8) {
    const Mat3 k = skew(aa);
    for (int i = 0; i < 3; ++i) {
      Mat3 e = skew(Vec3::Unit(i));
      d[i] = e + 0.5 * (k * e + e * k);
    }
    return;
  }
  const Mat3 r = rodrigues(aa);
  for (int i = 0; i < 3; ++i) {
    Vec3 cross = aa.cross((Mat3::Identity() - r) * Vec3::Unit(i));
    d[i] = ((aa[i] * skew(aa) + skew(cross)) / theta2) * r;
  }
}

/// Rotation matrix to axis-angle with angle in [0, pi].
inline Vec3 rotation_log(const Mat3& r) {
  const double cos_theta = std::min(1.0, std::max(-1.0, (r.trace() - 1.0) * 0.5));
  const double theta = std::acos(cos_theta);
  const Vec3 w(r(2, 1) - r(1, 2), r(0, 2) - r(2, 0), r(1, 0) - r(0, 1));
  if (theta < kSmallAngle) return 0.5 * w;
  if (theta < M_PI - 1e-6) return (theta / (2.0 * std::sin(theta))) * w;
  // Near pi the skew part vanishes; recover the axis from the symmetric part
  // R + R^T = 2*cos*I + 2*(1-cos)*a*a^T.
  const Mat3 s = 0.5 * (r + r.transpose());
  Vec3 a;
  for (int i = 0; i < 3; ++i)
    a[i] = std::sqrt(std::max(0.0, (s(i, i) - cos_theta) / (1.0 - cos_theta)));
  int m = 0;
  a.maxCoeff(&m);
  for (int i = 0; i < 3; ++i)
    if (i != m && s(m, i) < 0) a[i] = -a[i];
  if (w.dot(a) < 0) a = -a;  // disambiguate when sin(theta) is still nonzero
  return theta * a.normalized();
}

/// Wraps the axis-angle magnitude into [0, 2*pi).
inline Vec3 canonicalize_axis_angle(const Vec3& aa) {
  double theta = aa.norm();
  if (theta < 2.0 * M_PI) return aa;
  double wrapped = std::fmod(theta, 2.0 * M_PI);
  return aa * (wrapped / theta);
}

}  // namespace hullfuse
