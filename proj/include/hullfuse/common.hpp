#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>
#include <Eigen/Sparse>

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace hullfuse {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Vec4 = Eigen::Vector4d;
using Mat3 = Eigen::Matrix3d;
using Mat4 = Eigen::Matrix4d;
using VecX = Eigen::VectorXd;
using MatX = Eigen::MatrixXd;
using MatX3 = Eigen::Matrix<double, Eigen::Dynamic, 3>;
using SpMat = Eigen::SparseMatrix<double>;
using Triplet = Eigen::Triplet<double>;

/// Contract violations in caller-supplied arguments (dimension mismatch,
/// malformed files, unknown names). Maps to CLI exit code 2.
struct InvalidArgument : std::runtime_error {
  explicit InvalidArgument(const std::string& what) : std::runtime_error(what) {}
};

/// Numerical failure the caller cannot fix by changing inputs alone
/// (factorization failure, optimizer abort). Maps to CLI exit code 3.
struct NumericalError : std::runtime_error {
  explicit NumericalError(const std::string& what) : std::runtime_error(what) {}
};

/// A frame whose mask has no foreground, or a mesh entirely behind the camera.
struct EmptySilhouetteError : std::runtime_error {
  explicit EmptySilhouetteError(const std::string& what) : std::runtime_error(what) {}
};

struct IoError : std::runtime_error {
  explicit IoError(const std::string& what) : std::runtime_error(what) {}
};

inline Mat3 skew(const Vec3& v) {
  Mat3 m;
  m << 0, -v.z(), v.y(), v.z(), 0, -v.x(), -v.y(), 0, v.x();
  return m;
}

inline Mat4 translation_matrix(const Vec3& t) {
  Mat4 m = Mat4::Identity();
  m.block<3, 1>(0, 3) = t;
  return m;
}

inline Vec3 apply_affine(const Mat4& a, const Vec3& p) {
  return a.block<3, 3>(0, 0) * p + a.block<3, 1>(0, 3);
}

}  // namespace hullfuse
