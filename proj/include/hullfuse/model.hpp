#pragma once

#include <string>
#include <utility>
#include <vector>

#include "hullfuse/common.hpp"
#include "hullfuse/rotation.hpp"

namespace hullfuse {

// Determinant threshold below which a blended vertex transform counts as
// singular (candy-wrapper collapse) and the correspondence must be dropped.
inline constexpr double kSingularBlendDet = 1e-6;

/// Skinned parametric body template: rest mesh, kinematic tree, blend
/// weights, shape/pose bases, mirror pairs and per-vertex regularizer
/// weights. Immutable during evaluation; safe to share across threads.
struct SkinnedModel {
  MatX3 template_vertices;                     // N x 3 rest positions, meters
  std::vector<Eigen::Vector3i> faces;          // triangles
  std::vector<int> parents;                    // K entries, root has -1
  std::vector<std::string> joint_names;        // K entries
  SpMat joint_regressor;                       // K x N, rows sum to 1
  std::vector<std::vector<std::pair<int, double>>> blend_weights;  // per vertex
  MatX shape_basis;                            // 3N x B
  MatX pose_basis;                             // 3N x 9(K-1), may be empty
  std::vector<std::pair<int, int>> symmetry_pairs;
  VecX gamma_laplacian;                        // per-vertex weights, >= 0
  VecX gamma_variance;
  VecX gamma_symmetry;
  std::vector<std::pair<std::string, std::vector<int>>> regions;

  int vertex_count() const { return static_cast<int>(template_vertices.rows()); }
  int joint_count() const { return static_cast<int>(parents.size()); }
  int shape_dim() const { return static_cast<int>(shape_basis.cols()); }
  bool has_pose_basis() const { return pose_basis.size() > 0; }

  int root_joint() const {
    for (int k = 0; k < joint_count(); ++k)
      if (parents[k] < 0) return k;
    throw InvalidArgument("kinematic tree has no root");
  }
};

/// One frame's pose: per-joint axis-angle plus a root translation.
struct Pose {
  MatX3 joint_rotations;  // K x 3 axis-angle
  Vec3 root_translation = Vec3::Zero();

  static Pose zero(int joint_count) {
    Pose p;
    p.joint_rotations = MatX3::Zero(joint_count, 3);
    return p;
  }

  void canonicalize() {
    for (int k = 0; k < joint_rotations.rows(); ++k)
      joint_rotations.row(k) =
          canonicalize_axis_angle(joint_rotations.row(k).transpose()).transpose();
  }
};

/// Shape coefficients, free-form vertex offsets and the per-frame poses.
struct BodyState {
  VecX shape;       // beta
  MatX3 offsets;    // N x 3, D
  std::vector<Pose> poses;
};

/// Per-joint rigid transforms relative to the rest pose; identity at the
/// zero pose. Rotation blocks are orthonormal with determinant +1.
struct JointTransforms {
  std::vector<Mat4> global;  // K entries
};

namespace detail {

inline void check_shape_dim(const SkinnedModel& model, const VecX& beta) {
  if (beta.size() != model.shape_dim())
    throw InvalidArgument("shape coefficient count " + std::to_string(beta.size()) +
                          " does not match basis rank " +
                          std::to_string(model.shape_dim()));
}

inline void check_offsets(const SkinnedModel& model, const MatX3& offsets) {
  if (offsets.rows() != model.template_vertices.rows())
    throw InvalidArgument("offset count does not match vertex count");
  if (!offsets.allFinite()) throw InvalidArgument("offsets contain non-finite values");
}

/// Children lists in index order; also validates tree shape.
inline std::vector<std::vector<int>> children_lists(const SkinnedModel& model) {
  const int k_joints = model.joint_count();
  std::vector<std::vector<int>> children(k_joints);
  int roots = 0;
  for (int k = 0; k < k_joints; ++k) {
    if (model.parents[k] < 0) {
      ++roots;
    } else {
      if (model.parents[k] >= k_joints)
        throw InvalidArgument("joint parent index out of range");
      children[model.parents[k]].push_back(k);
    }
  }
  if (roots != 1) throw InvalidArgument("kinematic tree must have exactly one root");
  return children;
}

/// Joint evaluation order with parents before children; detects cycles.
inline std::vector<int> topological_order(const SkinnedModel& model) {
  auto children = children_lists(model);
  std::vector<int> order;
  order.reserve(model.joint_count());
  std::vector<int> stack{model.root_joint()};
  while (!stack.empty()) {
    int k = stack.back();
    stack.pop_back();
    order.push_back(k);
    for (auto it = children[k].rbegin(); it != children[k].rend(); ++it)
      stack.push_back(*it);
  }
  if (static_cast<int>(order.size()) != model.joint_count())
    throw InvalidArgument("kinematic tree contains a cycle or unreachable joint");
  return order;
}

/// SMPL-style pose features: concatenated vec(R_k - I) over non-root joints.
inline VecX pose_features(const SkinnedModel& model, const Pose& pose) {
  const int k_joints = model.joint_count();
  const int root = model.root_joint();
  VecX f(9 * (k_joints - 1));
  int slot = 0;
  for (int k = 0; k < k_joints; ++k) {
    if (k == root) continue;
    Mat3 r = rodrigues(pose.joint_rotations.row(k).transpose()) - Mat3::Identity();
    for (int c = 0; c < 3; ++c)
      for (int rr = 0; rr < 3; ++rr) f[9 * slot + 3 * c + rr] = r(rr, c);
    ++slot;
  }
  return f;
}

}  // namespace detail

/// Pose-dependent per-vertex displacements; zero at the zero pose.
inline MatX3 pose_blend_offsets(const SkinnedModel& model, const Pose& pose) {
  const int n = model.vertex_count();
  if (!model.has_pose_basis()) return MatX3::Zero(n, 3);
  VecX flat = model.pose_basis * detail::pose_features(model, pose);
  return Eigen::Map<const Eigen::Matrix<double, 3, Eigen::Dynamic>>(flat.data(), 3, n)
      .transpose();
}

/// Canonical-pose vertices: template + shape displacement + free offsets.
inline MatX3 rest_vertices(const SkinnedModel& model, const VecX& beta,
                           const MatX3& offsets) {
  detail::check_shape_dim(model, beta);
  detail::check_offsets(model, offsets);
  const int n = model.vertex_count();
  VecX shaped = model.shape_basis * beta;
  MatX3 out = model.template_vertices + offsets;
  out += Eigen::Map<const Eigen::Matrix<double, 3, Eigen::Dynamic>>(shaped.data(), 3, n)
             .transpose();
  return out;
}

inline MatX3 rest_vertices(const SkinnedModel& model, const VecX& beta) {
  return rest_vertices(model, beta, MatX3::Zero(model.vertex_count(), 3));
}

/// Rest-pose joint locations regressed from the shaped (offset-free) mesh.
inline MatX3 joint_locations(const SkinnedModel& model, const VecX& beta) {
  return model.joint_regressor * rest_vertices(model, beta);
}

/// Global per-joint transforms relative to the rest pose. The root transform
/// carries the global translation; all rotations pivot about rest joints.
inline JointTransforms forward_kinematics(const SkinnedModel& model, const VecX& beta,
                                          const Pose& pose) {
  if (pose.joint_rotations.rows() != model.joint_count())
    throw InvalidArgument("pose has wrong joint count");
  const MatX3 joints = joint_locations(model, beta);
  const auto order = detail::topological_order(model);
  const int k_joints = model.joint_count();

  std::vector<Mat4> chain(k_joints);  // accumulated local-to-global
  JointTransforms out;
  out.global.resize(k_joints);
  for (int k : order) {
    Mat4 local = Mat4::Identity();
    local.block<3, 3>(0, 0) = rodrigues(pose.joint_rotations.row(k).transpose());
    const int p = model.parents[k];
    if (p < 0) {
      local.block<3, 1>(0, 3) = joints.row(k).transpose() + pose.root_translation;
      chain[k] = local;
    } else {
      local.block<3, 1>(0, 3) = (joints.row(k) - joints.row(p)).transpose();
      chain[k] = chain[p] * local;
    }
    out.global[k] = chain[k] * translation_matrix(-joints.row(k).transpose());
  }
  return out;
}

/// Blended per-vertex affine transform A_i and its invertibility.
struct VertexTransform {
  Mat4 transform;
  double det;
  bool invertible;
};

inline Mat4 blend_transforms(const SkinnedModel& model, const JointTransforms& jt,
                             int vertex) {
  Mat4 a = Mat4::Zero();
  for (const auto& [joint, w] : model.blend_weights[vertex]) a += w * jt.global[joint];
  return a;
}

inline VertexTransform vertex_transform(const SkinnedModel& model, const VecX& beta,
                                        const Pose& pose, int vertex) {
  if (vertex < 0 || vertex >= model.vertex_count())
    throw InvalidArgument("vertex index out of range");
  VertexTransform vt;
  vt.transform = blend_transforms(model, forward_kinematics(model, beta, pose), vertex);
  vt.det = vt.transform.block<3, 3>(0, 0).determinant();
  vt.invertible = std::abs(vt.det) >= kSingularBlendDet;
  return vt;
}

/// Linear blend skinning of all vertices under the given state.
inline MatX3 skin(const SkinnedModel& model, const VecX& beta, const Pose& pose,
                  const MatX3& offsets) {
  const JointTransforms jt = forward_kinematics(model, beta, pose);
  MatX3 rest = rest_vertices(model, beta, offsets);
  if (model.has_pose_basis()) rest += pose_blend_offsets(model, pose);
  const int n = model.vertex_count();
  MatX3 out(n, 3);
  for (int i = 0; i < n; ++i) {
    Mat4 a = blend_transforms(model, jt, i);
    out.row(i) = apply_affine(a, rest.row(i).transpose()).transpose();
  }
  return out;
}

/// Analytic derivatives of skin() stacked per vertex.
struct SkinJacobians {
  MatX d_shape;              // 3N x B
  MatX d_pose;               // 3N x (3K + 3): joint axis-angles then translation
  std::vector<Mat3> d_offset;  // per vertex: d(v_i')/d(d_i)
};

/// Skins the model and fills analytic Jacobians w.r.t. shape, pose and
/// offsets. The pose and shape derivatives run the kinematic chain forward
/// once per parameter; fine for the joint counts this library targets.
inline MatX3 skin_with_jacobians(const SkinnedModel& model, const VecX& beta,
                                 const Pose& pose, const MatX3& offsets,
                                 SkinJacobians* jac) {
  const int n = model.vertex_count();
  const int k_joints = model.joint_count();
  const int b_dim = model.shape_dim();
  const int root = model.root_joint();
  const auto order = detail::topological_order(model);
  const MatX3 joints = joint_locations(model, beta);

  // forward pass, keeping local transforms and chains
  std::vector<Mat4> local(k_joints), chain(k_joints);
  std::vector<Mat3> rot_jac(3 * k_joints);
  for (int k : order) {
    Vec3 aa = pose.joint_rotations.row(k).transpose();
    local[k] = Mat4::Identity();
    local[k].block<3, 3>(0, 0) = rodrigues(aa);
    Mat3 dr[3];
    rodrigues_jacobian(aa, dr);
    for (int c = 0; c < 3; ++c) rot_jac[3 * k + c] = dr[c];
    const int p = model.parents[k];
    if (p < 0) {
      local[k].block<3, 1>(0, 3) = joints.row(k).transpose() + pose.root_translation;
      chain[k] = local[k];
    } else {
      local[k].block<3, 1>(0, 3) = (joints.row(k) - joints.row(p)).transpose();
      chain[k] = chain[p] * local[k];
    }
  }
  std::vector<Mat4> global(k_joints);
  for (int k = 0; k < k_joints; ++k)
    global[k] = chain[k] * translation_matrix(-joints.row(k).transpose());

  MatX3 rest = rest_vertices(model, beta, offsets);
  if (model.has_pose_basis()) rest += pose_blend_offsets(model, pose);

  MatX3 posed(n, 3);
  std::vector<Mat4> blended(n);
  for (int i = 0; i < n; ++i) {
    blended[i] = blend_transforms(model, {global}, i);
    posed.row(i) = apply_affine(blended[i], rest.row(i).transpose()).transpose();
  }
  if (!jac) return posed;

  jac->d_shape = MatX::Zero(3 * n, b_dim);
  jac->d_pose = MatX::Zero(3 * n, 3 * k_joints + 3);
  jac->d_offset.resize(n);
  for (int i = 0; i < n; ++i) jac->d_offset[i] = blended[i].block<3, 3>(0, 0);

  // pose derivatives: one chain sweep per rotation component
  std::vector<Mat4> d_chain(k_joints);
  std::vector<char> touched(k_joints);
  for (int m = 0; m < k_joints; ++m) {
    for (int c = 0; c < 3; ++c) {
      std::fill(touched.begin(), touched.end(), 0);
      for (int k : order) {
        const int p = model.parents[k];
        if (k == m) {
          Mat4 dlocal = Mat4::Zero();
          dlocal.block<3, 3>(0, 0) = rot_jac[3 * m + c];
          d_chain[k] = (p < 0) ? dlocal : chain[p] * dlocal;
          touched[k] = 1;
        } else if (p >= 0 && touched[p]) {
          d_chain[k] = d_chain[p] * local[k];
          touched[k] = 1;
        }
      }
      for (int i = 0; i < n; ++i) {
        Vec3 dv = Vec3::Zero();
        for (const auto& [joint, w] : model.blend_weights[i]) {
          if (!touched[joint]) continue;
          Mat4 dg = d_chain[joint] * translation_matrix(-joints.row(joint).transpose());
          dv += w * (dg.block<3, 3>(0, 0) * rest.row(i).transpose() +
                     dg.block<3, 1>(0, 3));
        }
        jac->d_pose.block<3, 1>(3 * i, 3 * m + c) = dv;
      }
    }
  }
  // pose blendshape contribution to rotation components
  if (model.has_pose_basis()) {
    int slot = 0;
    for (int m = 0; m < k_joints; ++m) {
      if (m == root) continue;
      for (int c = 0; c < 3; ++c) {
        VecX dfeat = VecX::Zero(model.pose_basis.cols());
        const Mat3& dr = rot_jac[3 * m + c];
        for (int col = 0; col < 3; ++col)
          for (int row = 0; row < 3; ++row)
            dfeat[9 * slot + 3 * col + row] = dr(row, col);
        VecX db = model.pose_basis * dfeat;
        for (int i = 0; i < n; ++i)
          jac->d_pose.block<3, 1>(3 * i, 3 * m + c) +=
              jac->d_offset[i] * db.segment<3>(3 * i);
      }
      ++slot;
    }
  }
  // translation: rigid shift of everything
  for (int i = 0; i < n; ++i)
    jac->d_pose.block<3, 3>(3 * i, 3 * k_joints) = Mat3::Identity();

  // shape derivatives: joints and rest vertices both move with beta
  for (int j = 0; j < b_dim; ++j) {
    VecX col = model.shape_basis.col(j);
    MatX3 dj =
        model.joint_regressor *
        Eigen::Map<const Eigen::Matrix<double, 3, Eigen::Dynamic>>(col.data(), 3, n)
            .transpose();
    std::vector<Mat4> dck(k_joints);
    for (int k : order) {
      const int p = model.parents[k];
      Mat4 dlocal = Mat4::Zero();
      if (p < 0) {
        dlocal.block<3, 1>(0, 3) = dj.row(k).transpose();
        dck[k] = dlocal;
      } else {
        dlocal.block<3, 1>(0, 3) = (dj.row(k) - dj.row(p)).transpose();
        dck[k] = dck[p] * local[k] + chain[p] * dlocal;
      }
    }
    for (int i = 0; i < n; ++i) {
      Vec3 dv = Vec3::Zero();
      for (const auto& [joint, w] : model.blend_weights[i]) {
        Mat4 dg = dck[joint] * translation_matrix(-joints.row(joint).transpose());
        dv += w * (dg.block<3, 3>(0, 0) * rest.row(i).transpose() +
                   dg.block<3, 1>(0, 3) -
                   chain[joint].block<3, 3>(0, 0) * dj.row(joint).transpose());
      }
      dv += jac->d_offset[i] * col.segment<3>(3 * i);
      jac->d_shape.block<3, 1>(3 * i, j) = dv;
    }
  }
  return posed;
}

}  // namespace hullfuse
