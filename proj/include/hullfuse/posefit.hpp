#pragma once

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>
#include <vector>

#include "hullfuse/distance_transform.hpp"
#include "hullfuse/mask.hpp"
#include "hullfuse/model.hpp"
#include "hullfuse/rasterize.hpp"

namespace hullfuse {

struct PoseFitConfig {
  double w_outside = 1.0;       // rendered pixels outside the observed mask
  double w_inside = 1.0;        // observed pixels the render fails to cover
  int pyramid_levels = 4;
  double prior_weight = 2e-3;
  double prior_sigma = 0.5;     // radians, diagonal Gaussian on joint rotations
  double temporal_weight = 2e-3;
  double reinit_factor = 3.0;   // restart when energy exceeds factor x median
  int iterations_per_level = 20;
  Pose prior_mean;              // defaults to the zero pose when empty
};

/// Observed-mask pyramid: masks max-pooled per level, distance transforms
/// recomputed at each level (units of that level's pixels) so the silhouette
/// cost is exactly zero iff the masks agree at the level.
struct MaskPyramid {
  std::vector<BinaryMask> masks;
  std::vector<ScalarField> dist_fg;   // C: distance to observed foreground
  std::vector<ScalarField> dist_bg;   // C-bar: distance to observed background
};

inline MaskPyramid build_mask_pyramid(const BinaryMask& mask, int levels) {
  if (mask.count() == 0) throw EmptySilhouetteError("observed mask is empty");
  MaskPyramid pyr;
  pyr.masks.push_back(mask);
  for (int l = 1; l < levels; ++l) pyr.masks.push_back(downsample_mask(pyr.masks.back()));
  for (const auto& m : pyr.masks) {
    pyr.dist_fg.push_back(distance_transform(m));
    pyr.dist_bg.push_back(inverse_distance_transform(m));
  }
  return pyr;
}

namespace detail {

inline BinaryMask pooled_render(const MatX3& posed,
                                const std::vector<Eigen::Vector3i>& faces,
                                const PinholeCamera& cam, int level) {
  BinaryMask m = rasterize_silhouette(posed, faces, cam);
  for (int l = 0; l < level; ++l) m = downsample_mask(m);
  return m;
}

/// Mean per-pixel silhouette cost of a pooled render against the pyramid.
inline double silhouette_cost(const BinaryMask& rendered, const MaskPyramid& pyr,
                              int level, double w_outside, double w_inside) {
  const auto& c = pyr.dist_fg[level];
  const auto& cbar = pyr.dist_bg[level];
  double sum = 0;
  for (int y = 0; y < rendered.height; ++y)
    for (int x = 0; x < rendered.width; ++x)
      sum += rendered.at(x, y) ? w_outside * c.at(x, y) : w_inside * cbar.at(x, y);
  return sum / (static_cast<double>(rendered.width) * rendered.height);
}

}  // namespace detail

/// Silhouette term at one pyramid level; infinite when the render is empty.
/// The gradient differentiates each rendered-boundary pixel's cost through
/// its generating rim vertex (chain rule through projection and skinning).
inline double silhouette_energy(const SkinnedModel& model, const VecX& beta,
                                const Pose& pose, const MatX3& offsets,
                                const MaskPyramid& pyramid, const PinholeCamera& cam,
                                int level, const PoseFitConfig& config,
                                VecX* gradient = nullptr) {
  const int k_joints = model.joint_count();
  MatX3 posed;
  SkinJacobians jac;
  if (gradient) {
    posed = skin_with_jacobians(model, beta, pose, offsets, &jac);
  } else {
    posed = skin(model, beta, pose, offsets);
  }
  BinaryMask rendered;
  try {
    rendered = detail::pooled_render(posed, model.faces, cam, level);
  } catch (const EmptySilhouetteError&) {
    if (gradient) gradient->setZero(3 * k_joints + 3);
    return std::numeric_limits<double>::infinity();
  }
  const double energy =
      detail::silhouette_cost(rendered, pyramid, level, config.w_outside, config.w_inside);
  if (!gradient) return energy;

  gradient->setZero(3 * k_joints + 3);
  const double scale = static_cast<double>(1 << level);
  const double pixel_norm = static_cast<double>(rendered.width) * rendered.height;

  // rim vertices and their projections at this level
  std::vector<uint8_t> rim = rim_vertices(posed, model.faces, cam.camera_center());
  std::vector<int> rim_ids;
  std::vector<Vec2> rim_px;
  std::vector<Eigen::Matrix<double, 2, 3>> rim_proj;  // d(pixel)/d(world point)
  for (int i = 0; i < posed.rows(); ++i) {
    if (!rim[i]) continue;
    const Vec3 c = cam.to_camera(posed.row(i).transpose());
    if (c.z() < kNearPlane) continue;
    rim_ids.push_back(i);
    rim_px.emplace_back((cam.fx * c.x() / c.z() + cam.cx) / scale,
                        (cam.fy * c.y() / c.z() + cam.cy) / scale);
    Eigen::Matrix<double, 2, 3> dpix;
    dpix << cam.fx / c.z(), 0, -cam.fx * c.x() / (c.z() * c.z()), 0, cam.fy / c.z(),
        -cam.fy * c.y() / (c.z() * c.z());
    rim_proj.push_back(dpix * cam.rotation / scale);
  }
  if (rim_ids.empty()) return energy;

  const auto& c_field = pyramid.dist_fg[level];
  const auto& cbar_field = pyramid.dist_bg[level];
  for (int y = 0; y < rendered.height; ++y) {
    for (int x = 0; x < rendered.width; ++x) {
      if (!rendered.at(x, y) || !has_background_8neighbor(rendered, x, y)) continue;
      const double kappa =
          config.w_outside * c_field.at(x, y) - config.w_inside * cbar_field.at(x, y);
      if (kappa == 0) continue;
      const Vec2 normal = boundary_outward_normal(rendered, {x, y});
      if (normal.isZero()) continue;
      const Vec2 p(x + 0.5, y + 0.5);
      int best = -1;
      double best_d = std::numeric_limits<double>::infinity();
      for (size_t r = 0; r < rim_px.size(); ++r) {
        const double d = (rim_px[r] - p).squaredNorm();
        if (d < best_d) {
          best_d = d;
          best = static_cast<int>(r);
        }
      }
      if (best < 0 || best_d > 16.0) continue;  // no rim vertex near this pixel
      const int vid = rim_ids[best];
      // cost flux through outward contour motion at this pixel
      const Eigen::Matrix<double, 1, 3> dcost =
          (kappa / pixel_norm) * normal.transpose() * rim_proj[best];
      gradient->noalias() +=
          (dcost * jac.d_pose.block(3 * vid, 0, 3, 3 * k_joints + 3)).transpose();
    }
  }
  return energy;
}

namespace detail {

inline VecX pack_pose(const Pose& p) {
  const int k = static_cast<int>(p.joint_rotations.rows());
  VecX x(3 * k + 3);
  for (int j = 0; j < k; ++j) x.segment<3>(3 * j) = p.joint_rotations.row(j).transpose();
  x.tail<3>() = p.root_translation;
  return x;
}

inline Pose unpack_pose(const VecX& x, int k) {
  Pose p = Pose::zero(k);
  for (int j = 0; j < k; ++j) p.joint_rotations.row(j) = x.segment<3>(3 * j).transpose();
  p.root_translation = x.tail<3>();
  return p;
}

}  // namespace detail

struct PoseFitResult {
  Pose pose;
  bool failed = false;
  bool reinitialized = false;
  double final_energy = 0;  // level-0 total energy
};

/// Coarse-to-fine pose refinement against one observed mask: silhouette term
/// plus a diagonal Gaussian pose prior and a temporal anchor on the previous
/// frame's pose. Restarts once from the zero pose when the final energy
/// exceeds the re-init threshold (3x the running median by default).
inline PoseFitResult refine_pose(const SkinnedModel& model, const VecX& beta,
                                 const MatX3& offsets, const Pose& pose_init,
                                 const Pose& pose_prev, const BinaryMask& mask,
                                 const PinholeCamera& camera,
                                 const PoseFitConfig& config,
                                 double reinit_threshold =
                                     std::numeric_limits<double>::infinity()) {
  const int k_joints = model.joint_count();
  PoseFitResult result;
  result.pose = pose_init;
  MaskPyramid pyramid;
  try {
    pyramid = build_mask_pyramid(mask, config.pyramid_levels);
  } catch (const EmptySilhouetteError&) {
    result.failed = true;
    return result;
  }

  const VecX x_prev = detail::pack_pose(pose_prev);
  const Pose prior =
      config.prior_mean.joint_rotations.rows() == k_joints ? config.prior_mean
                                                           : Pose::zero(k_joints);
  const VecX x_prior = detail::pack_pose(prior);
  const double prior_prec = 1.0 / (config.prior_sigma * config.prior_sigma);

  auto total_energy = [&](const VecX& x, int level, VecX* grad) {
    const Pose p = detail::unpack_pose(x, k_joints);
    double e = silhouette_energy(model, beta, p, offsets, pyramid, camera, level,
                                 config, grad);
    VecX d_rot = x - x_prior;
    d_rot.tail<3>().setZero();  // prior constrains rotations only
    const VecX d_temp = x - x_prev;
    e += config.prior_weight * prior_prec * d_rot.squaredNorm();
    e += config.temporal_weight * d_temp.squaredNorm();
    if (grad) {
      *grad += 2.0 * config.prior_weight * prior_prec * d_rot;
      *grad += 2.0 * config.temporal_weight * d_temp;
    }
    return e;
  };

  auto descend = [&](VecX x) {
    for (int level = config.pyramid_levels - 1; level >= 0; --level) {
      double step = 0.25;
      for (int it = 0; it < config.iterations_per_level; ++it) {
        VecX grad(3 * k_joints + 3);
        const double e = total_energy(x, level, &grad);
        if (!std::isfinite(e)) break;
        const double gnorm = grad.norm();
        if (gnorm < 1e-12) break;
        bool accepted = false;
        for (int bt = 0; bt < 12; ++bt) {
          VecX trial = x - (step / gnorm) * grad;
          const double e_trial = total_energy(trial, level, nullptr);
          if (e_trial < e) {
            x = std::move(trial);
            step *= 1.5;
            accepted = true;
            break;
          }
          step *= 0.5;
        }
        if (!accepted) break;
      }
    }
    return x;
  };

  const VecX x_init = detail::pack_pose(pose_init);
  const double initial_energy = total_energy(x_init, 0, nullptr);
  VecX x_best = descend(x_init);
  double best_energy = total_energy(x_best, 0, nullptr);

  if (best_energy > reinit_threshold) {
    VecX x_zero = detail::pack_pose(Pose::zero(k_joints));
    VecX x_re = descend(x_zero);
    const double e_re = total_energy(x_re, 0, nullptr);
    if (e_re < best_energy) {
      x_best = x_re;
      best_energy = e_re;
      result.reinitialized = true;
    }
  }
  if (!std::isfinite(best_energy) || best_energy > initial_energy) {
    result.pose = pose_init;
    result.failed = true;
    result.final_energy = initial_energy;
    return result;
  }
  result.pose = detail::unpack_pose(x_best, k_joints);
  result.final_energy = best_energy;
  return result;
}

/// Sequential refinement over a sequence (temporal chain, running-median
/// re-init threshold).
inline std::vector<PoseFitResult> refine_pose_sequence(
    const SkinnedModel& model, const VecX& beta, const MatX3& offsets,
    const std::vector<Pose>& init_poses, const std::vector<BinaryMask>& masks,
    const std::vector<PinholeCamera>& cameras, const PoseFitConfig& config) {
  std::vector<PoseFitResult> results;
  std::vector<double> history;
  for (size_t f = 0; f < init_poses.size(); ++f) {
    double threshold = std::numeric_limits<double>::infinity();
    if (history.size() >= 3) {
      std::vector<double> sorted = history;
      std::sort(sorted.begin(), sorted.end());
      threshold = config.reinit_factor * sorted[sorted.size() / 2];
    }
    const Pose& prev = results.empty() ? init_poses[f] : results.back().pose;
    PoseFitResult r = refine_pose(model, beta, offsets, init_poses[f], prev, masks[f],
                                  cameras[f], config, threshold);
    if (std::isfinite(r.final_energy)) history.push_back(r.final_energy);
    results.push_back(std::move(r));
  }
  return results;
}

}  // namespace hullfuse
