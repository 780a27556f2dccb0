#pragma once

#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include "hullfuse/distance_transform.hpp"
#include "hullfuse/geometry.hpp"
#include "hullfuse/mask.hpp"
#include "hullfuse/model.hpp"
#include "hullfuse/threading.hpp"

namespace hullfuse {

/// One silhouette ray tied to its generating vertex, expressed both in the
/// frame's world and mapped into the canonical pose.
struct Correspondence {
  int frame = 0;
  int vertex = 0;
  PluckerRay unposed;
  PluckerRay original;
  double match_distance = 0;
};

struct DropStats {
  int64_t total_rays = 0;
  int64_t survived = 0;
  int64_t beyond_cap = 0;
  int64_t singular = 0;
  std::vector<int> skipped_frames;       // empty silhouettes
  std::vector<int> pose_mismatch_frames; // >50% of rays beyond the cap

  void merge(const DropStats& o) {
    total_rays += o.total_rays;
    survived += o.survived;
    beyond_cap += o.beyond_cap;
    singular += o.singular;
    skipped_frames.insert(skipped_frames.end(), o.skipped_frames.begin(),
                          o.skipped_frames.end());
    pose_mismatch_frames.insert(pose_mismatch_frames.end(),
                                o.pose_mismatch_frames.begin(),
                                o.pose_mismatch_frames.end());
  }
};

struct UnposedCloud {
  int frame_count = 0;
  std::vector<Correspondence> items;
  std::vector<int64_t> per_frame_counts;
  DropStats stats;
};

struct AssociationConfig {
  double d_max = 0.05;          // meters; matches beyond this are dropped
  int max_points = 1500;        // boundary subsample cap per frame, <=0 = all
  bool rim_only = false;        // restrict candidates to silhouette rim vertices
  bool subpixel_boundary = true;  // shift rays half a pixel along the outward normal
};

/// Vertices sitting on the view-dependent silhouette rim: they touch both a
/// front-facing and a back-facing triangle for this viewpoint.
inline std::vector<uint8_t> rim_vertices(const MatX3& posed,
                                         const std::vector<Eigen::Vector3i>& faces,
                                         const Vec3& camera_center) {
  const int n = static_cast<int>(posed.rows());
  std::vector<uint8_t> front(n, 0), back(n, 0);
  for (const auto& f : faces) {
    Vec3 a = posed.row(f[0]), b = posed.row(f[1]), c = posed.row(f[2]);
    Vec3 normal = (b - a).cross(c - a);
    Vec3 to_cam = camera_center - (a + b + c) / 3.0;
    auto& side = (normal.dot(to_cam) > 0) ? front : back;
    side[f[0]] = side[f[1]] = side[f[2]] = 1;
  }
  std::vector<uint8_t> rim(n, 0);
  for (int i = 0; i < n; ++i) rim[i] = front[i] && back[i];
  return rim;
}

namespace detail {

/// Uniform grid over points with cell size d_max. Candidate cells for a ray
/// are sampled along the line at half-cell steps and dilated by two cells,
/// which covers every vertex within d_max of the line exactly.
class RayVertexGrid {
 public:
  RayVertexGrid(const MatX3& points, double cell) : points_(points), cell_(cell) {
    lo_ = points.colwise().minCoeff().transpose().array() - cell;
    Vec3 hi = points.colwise().maxCoeff().transpose().array() + cell;
    for (int a = 0; a < 3; ++a)
      dims_[a] = std::max(1, static_cast<int>(std::floor((hi[a] - lo_[a]) / cell)) + 1);
    cells_.resize(static_cast<size_t>(dims_[0]) * dims_[1] * dims_[2]);
    for (int i = 0; i < points.rows(); ++i)
      cells_[cell_index(points.row(i).transpose())].push_back(i);
    stamp_.assign(cells_.size(), 0);
    bbox_lo_ = lo_;
    bbox_hi_ = hi;
  }

  /// Best vertex for the ray within the cap: minimal distance, ties within
  /// 1e-12 broken toward the lower index (independent of visit order).
  /// Returns {-1, 0} when none.
  std::pair<int, double> nearest(const PluckerRay& ray, double d_max,
                                 const std::vector<uint8_t>* allowed) const {
    double t0, t1;
    if (!clip_to_box(ray, t0, t1)) return {-1, 0.0};
    ++current_stamp_;
    candidates_.clear();
    const Vec3 origin = ray.closest_point_to_origin();
    const double step = 0.5 * cell_;
    auto consider_cell = [&](int cx, int cy, int cz) {
      if (cx < 0 || cy < 0 || cz < 0 || cx >= dims_[0] || cy >= dims_[1] ||
          cz >= dims_[2])
        return;
      size_t idx = (static_cast<size_t>(cz) * dims_[1] + cy) * dims_[0] + cx;
      if (stamp_[idx] == current_stamp_) return;
      stamp_[idx] = current_stamp_;
      for (int v : cells_[idx]) {
        if (allowed && !(*allowed)[v]) continue;
        double d = point_line_distance(ray, points_.row(v).transpose());
        if (d <= d_max) candidates_.emplace_back(v, d);
      }
    };
    const int steps = static_cast<int>(std::ceil((t1 - t0) / step)) + 1;
    for (int s = 0; s <= steps; ++s) {
      double t = t0 + std::min(t1 - t0, s * step);
      Vec3 p = origin + t * ray.direction;
      int cx = static_cast<int>(std::floor((p.x() - lo_.x()) / cell_));
      int cy = static_cast<int>(std::floor((p.y() - lo_.y()) / cell_));
      int cz = static_cast<int>(std::floor((p.z() - lo_.z()) / cell_));
      for (int dx = -2; dx <= 2; ++dx)
        for (int dy = -2; dy <= 2; ++dy)
          for (int dz = -2; dz <= 2; ++dz) consider_cell(cx + dx, cy + dy, cz + dz);
    }
    if (candidates_.empty()) return {-1, 0.0};
    double dmin = candidates_[0].second;
    for (const auto& [v, d] : candidates_) dmin = std::min(dmin, d);
    int best = -1;
    double best_dist = 0;
    for (const auto& [v, d] : candidates_) {
      if (d <= dmin + 1e-12 && (best < 0 || v < best)) {
        best = v;
        best_dist = d;
      }
    }
    return {best, best_dist};
  }

 private:
  size_t cell_index(const Vec3& p) const {
    int cx = std::min(dims_[0] - 1, std::max(0, static_cast<int>(std::floor((p.x() - lo_.x()) / cell_))));
    int cy = std::min(dims_[1] - 1, std::max(0, static_cast<int>(std::floor((p.y() - lo_.y()) / cell_))));
    int cz = std::min(dims_[2] - 1, std::max(0, static_cast<int>(std::floor((p.z() - lo_.z()) / cell_))));
    return (static_cast<size_t>(cz) * dims_[1] + cy) * dims_[0] + cx;
  }

  /// Parameter range of the line inside the grid box (slab test), relative to
  /// closest_point_to_origin. False when the line misses the box.
  bool clip_to_box(const PluckerRay& ray, double& t0, double& t1) const {
    const Vec3 o = ray.closest_point_to_origin();
    t0 = -std::numeric_limits<double>::infinity();
    t1 = std::numeric_limits<double>::infinity();
    for (int a = 0; a < 3; ++a) {
      if (std::abs(ray.direction[a]) < 1e-15) {
        if (o[a] < bbox_lo_[a] || o[a] > bbox_hi_[a]) return false;
        continue;
      }
      double ta = (bbox_lo_[a] - o[a]) / ray.direction[a];
      double tb = (bbox_hi_[a] - o[a]) / ray.direction[a];
      if (ta > tb) std::swap(ta, tb);
      t0 = std::max(t0, ta);
      t1 = std::min(t1, tb);
    }
    return t0 <= t1;
  }

  const MatX3& points_;
  double cell_;
  Vec3 lo_, bbox_lo_, bbox_hi_;
  int dims_[3];
  std::vector<std::vector<int>> cells_;
  mutable std::vector<uint32_t> stamp_;
  mutable uint32_t current_stamp_ = 0;
  mutable std::vector<std::pair<int, double>> candidates_;
};

}  // namespace detail

struct RayMatch {
  int ray_index;
  int vertex;
  double distance;
};

struct AssociationResult {
  std::vector<RayMatch> matches;
  int64_t beyond_cap = 0;
  bool pose_mismatch = false;  // more than half the rays found no vertex in range
};

/// Matches every ray to the posed vertex minimizing point-to-line distance.
/// Exact within the cap; optionally restricted to rim vertices for the given
/// camera.
inline AssociationResult associate_rays(const MatX3& posed_vertices,
                                        const std::vector<PluckerRay>& rays,
                                        double d_max, bool rim_only,
                                        const std::vector<Eigen::Vector3i>& faces,
                                        const PinholeCamera& camera) {
  detail::RayVertexGrid grid(posed_vertices, d_max);
  std::vector<uint8_t> rim;
  if (rim_only) rim = rim_vertices(posed_vertices, faces, camera.camera_center());
  AssociationResult res;
  res.matches.reserve(rays.size());
  for (size_t r = 0; r < rays.size(); ++r) {
    auto [vertex, dist] = grid.nearest(rays[r], d_max, rim_only ? &rim : nullptr);
    if (vertex < 0) {
      ++res.beyond_cap;
    } else {
      res.matches.push_back({static_cast<int>(r), vertex, dist});
    }
  }
  res.pose_mismatch = res.beyond_cap * 2 > static_cast<int64_t>(rays.size());
  return res;
}

/// Maps a ray through the inverse of the vertex's blended skinning transform
/// and removes the pose blendshape offset; orientation is preserved.
inline PluckerRay unpose_ray_with(const Mat4& vertex_transform,
                                  const Vec3& pose_blend_offset,
                                  const PluckerRay& ray) {
  const Mat3 lin = vertex_transform.block<3, 3>(0, 0);
  const Vec3 trans = vertex_transform.block<3, 1>(0, 3);
  const Mat3 inv = lin.inverse();
  const Vec3 p0 = ray.closest_point_to_origin();
  const Vec3 q0 = inv * (p0 - trans) - pose_blend_offset;
  const Vec3 q1 = inv * (p0 + ray.direction - trans) - pose_blend_offset;
  return PluckerRay::through_points(q0, q1);
}

/// Single-correspondence unposing; throws NumericalError on a singular blend.
inline PluckerRay unpose_ray(const SkinnedModel& model, const VecX& beta,
                             const Pose& pose, int vertex, const PluckerRay& ray) {
  VertexTransform vt = vertex_transform(model, beta, pose, vertex);
  if (!vt.invertible)
    throw NumericalError("singular vertex transform; correspondence must be dropped");
  Vec3 blend = Vec3::Zero();
  if (model.has_pose_basis())
    blend = pose_blend_offsets(model, pose).row(vertex).transpose();
  return unpose_ray_with(vt.transform, blend, ray);
}

/// Silhouette rays of one frame: boundary pixels of the observed mask, cast
/// through (optionally subpixel-refined) pixel positions.
inline std::vector<PluckerRay> frame_boundary_rays(const BinaryMask& mask,
                                                   const PinholeCamera& camera,
                                                   const AssociationConfig& config) {
  auto boundary = silhouette_boundary(mask, config.max_points);
  std::vector<PluckerRay> rays;
  rays.reserve(boundary.size());
  for (const auto& p : boundary) {
    Vec2 px(p.x + 0.5, p.y + 0.5);
    if (config.subpixel_boundary) {
      // the true contour runs between the last foreground and first
      // background pixel centers; splitting the difference removes the
      // half-pixel inward bias of casting through foreground centers
      px += 0.5 * boundary_outward_normal(mask, p);
    }
    px.x() = std::min(std::max(px.x(), 0.0), static_cast<double>(camera.width));
    px.y() = std::min(std::max(px.y(), 0.0), static_cast<double>(camera.height));
    rays.push_back(ray_through_pixel(camera, px));
  }
  return rays;
}

/// Unposes one frame's rays against the model posed with (beta, pose, offsets).
inline void unpose_frame(const SkinnedModel& model, const VecX& beta,
                         const MatX3& offsets, const Pose& pose,
                         const std::vector<PluckerRay>& rays,
                         const PinholeCamera& camera, const AssociationConfig& config,
                         int frame_index, std::vector<Correspondence>* out,
                         DropStats* stats) {
  const JointTransforms jt = forward_kinematics(model, beta, pose);
  MatX3 posed = skin(model, beta, pose, offsets);
  stats->total_rays += static_cast<int64_t>(rays.size());
  AssociationResult assoc =
      associate_rays(posed, rays, config.d_max, config.rim_only, model.faces, camera);
  stats->beyond_cap += assoc.beyond_cap;
  if (assoc.pose_mismatch) stats->pose_mismatch_frames.push_back(frame_index);
  MatX3 blend_offsets;
  if (model.has_pose_basis()) blend_offsets = pose_blend_offsets(model, pose);
  out->reserve(out->size() + assoc.matches.size());
  for (const auto& m : assoc.matches) {
    Mat4 a = blend_transforms(model, jt, m.vertex);
    if (std::abs(a.block<3, 3>(0, 0).determinant()) < kSingularBlendDet) {
      ++stats->singular;
      continue;
    }
    Vec3 blend = model.has_pose_basis() ? Vec3(blend_offsets.row(m.vertex).transpose())
                                        : Vec3::Zero();
    Correspondence c;
    c.frame = frame_index;
    c.vertex = m.vertex;
    c.original = rays[m.ray_index];
    c.unposed = unpose_ray_with(a, blend, c.original);
    c.match_distance = m.distance;
    out->push_back(c);
    ++stats->survived;
  }
}

/// Fuses all frames' silhouette rays into the canonical frame. Frames are
/// processed in parallel and aggregated in frame order. Empty-silhouette
/// frames are skipped and reported; all frames failing is fatal.
inline UnposedCloud build_unposed_cloud_from_rays(
    const SkinnedModel& model, const VecX& beta, const MatX3& offsets,
    const std::vector<Pose>& poses, const std::vector<std::vector<PluckerRay>>& rays,
    const std::vector<PinholeCamera>& cameras, const AssociationConfig& config) {
  const size_t f_count = poses.size();
  if (rays.size() != f_count || cameras.size() != f_count)
    throw InvalidArgument("unpose: poses, rays and cameras must have equal counts");
  if (f_count == 0) throw InvalidArgument("unpose: need at least one frame");
  std::vector<std::vector<Correspondence>> per_frame(f_count);
  std::vector<DropStats> per_stats(f_count);
  parallel_for(f_count, [&](size_t f) {
    unpose_frame(model, beta, offsets, poses[f], rays[f], cameras[f], config,
                 static_cast<int>(f), &per_frame[f], &per_stats[f]);
  });
  UnposedCloud cloud;
  cloud.frame_count = static_cast<int>(f_count);
  cloud.per_frame_counts.resize(f_count);
  for (size_t f = 0; f < f_count; ++f) {
    cloud.stats.merge(per_stats[f]);
    cloud.per_frame_counts[f] = static_cast<int64_t>(per_frame[f].size());
    cloud.items.insert(cloud.items.end(), per_frame[f].begin(), per_frame[f].end());
  }
  return cloud;
}

inline UnposedCloud build_unposed_cloud(const SkinnedModel& model, const VecX& beta,
                                        const MatX3& offsets,
                                        const std::vector<Pose>& poses,
                                        const std::vector<BinaryMask>& masks,
                                        const std::vector<PinholeCamera>& cameras,
                                        const AssociationConfig& config) {
  const size_t f_count = poses.size();
  if (masks.size() != f_count || cameras.size() != f_count)
    throw InvalidArgument("unpose: poses, masks and cameras must have equal counts");
  std::vector<std::vector<PluckerRay>> rays(f_count);
  std::vector<uint8_t> skipped(f_count, 0);
  parallel_for(f_count, [&](size_t f) {
    try {
      rays[f] = frame_boundary_rays(masks[f], cameras[f], config);
    } catch (const EmptySilhouetteError&) {
      skipped[f] = 1;
    }
  });
  std::vector<int> skipped_frames;
  for (size_t f = 0; f < f_count; ++f)
    if (skipped[f]) skipped_frames.push_back(static_cast<int>(f));
  if (skipped_frames.size() == f_count)
    throw EmptySilhouetteError("all frames have empty silhouettes");
  UnposedCloud cloud =
      build_unposed_cloud_from_rays(model, beta, offsets, poses, rays, cameras, config);
  cloud.stats.skipped_frames = std::move(skipped_frames);
  return cloud;
}

// ---------------------------------------------------------------------------
// Sidecar file: "HFCLOUD1", u32 frame count, u64 record count, u64 per-frame
// counts, then fixed-width records (u32 frame, u32 vertex, 6 doubles unposed,
// 6 doubles original, 1 double distance). Little-endian.

inline void save_cloud(const UnposedCloud& cloud, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path);
  out.write("HFCLOUD1", 8);
  uint32_t f = static_cast<uint32_t>(cloud.frame_count);
  uint64_t n = cloud.items.size();
  out.write(reinterpret_cast<const char*>(&f), 4);
  out.write(reinterpret_cast<const char*>(&n), 8);
  for (int64_t c : cloud.per_frame_counts) {
    uint64_t v = static_cast<uint64_t>(c);
    out.write(reinterpret_cast<const char*>(&v), 8);
  }
  for (const auto& c : cloud.items) {
    uint32_t ints[2] = {static_cast<uint32_t>(c.frame), static_cast<uint32_t>(c.vertex)};
    out.write(reinterpret_cast<const char*>(ints), 8);
    double vals[13] = {c.unposed.direction.x(),  c.unposed.direction.y(),
                       c.unposed.direction.z(),  c.unposed.moment.x(),
                       c.unposed.moment.y(),     c.unposed.moment.z(),
                       c.original.direction.x(), c.original.direction.y(),
                       c.original.direction.z(), c.original.moment.x(),
                       c.original.moment.y(),    c.original.moment.z(),
                       c.match_distance};
    out.write(reinterpret_cast<const char*>(vals), sizeof(vals));
  }
}

inline UnposedCloud load_cloud(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  char magic[8];
  in.read(magic, 8);
  if (std::string(magic, 8) != "HFCLOUD1")
    throw InvalidArgument(path + ": not an unposed-cloud file");
  uint32_t f = 0;
  uint64_t n = 0;
  in.read(reinterpret_cast<char*>(&f), 4);
  in.read(reinterpret_cast<char*>(&n), 8);
  UnposedCloud cloud;
  cloud.frame_count = static_cast<int>(f);
  cloud.per_frame_counts.resize(f);
  for (uint32_t i = 0; i < f; ++i) {
    uint64_t v = 0;
    in.read(reinterpret_cast<char*>(&v), 8);
    cloud.per_frame_counts[i] = static_cast<int64_t>(v);
  }
  cloud.items.resize(n);
  for (uint64_t i = 0; i < n; ++i) {
    uint32_t ints[2];
    double vals[13];
    in.read(reinterpret_cast<char*>(ints), 8);
    in.read(reinterpret_cast<char*>(vals), sizeof(vals));
    Correspondence& c = cloud.items[i];
    c.frame = static_cast<int>(ints[0]);
    c.vertex = static_cast<int>(ints[1]);
    c.unposed.direction = Vec3(vals[0], vals[1], vals[2]);
    c.unposed.moment = Vec3(vals[3], vals[4], vals[5]);
    c.original.direction = Vec3(vals[6], vals[7], vals[8]);
    c.original.moment = Vec3(vals[9], vals[10], vals[11]);
    c.match_distance = vals[12];
  }
  if (!in) throw IoError(path + ": truncated cloud file");
  cloud.stats.total_rays = cloud.stats.survived = static_cast<int64_t>(n);
  return cloud;
}

}  // namespace hullfuse
