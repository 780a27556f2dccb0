#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "hullfuse/laplacian.hpp"
#include "hullfuse/mask.hpp"
#include "hullfuse/model.hpp"
#include "hullfuse/rasterize.hpp"
#include "hullfuse/synth.hpp"
#include "hullfuse/threading.hpp"

namespace hullfuse {

// Depth tolerance for vertex visibility, relative to the vertex's depth.
inline constexpr double kVisibilityDepthTolerance = 0.01;

struct VertexColorSamples {
  struct Sample {
    Vec3 color;           // [0, 1]
    double orthogonality; // facing ratio in (0, 1]
    int frame;
  };
  std::vector<std::vector<Sample>> per_vertex;
  std::vector<int> never_visible;  // vertices with no sample in any frame
};

/// Poses the refined meshes into every frame, tests per-vertex visibility
/// against a depth buffer and samples the image color bilinearly at each
/// visible vertex's projection.
inline VertexColorSamples backproject_colors(
    const SkinnedModel& model, const VecX& beta,
    const std::vector<MatX3>& per_frame_offsets, const std::vector<Pose>& poses,
    const std::vector<RgbImage>& frames, const std::vector<PinholeCamera>& cameras) {
  const size_t f_count = poses.size();
  if (frames.size() != f_count || cameras.size() != f_count ||
      per_frame_offsets.size() != f_count)
    throw InvalidArgument("backproject: per-frame input counts disagree");
  const int n = model.vertex_count();
  VertexColorSamples out;
  out.per_vertex.resize(n);
  std::vector<std::vector<std::vector<VertexColorSamples::Sample>>> per_frame(f_count);
  parallel_for(f_count, [&](size_t f) {
    per_frame[f].resize(n);
    const MatX3 posed = skin(model, beta, poses[f], per_frame_offsets[f]);
    const MatX3 normals = vertex_normals(posed, model.faces);
    const ScalarField depth = rasterize_depth(posed, model.faces, cameras[f]);
    const Vec3 center = cameras[f].camera_center();
    for (int i = 0; i < n; ++i) {
      const Vec3 v = posed.row(i).transpose();
      const Vec3 c = cameras[f].to_camera(v);
      if (c.z() < kNearPlane) continue;
      const Vec2 px = cameras[f].project(v);
      const int ix = static_cast<int>(px.x()), iy = static_cast<int>(px.y());
      if (ix < 0 || iy < 0 || ix >= cameras[f].width || iy >= cameras[f].height)
        continue;
      if (c.z() > depth.at(ix, iy) + kVisibilityDepthTolerance * c.z()) continue;
      const double ortho = normals.row(i).dot((center - v).normalized().transpose());
      if (ortho <= 0) continue;
      per_frame[f][i].push_back(
          {frames[f].sample_bilinear(px), ortho, static_cast<int>(f)});
    }
  });
  for (size_t f = 0; f < f_count; ++f)
    for (int i = 0; i < n; ++i)
      out.per_vertex[i].insert(out.per_vertex[i].end(), per_frame[f][i].begin(),
                               per_frame[f][i].end());
  for (int i = 0; i < n; ++i)
    if (out.per_vertex[i].empty()) out.never_visible.push_back(i);
  return out;
}

struct FusedTexture {
  MatX3 colors;             // per-vertex RGB in [0, 1]
  std::vector<int> coverage;  // samples per vertex before the top-q cut
  std::vector<int> inpainted; // vertices filled from neighbors
};

namespace detail {
inline double channel_median(std::vector<double>& vals) {
  std::sort(vals.begin(), vals.end());
  const size_t n = vals.size();
  return n % 2 ? vals[n / 2] : 0.5 * (vals[n / 2 - 1] + vals[n / 2]);
}
}  // namespace detail

/// Keeps the top_q most orthogonal samples per vertex and takes per-channel
/// medians; uncovered vertices are filled by iterative averaging over colored
/// neighbors. Throws when no vertex has a sample at all.
inline FusedTexture fuse_texture(const VertexColorSamples& samples,
                                 const std::vector<Eigen::Vector3i>& faces,
                                 int top_q = 5) {
  const int n = static_cast<int>(samples.per_vertex.size());
  FusedTexture out;
  out.colors = MatX3::Zero(n, 3);
  out.coverage.resize(n, 0);
  std::vector<uint8_t> colored(n, 0);
  int any = 0;
  for (int i = 0; i < n; ++i) {
    auto list = samples.per_vertex[i];
    out.coverage[i] = static_cast<int>(list.size());
    if (list.empty()) continue;
    std::stable_sort(list.begin(), list.end(), [](const auto& a, const auto& b) {
      return a.orthogonality > b.orthogonality;
    });
    if (static_cast<int>(list.size()) > top_q) list.resize(top_q);
    for (int ch = 0; ch < 3; ++ch) {
      std::vector<double> vals;
      vals.reserve(list.size());
      for (const auto& s : list) vals.push_back(s.color[ch]);
      out.colors(i, ch) = detail::channel_median(vals);
    }
    colored[i] = 1;
    ++any;
  }
  if (any == 0) throw InvalidArgument("texture fusion: mesh entirely uncovered");

  auto adjacency = vertex_adjacency(faces, n);
  for (int round = 0; round < n && any < n; ++round) {
    bool progress = false;
    std::vector<uint8_t> next_colored = colored;
    for (int i = 0; i < n; ++i) {
      if (colored[i]) continue;
      Vec3 acc = Vec3::Zero();
      int count = 0;
      for (int u : adjacency[i])
        if (colored[u]) {
          acc += out.colors.row(u).transpose();
          ++count;
        }
      if (count > 0) {
        out.colors.row(i) = (acc / count).transpose();
        next_colored[i] = 1;
        out.inpainted.push_back(i);
        ++any;
        progress = true;
      }
    }
    colored = std::move(next_colored);
    if (!progress) break;
  }
  return out;
}

}  // namespace hullfuse
