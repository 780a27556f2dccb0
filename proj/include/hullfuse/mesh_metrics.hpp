#pragma once

#include <Eigen/SVD>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <vector>

#include "hullfuse/common.hpp"
#include "hullfuse/threading.hpp"

namespace hullfuse {

/// Closest point on a triangle (exact region classification).
inline Vec3 closest_point_on_triangle(const Vec3& p, const Vec3& a, const Vec3& b,
                                      const Vec3& c) {
  const Vec3 ab = b - a, ac = c - a, ap = p - a;
  const double d1 = ab.dot(ap), d2 = ac.dot(ap);
  if (d1 <= 0 && d2 <= 0) return a;
  const Vec3 bp = p - b;
  const double d3 = ab.dot(bp), d4 = ac.dot(bp);
  if (d3 >= 0 && d4 <= d3) return b;
  const double vc = d1 * d4 - d3 * d2;
  if (vc <= 0 && d1 >= 0 && d3 <= 0) return a + (d1 / (d1 - d3)) * ab;
  const Vec3 cp = p - c;
  const double d5 = ab.dot(cp), d6 = ac.dot(cp);
  if (d6 >= 0 && d5 <= d6) return c;
  const double vb = d5 * d2 - d1 * d6;
  if (vb <= 0 && d2 >= 0 && d6 <= 0) return a + (d2 / (d2 - d6)) * ac;
  const double va = d3 * d6 - d5 * d4;
  if (va <= 0 && (d4 - d3) >= 0 && (d5 - d6) >= 0)
    return b + ((d4 - d3) / ((d4 - d3) + (d5 - d6))) * (c - b);
  const double denom = 1.0 / (va + vb + vc);
  return a + (vb * denom) * ab + (vc * denom) * ac;
}

/// Median-split AABB tree over triangles for nearest-surface queries.
class TriangleBvh {
 public:
  TriangleBvh(const MatX3& vertices, const std::vector<Eigen::Vector3i>& faces)
      : vertices_(vertices), faces_(faces) {
    if (faces.empty()) throw InvalidArgument("BVH: empty mesh");
    order_.resize(faces.size());
    std::iota(order_.begin(), order_.end(), 0);
    centroids_.resize(faces.size());
    for (size_t f = 0; f < faces.size(); ++f)
      centroids_[f] = (vertices.row(faces[f][0]) + vertices.row(faces[f][1]) +
                       vertices.row(faces[f][2]))
                          .transpose() /
                      3.0;
    nodes_.reserve(2 * faces.size());
    build(0, faces.size());
  }

  /// Nearest point on the surface and its squared distance.
  std::pair<Vec3, double> nearest(const Vec3& p) const {
    Vec3 best_point = Vec3::Zero();
    double best = std::numeric_limits<double>::infinity();
    query(0, p, &best, &best_point);
    return {best_point, best};
  }

  double distance(const Vec3& p) const { return std::sqrt(nearest(p).second); }

 private:
  struct Node {
    Vec3 lo, hi;
    int left = -1, right = -1;  // children, or leaf range when left < 0
    size_t begin = 0, end = 0;
  };

  int build(size_t begin, size_t end) {
    const int idx = static_cast<int>(nodes_.size());
    nodes_.push_back({});
    Vec3 lo = Vec3::Constant(std::numeric_limits<double>::infinity());
    Vec3 hi = -lo;
    for (size_t i = begin; i < end; ++i) {
      const auto& f = faces_[order_[i]];
      for (int v = 0; v < 3; ++v) {
        lo = lo.cwiseMin(vertices_.row(f[v]).transpose());
        hi = hi.cwiseMax(vertices_.row(f[v]).transpose());
      }
    }
    nodes_[idx].lo = lo;
    nodes_[idx].hi = hi;
    if (end - begin <= 4) {
      nodes_[idx].begin = begin;
      nodes_[idx].end = end;
      return idx;
    }
    int axis = 0;
    (hi - lo).maxCoeff(&axis);
    const size_t mid = (begin + end) / 2;
    std::nth_element(order_.begin() + begin, order_.begin() + mid,
                     order_.begin() + end, [&](int a, int b) {
                       return centroids_[a][axis] < centroids_[b][axis] ||
                              (centroids_[a][axis] == centroids_[b][axis] && a < b);
                     });
    const int left = build(begin, mid);
    const int right = build(mid, end);
    nodes_[idx].left = left;
    nodes_[idx].right = right;
    return idx;
  }

  double box_sqdist(const Node& n, const Vec3& p) const {
    const Vec3 d = (n.lo - p).cwiseMax(0.0).cwiseMax(p - n.hi);
    return d.squaredNorm();
  }

  void query(int idx, const Vec3& p, double* best, Vec3* best_point) const {
    const Node& n = nodes_[idx];
    if (box_sqdist(n, p) >= *best) return;
    if (n.left < 0) {
      for (size_t i = n.begin; i < n.end; ++i) {
        const auto& f = faces_[order_[i]];
        const Vec3 q = closest_point_on_triangle(p, vertices_.row(f[0]).transpose(),
                                                 vertices_.row(f[1]).transpose(),
                                                 vertices_.row(f[2]).transpose());
        const double d = (q - p).squaredNorm();
        if (d < *best) {
          *best = d;
          *best_point = q;
        }
      }
      return;
    }
    const double dl = box_sqdist(nodes_[n.left], p);
    const double dr = box_sqdist(nodes_[n.right], p);
    if (dl < dr) {
      query(n.left, p, best, best_point);
      query(n.right, p, best, best_point);
    } else {
      query(n.right, p, best, best_point);
      query(n.left, p, best, best_point);
    }
  }

  const MatX3 vertices_;
  const std::vector<Eigen::Vector3i> faces_;
  std::vector<int> order_;
  std::vector<Vec3> centroids_;
  std::vector<Node> nodes_;
};

/// Similarity transform q = scale * rotation * p + translation.
struct SimilarityTransform {
  double scale = 1.0;
  Mat3 rotation = Mat3::Identity();
  Vec3 translation = Vec3::Zero();

  Vec3 apply(const Vec3& p) const { return scale * (rotation * p) + translation; }

  MatX3 apply(const MatX3& pts) const {
    MatX3 out(pts.rows(), 3);
    for (int i = 0; i < pts.rows(); ++i) out.row(i) = apply(pts.row(i).transpose()).transpose();
    return out;
  }

  SimilarityTransform inverse() const {
    SimilarityTransform inv;
    inv.scale = 1.0 / scale;
    inv.rotation = rotation.transpose();
    inv.translation = -inv.scale * (inv.rotation * translation);
    return inv;
  }
};

/// Closed-form similarity alignment of paired point sets (Umeyama).
inline SimilarityTransform umeyama_alignment(const MatX3& source, const MatX3& target) {
  if (source.rows() != target.rows() || source.rows() < 3)
    throw InvalidArgument("alignment needs >= 3 paired points of equal count");
  const Vec3 mu_s = source.colwise().mean().transpose();
  const Vec3 mu_t = target.colwise().mean().transpose();
  const MatX3 cs = source.rowwise() - mu_s.transpose();
  const MatX3 ct = target.rowwise() - mu_t.transpose();
  const Mat3 cov = (ct.transpose() * cs) / static_cast<double>(source.rows());
  Eigen::JacobiSVD<Mat3> svd(cov, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Mat3 s = Mat3::Identity();
  if (svd.matrixU().determinant() * svd.matrixV().determinant() < 0) s(2, 2) = -1;
  SimilarityTransform t;
  t.rotation = svd.matrixU() * s * svd.matrixV().transpose();
  const double var_s = cs.rowwise().squaredNorm().mean();
  t.scale = (svd.singularValues().asDiagonal() * s).trace() / var_s;
  t.translation = mu_t - t.scale * (t.rotation * mu_s);
  return t;
}

/// Similarity alignment of a reconstruction onto a reference mesh. Identical
/// vertex counts use the closed form directly; otherwise nearest-surface ICP
/// refines the similarity for `icp_iterations` rounds.
inline SimilarityTransform align(const MatX3& reconstruction,
                                 const std::vector<Eigen::Vector3i>& recon_faces,
                                 const MatX3& reference,
                                 const std::vector<Eigen::Vector3i>& reference_faces,
                                 int icp_iterations = 20) {
  if (reconstruction.rows() == reference.rows())
    return umeyama_alignment(reconstruction, reference);
  (void)recon_faces;
  TriangleBvh bvh(reference, reference_faces);
  SimilarityTransform t;
  for (int iter = 0; iter < icp_iterations; ++iter) {
    MatX3 moved = t.apply(reconstruction);
    MatX3 targets(moved.rows(), 3);
    for (int i = 0; i < moved.rows(); ++i)
      targets.row(i) = bvh.nearest(moved.row(i).transpose()).first.transpose();
    t = umeyama_alignment(reconstruction, targets);
  }
  return t;
}

struct BidirectionalError {
  double mean_mm = 0;
  double std_mm = 0;
  double forward_mean_mm = 0;   // reconstruction vertices to reference surface
  double backward_mean_mm = 0;  // reference vertices to reconstruction surface
  VecX forward_mm;              // per reconstruction vertex
  VecX backward_mm;             // per reference vertex
};

/// Bidirectional vertex-to-surface distances in millimeters; the summary
/// pools both directions.
inline BidirectionalError bidirectional_error(
    const MatX3& recon, const std::vector<Eigen::Vector3i>& recon_faces,
    const MatX3& reference, const std::vector<Eigen::Vector3i>& reference_faces) {
  TriangleBvh to_ref(reference, reference_faces);
  TriangleBvh to_recon(recon, recon_faces);
  BidirectionalError err;
  err.forward_mm.resize(recon.rows());
  err.backward_mm.resize(reference.rows());
  parallel_for(static_cast<size_t>(recon.rows()), [&](size_t i) {
    err.forward_mm[static_cast<Eigen::Index>(i)] =
        1000.0 * to_ref.distance(recon.row(static_cast<Eigen::Index>(i)).transpose());
  });
  parallel_for(static_cast<size_t>(reference.rows()), [&](size_t i) {
    err.backward_mm[static_cast<Eigen::Index>(i)] =
        1000.0 *
        to_recon.distance(reference.row(static_cast<Eigen::Index>(i)).transpose());
  });
  const double n = static_cast<double>(recon.rows() + reference.rows());
  const double sum = err.forward_mm.sum() + err.backward_mm.sum();
  err.mean_mm = sum / n;
  const double sq = err.forward_mm.squaredNorm() + err.backward_mm.squaredNorm();
  err.std_mm = std::sqrt(std::max(0.0, sq / n - err.mean_mm * err.mean_mm));
  err.forward_mean_mm = err.forward_mm.mean();
  err.backward_mean_mm = err.backward_mm.mean();
  return err;
}

/// Linear blue-to-red colormap clamped to [0, 20] millimeters.
inline MatX3 error_heatmap(const VecX& distances_mm) {
  MatX3 colors(distances_mm.size(), 3);
  for (int i = 0; i < distances_mm.size(); ++i) {
    const double t = std::min(1.0, std::max(0.0, distances_mm[i] / 20.0));
    colors.row(i) = Vec3(t, 0.0, 1.0 - t).transpose();
  }
  return colors;
}

}  // namespace hullfuse
