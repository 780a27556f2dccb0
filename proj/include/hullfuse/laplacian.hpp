#pragma once

#include <set>
#include <vector>

#include "hullfuse/common.hpp"

namespace hullfuse {

struct LaplacianResult {
  SpMat op;                        // N x N, row i = v_i - mean(1-ring of i)
  std::vector<int> isolated;       // vertices with no incident face (zero rows)
};

/// Sorted 1-ring adjacency from triangle connectivity.
inline std::vector<std::vector<int>> vertex_adjacency(
    const std::vector<Eigen::Vector3i>& faces, int n) {
  std::vector<std::set<int>> nbr(n);
  for (const auto& f : faces) {
    for (int e = 0; e < 3; ++e) {
      int a = f[e], b = f[(e + 1) % 3];
      nbr[a].insert(b);
      nbr[b].insert(a);
    }
  }
  std::vector<std::vector<int>> out(n);
  for (int i = 0; i < n; ++i) out[i].assign(nbr[i].begin(), nbr[i].end());
  return out;
}

/// Uniform graph Laplacian. Rows sum to zero; isolated vertices produce zero
/// rows and are reported rather than rejected.
inline LaplacianResult uniform_laplacian(const std::vector<Eigen::Vector3i>& faces,
                                         int n) {
  auto adjacency = vertex_adjacency(faces, n);
  LaplacianResult res;
  std::vector<Triplet> trips;
  for (int i = 0; i < n; ++i) {
    const auto& nbrs = adjacency[i];
    if (nbrs.empty()) {
      res.isolated.push_back(i);
      continue;
    }
    trips.emplace_back(i, i, 1.0);
    const double w = -1.0 / static_cast<double>(nbrs.size());
    for (int j : nbrs) trips.emplace_back(i, j, w);
  }
  res.op.resize(n, n);
  res.op.setFromTriplets(trips.begin(), trips.end());
  return res;
}

/// L applied to vertex positions, row per vertex.
inline MatX3 apply_laplacian(const SpMat& op, const MatX3& vertices) {
  return op * vertices;
}

}  // namespace hullfuse
