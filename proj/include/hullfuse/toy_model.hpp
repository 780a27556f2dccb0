#pragma once

#include <array>
#include <cmath>
#include <map>
#include <numeric>
#include <string>
#include <vector>

#include "hullfuse/laplacian.hpp"
#include "hullfuse/model.hpp"

namespace hullfuse {

/// Parameters of the procedural capsule-limb body used by the synthetic
/// benchmark. The generated mesh is closed, manifold and exactly mirror
/// symmetric about the YZ plane.
struct ToyModelSpec {
  int vertex_target = 2200;
  double height = 1.75;         // meters, approximate standing height
  double radius_scale = 1.0;    // scales all capsule radii
};

namespace toybody {

struct Capsule {
  Vec3 a, b;
  double radius;
  int joint;  // driving joint for blend weights
};

inline double capsule_distance(const Vec3& p, const Capsule& c) {
  const Vec3 ab = c.b - c.a;
  double t = (p - c.a).dot(ab) / ab.squaredNorm();
  t = std::min(1.0, std::max(0.0, t));
  return (p - (c.a + t * ab)).norm() - c.radius;
}

inline double smooth_min(double a, double b, double k) {
  const double h = std::min(1.0, std::max(0.0, 0.5 + 0.5 * (b - a) / k));
  return b + (a - b) * h - k * h * (1.0 - h);
}

struct Skeleton {
  std::vector<Vec3> joints;           // 16 joints
  std::vector<int> parents;
  std::vector<std::string> names;
  std::vector<Capsule> capsules;      // center + left side; right side mirrored
  std::vector<int> mirror_joint;      // joint index under x-mirror
};

// Joint order: root, spine1, spine2, neck, l_shoulder, l_elbow, l_wrist,
// r_shoulder, r_elbow, r_wrist, l_hip, l_knee, l_ankle, r_hip, r_knee,
// r_ankle. The neck joint drives the head.
inline Skeleton make_skeleton(const ToyModelSpec& spec) {
  const double s = spec.height / 1.75;
  const double rs = spec.radius_scale;
  auto at = [&](double x, double y, double z) { return Vec3(x * s, y * s, z * s); };
  Skeleton sk;
  sk.joints = {at(0, 0.98, 0),      at(0, 1.15, 0),    at(0, 1.32, 0),
               at(0, 1.48, 0),      at(0.19, 1.42, 0), at(0.45, 1.42, 0),
               at(0.69, 1.42, 0),   at(-0.19, 1.42, 0), at(-0.45, 1.42, 0),
               at(-0.69, 1.42, 0),  at(0.10, 0.92, 0), at(0.10, 0.50, 0),
               at(0.10, 0.09, 0),   at(-0.10, 0.92, 0), at(-0.10, 0.50, 0),
               at(-0.10, 0.09, 0)};
  sk.parents = {-1, 0, 1, 2, 2, 4, 5, 2, 7, 8, 0, 10, 11, 0, 13, 14};
  sk.names = {"root",      "spine1",    "spine2",  "neck",    "l_shoulder",
              "l_elbow",   "l_wrist",   "r_shoulder", "r_elbow", "r_wrist",
              "l_hip",     "l_knee",    "l_ankle", "r_hip",   "r_knee",
              "r_ankle"};
  sk.mirror_joint = {0, 1, 2, 3, 7, 8, 9, 4, 5, 6, 13, 14, 15, 10, 11, 12};

  auto add = [&](double ax, double ay, double az, double bx, double by, double bz,
                 double r, int joint) {
    sk.capsules.push_back({at(ax, ay, az), at(bx, by, bz), r * s * rs, joint});
  };
  // center line
  add(0, 0.92, 0, 0, 1.02, 0, 0.130, 0);    // pelvis
  add(0, 0.98, 0, 0, 1.15, 0, 0.125, 0);    // lower torso
  add(0, 1.15, 0, 0, 1.32, 0, 0.125, 1);    // mid torso
  add(0, 1.32, 0, 0, 1.44, 0, 0.115, 2);    // chest
  add(0, 1.46, 0, 0, 1.52, 0, 0.056, 3);    // neck
  add(0, 1.53, 0, 0, 1.62, 0, 0.100, 3);    // head
  // left side (right side comes from the |x| mirror in the field)
  add(0.05, 1.40, 0, 0.19, 1.42, 0, 0.066, 2);   // clavicle
  add(0.19, 1.42, 0, 0.45, 1.42, 0, 0.054, 4);   // upper arm
  add(0.45, 1.42, 0, 0.69, 1.42, 0, 0.048, 5);   // forearm
  add(0.69, 1.42, 0, 0.80, 1.42, 0, 0.045, 6);   // hand
  add(0.02, 0.94, 0, 0.10, 0.92, 0, 0.092, 0);   // hip link
  add(0.10, 0.92, 0, 0.10, 0.50, 0, 0.086, 10);  // thigh
  add(0.10, 0.50, 0, 0.10, 0.09, 0, 0.062, 11);  // shin
  add(0.10, 0.09, 0, 0.10, 0.05, 0.14, 0.047, 12);  // foot
  return sk;
}

/// Body field: smooth union of the capsules, evaluated at (|x|, y, z) so the
/// surface is exactly mirror symmetric.
inline double body_sdf(const Skeleton& sk, const Vec3& p) {
  const Vec3 q(std::abs(p.x()), p.y(), p.z());
  const double blend = 0.02;
  double d = capsule_distance(q, sk.capsules[0]);
  for (size_t i = 1; i < sk.capsules.size(); ++i)
    d = smooth_min(d, capsule_distance(q, sk.capsules[i]), blend);
  return d;
}

struct RawMesh {
  std::vector<Vec3> vertices;
  std::vector<Eigen::Vector3i> faces;
  std::vector<std::pair<int, int>> symmetry_pairs;  // off-plane (right, left)
};

/// Marching tetrahedra over the right half-grid; the left half is an exact
/// mirror copy welded along the x = 0 grid plane.
inline RawMesh extract_surface(const Skeleton& sk, double cell) {
  // bounds: symmetric x range with an even cell count so x = 0 is a plane
  double max_r = 0, max_x = 0, min_y = 1e9, max_y = -1e9, max_z = 0;
  for (const auto& c : sk.capsules) {
    max_r = std::max(max_r, c.radius);
    max_x = std::max({max_x, std::abs(c.a.x()) + c.radius, std::abs(c.b.x()) + c.radius});
    min_y = std::min({min_y, c.a.y() - c.radius, c.b.y() - c.radius});
    max_y = std::max({max_y, c.a.y() + c.radius, c.b.y() + c.radius});
    max_z = std::max({max_z, std::abs(c.a.z()) + c.radius, std::abs(c.b.z()) + c.radius});
  }
  const double margin = 2 * cell;
  const int half_nx = static_cast<int>(std::ceil((max_x + margin) / cell));
  const int nx = 2 * half_nx;
  const double y0 = min_y - margin, z_extent = max_z + margin;
  const int ny = static_cast<int>(std::ceil((max_y + margin - y0) / cell));
  const int nz_half = static_cast<int>(std::ceil(z_extent / cell));
  const int nz = 2 * nz_half;

  auto grid_x = [&](int i) { return (i - half_nx) * cell; };
  auto grid_y = [&](int j) { return y0 + j * cell; };
  auto grid_z = [&](int k) { return (k - nz_half) * cell; };

  const int px = nx + 1, py = ny + 1, pz = nz + 1;
  auto gid = [&](int i, int j, int k) {
    return (static_cast<int64_t>(k) * py + j) * px + i;
  };
  std::vector<double> field(static_cast<size_t>(px) * py * pz);
  for (int k = 0; k < pz; ++k)
    for (int j = 0; j < py; ++j)
      for (int i = half_nx; i < px; ++i) {
        double d = body_sdf(sk, Vec3(grid_x(i), grid_y(j), grid_z(k)));
        if (std::abs(d) < 1e-12) d = 1e-12;  // keep crossings off grid points
        field[gid(i, j, k)] = d;
      }
  // mirror the samples (identical by construction, avoids re-evaluation)
  for (int k = 0; k < pz; ++k)
    for (int j = 0; j < py; ++j)
      for (int i = 0; i < half_nx; ++i)
        field[gid(i, j, k)] = field[gid(nx - i, j, k)];

  RawMesh mesh;
  std::map<std::pair<int64_t, int64_t>, int> edge_vertex;
  auto edge_point = [&](int64_t ga, int64_t gb, Vec3 pa, Vec3 pb) {
    if (ga > gb) {  // canonical orientation keeps interpolation bit-stable
      std::swap(ga, gb);
      std::swap(pa, pb);
    }
    const auto key = std::make_pair(ga, gb);
    auto it = edge_vertex.find(key);
    if (it != edge_vertex.end()) return it->second;
    const double da = field[ga], db = field[gb];
    const Vec3 p = pa + (da / (da - db)) * (pb - pa);
    mesh.vertices.push_back(p);
    int idx = static_cast<int>(mesh.vertices.size()) - 1;
    edge_vertex.emplace(key, idx);
    return idx;
  };

  // 6-tet split of the cube along the (0,0,0)-(1,1,1) diagonal; face
  // diagonals agree between neighboring cells under translation.
  static const int tets[6][4] = {{0, 5, 1, 6}, {0, 1, 2, 6}, {0, 2, 3, 6},
                                 {0, 3, 7, 6}, {0, 7, 4, 6}, {0, 4, 5, 6}};
  // cube corner offsets, bit order (x, y, z)
  static const int corner[8][3] = {{0, 0, 0}, {1, 0, 0}, {1, 1, 0}, {0, 1, 0},
                                   {0, 0, 1}, {1, 0, 1}, {1, 1, 1}, {0, 1, 1}};

  for (int k = 0; k < nz; ++k) {
    for (int j = 0; j < ny; ++j) {
      for (int i = half_nx; i < nx; ++i) {
        int64_t g[8];
        Vec3 p[8];
        double d[8];
        for (int c = 0; c < 8; ++c) {
          const int ci = i + corner[c][0], cj = j + corner[c][1], ck = k + corner[c][2];
          g[c] = gid(ci, cj, ck);
          p[c] = Vec3(grid_x(ci), grid_y(cj), grid_z(ck));
          d[c] = field[g[c]];
        }
        for (const auto& tet : tets) {
          int inside[4], n_in = 0;
          for (int v = 0; v < 4; ++v)
            if (d[tet[v]] < 0) inside[n_in++] = v;
          if (n_in == 0 || n_in == 4) continue;
          auto ep = [&](int va, int vb) {
            return edge_point(g[tet[va]], g[tet[vb]], p[tet[va]], p[tet[vb]]);
          };
          if (n_in == 1) {
            const int a = inside[0];
            int others[3], m = 0;
            for (int v = 0; v < 4; ++v)
              if (v != a) others[m++] = v;
            mesh.faces.emplace_back(ep(a, others[0]), ep(a, others[1]),
                                    ep(a, others[2]));
          } else if (n_in == 3) {
            int a = -1;
            for (int v = 0; v < 4; ++v) {
              bool is_in = false;
              for (int q = 0; q < 3; ++q) is_in |= inside[q] == v;
              if (!is_in) a = v;
            }
            int others[3], m = 0;
            for (int v = 0; v < 4; ++v)
              if (v != a) others[m++] = v;
            mesh.faces.emplace_back(ep(a, others[0]), ep(a, others[1]),
                                    ep(a, others[2]));
          } else {  // two inside: quad split into two triangles
            const int a = inside[0], b = inside[1];
            int outs[2], m = 0;
            for (int v = 0; v < 4; ++v)
              if (v != a && v != b) outs[m++] = v;
            const int e00 = ep(a, outs[0]), e01 = ep(a, outs[1]);
            const int e10 = ep(b, outs[0]), e11 = ep(b, outs[1]);
            mesh.faces.emplace_back(e00, e01, e10);
            mesh.faces.emplace_back(e10, e01, e11);
          }
        }
      }
    }
  }

  // mirror copy: reuse on-plane vertices, negate x elsewhere, flip winding
  const int right_count = static_cast<int>(mesh.vertices.size());
  std::vector<int> mirror_of(right_count);
  {
    std::map<std::pair<int64_t, int64_t>, int> by_key;
    for (const auto& [key, idx] : edge_vertex) by_key[key] = idx;
    auto mirror_gid = [&](int64_t id) {
      const int64_t i = id % px, rest = id / px;
      return rest * px + (nx - i);
    };
    for (const auto& [key, idx] : by_key) {
      auto mk = std::make_pair(mirror_gid(key.first), mirror_gid(key.second));
      if (mk.first > mk.second) std::swap(mk.first, mk.second);
      auto it = edge_vertex.find(mk);
      if (it != edge_vertex.end()) {
        mirror_of[idx] = it->second;  // on-plane edge maps to itself
      } else {
        Vec3 p = mesh.vertices[idx];
        p.x() = -p.x();
        mesh.vertices.push_back(p);
        mirror_of[idx] = static_cast<int>(mesh.vertices.size()) - 1;
        edge_vertex.emplace(mk, mirror_of[idx]);
      }
    }
  }
  const int face_count = static_cast<int>(mesh.faces.size());
  for (int f = 0; f < face_count; ++f) {
    const auto face = mesh.faces[f];
    mesh.faces.emplace_back(mirror_of[face[0]], mirror_of[face[2]], mirror_of[face[1]]);
  }
  for (int v = 0; v < right_count; ++v)
    if (mirror_of[v] != v) mesh.symmetry_pairs.emplace_back(v, mirror_of[v]);
  return mesh;
}

/// Orients all faces coherently (shared edges traversed in opposite
/// directions) and flips globally so normals point outward.
inline void orient_faces(RawMesh& mesh) {
  const int nf = static_cast<int>(mesh.faces.size());
  std::map<std::pair<int, int>, std::vector<int>> edge_faces;
  for (int f = 0; f < nf; ++f)
    for (int e = 0; e < 3; ++e) {
      int a = mesh.faces[f][e], b = mesh.faces[f][(e + 1) % 3];
      edge_faces[{std::min(a, b), std::max(a, b)}].push_back(f);
    }
  std::vector<int8_t> state(nf, 0);  // 0 unvisited, 1 keep, -1 flipped
  std::vector<int> stack;
  auto directed_edges = [&](int f, bool flipped, std::array<std::pair<int, int>, 3>& out) {
    auto face = mesh.faces[f];
    if (flipped) std::swap(face[1], face[2]);
    for (int e = 0; e < 3; ++e) out[e] = {face[e], face[(e + 1) % 3]};
  };
  for (int seed = 0; seed < nf; ++seed) {
    if (state[seed]) continue;
    state[seed] = 1;
    stack.push_back(seed);
    while (!stack.empty()) {
      int f = stack.back();
      stack.pop_back();
      std::array<std::pair<int, int>, 3> edges;
      directed_edges(f, state[f] < 0, edges);
      for (const auto& [a, b] : edges) {
        for (int g : edge_faces[{std::min(a, b), std::max(a, b)}]) {
          if (g == f || state[g]) continue;
          std::array<std::pair<int, int>, 3> ge;
          directed_edges(g, false, ge);
          bool same_dir = false;
          for (const auto& [ga, gb] : ge) same_dir |= (ga == a && gb == b);
          state[g] = same_dir ? -1 : 1;  // shared edge must run opposite ways
          stack.push_back(g);
        }
      }
    }
  }
  double volume = 0;
  for (int f = 0; f < nf; ++f) {
    auto face = mesh.faces[f];
    if (state[f] < 0) std::swap(face[1], face[2]);
    mesh.faces[f] = face;
    volume += mesh.vertices[face[0]].dot(
        mesh.vertices[face[1]].cross(mesh.vertices[face[2]]));
  }
  if (volume < 0)
    for (auto& face : mesh.faces) std::swap(face[1], face[2]);
}

struct TopologyCheck {
  bool closed_manifold = false;
  bool connected = false;
  int euler = 0;
};

inline TopologyCheck check_topology(const RawMesh& mesh) {
  TopologyCheck res;
  std::map<std::pair<int, int>, int> edge_count;
  for (const auto& f : mesh.faces)
    for (int e = 0; e < 3; ++e) {
      int a = f[e], b = f[(e + 1) % 3];
      if (a == b) return res;
      ++edge_count[{std::min(a, b), std::max(a, b)}];
    }
  res.closed_manifold = true;
  for (const auto& [edge, count] : edge_count)
    if (count != 2) res.closed_manifold = false;
  res.euler = static_cast<int>(mesh.vertices.size()) -
              static_cast<int>(edge_count.size()) +
              static_cast<int>(mesh.faces.size());
  auto adj = vertex_adjacency(mesh.faces, static_cast<int>(mesh.vertices.size()));
  std::vector<uint8_t> seen(mesh.vertices.size(), 0);
  std::vector<int> stack{0};
  seen[0] = 1;
  size_t visited = 1;
  while (!stack.empty()) {
    int v = stack.back();
    stack.pop_back();
    for (int u : adj[v])
      if (!seen[u]) {
        seen[u] = 1;
        ++visited;
        stack.push_back(u);
      }
  }
  res.connected = visited == mesh.vertices.size();
  return res;
}

}  // namespace toybody

/// Builds the procedural toy body. Deterministic in the spec; throws
/// InvalidArgument when no grid resolution yields a closed connected manifold
/// within 10% of the vertex target.
inline SkinnedModel generate_toy_model(const ToyModelSpec& spec) {
  using namespace toybody;
  if (spec.vertex_target < 200)
    throw InvalidArgument("toy model: vertex target too small");
  if (spec.height < 0.5 || spec.height > 3.0)
    throw InvalidArgument("toy model: height out of range");
  const Skeleton sk = make_skeleton(spec);

  // estimated surface area drives the first grid guess; marching tetrahedra
  // put roughly two vertices per crossed cell
  double area = 0;
  for (const auto& c : sk.capsules)
    area += 2 * M_PI * c.radius * ((c.b - c.a).norm() + 2 * c.radius);
  double cell = std::sqrt(1.4 * area / spec.vertex_target);

  RawMesh mesh;
  bool ok = false;
  for (int attempt = 0; attempt < 8; ++attempt) {
    mesh = extract_surface(sk, cell);
    const auto topo = check_topology(mesh);
    const double ratio =
        static_cast<double>(mesh.vertices.size()) / spec.vertex_target;
    if (topo.closed_manifold && topo.connected && topo.euler == 2 &&
        ratio >= 0.9 && ratio <= 1.1) {
      ok = true;
      break;
    }
    if (!topo.closed_manifold || !topo.connected || topo.euler != 2) {
      cell *= 0.85;  // refine until thin parts stop pinching off
    } else {
      cell *= std::sqrt(ratio);
    }
  }
  if (!ok)
    throw InvalidArgument("toy model generation failed: no valid mesh near target");
  orient_faces(mesh);

  const int n = static_cast<int>(mesh.vertices.size());
  const int k_joints = static_cast<int>(sk.joints.size());
  SkinnedModel model;
  model.template_vertices.resize(n, 3);
  for (int i = 0; i < n; ++i) model.template_vertices.row(i) = mesh.vertices[i].transpose();
  model.faces = mesh.faces;
  model.parents = sk.parents;
  model.joint_names = sk.names;
  model.symmetry_pairs = mesh.symmetry_pairs;

  // full capsule list (left capsules plus explicit right mirrors) for weights
  std::vector<Capsule> all = sk.capsules;
  for (const auto& c : sk.capsules) {
    if (c.a.x() == 0 && c.b.x() == 0) continue;
    Capsule m = c;
    m.a.x() = -m.a.x();
    m.b.x() = -m.b.x();
    m.joint = sk.mirror_joint[c.joint];
    all.push_back(m);
  }

  // raw weights: gaussian in distance to each joint's nearest capsule
  MatX w = MatX::Zero(n, k_joints);
  const double falloff = 0.06 * spec.height / 1.75;
  for (int i = 0; i < n; ++i) {
    VecX best = VecX::Constant(k_joints, 1e9);
    for (const auto& c : all)
      best[c.joint] = std::min(
          best[c.joint], std::max(0.0, capsule_distance(mesh.vertices[i], c)));
    for (int k = 0; k < k_joints; ++k)
      w(i, k) = std::exp(-(best[k] * best[k]) / (falloff * falloff));
  }
  // smooth over the mesh, then keep the four strongest bones per vertex
  auto adjacency = vertex_adjacency(mesh.faces, n);
  for (int round = 0; round < 2; ++round) {
    MatX next = w;
    for (int i = 0; i < n; ++i) {
      for (int u : adjacency[i]) next.row(i) += w.row(u);
      next.row(i) /= 1.0 + adjacency[i].size();
    }
    w = next;
  }
  model.blend_weights.assign(n, {});
  for (int i = 0; i < n; ++i) {
    std::vector<std::pair<double, int>> ranked;
    for (int k = 0; k < k_joints; ++k) ranked.emplace_back(w(i, k), k);
    std::sort(ranked.rbegin(), ranked.rend());
    double sum = 0;
    for (int q = 0; q < 4; ++q) sum += ranked[q].first;
    for (int q = 0; q < 4; ++q) {
      if (ranked[q].first < 1e-4 * sum) continue;
      model.blend_weights[i].emplace_back(ranked[q].second, ranked[q].first / sum);
    }
    // renormalize after pruning
    double kept = 0;
    for (auto& [k, wv] : model.blend_weights[i]) kept += wv;
    for (auto& [k, wv] : model.blend_weights[i]) wv /= kept;
    std::sort(model.blend_weights[i].begin(), model.blend_weights[i].end());
  }
  // exact mirror symmetry: copy right-side weights to the left partner with
  // joints swapped, and average paired joints on the plane itself
  for (const auto& [r, l] : mesh.symmetry_pairs) {
    model.blend_weights[l].clear();
    for (const auto& [k, wv] : model.blend_weights[r])
      model.blend_weights[l].emplace_back(sk.mirror_joint[k], wv);
    std::sort(model.blend_weights[l].begin(), model.blend_weights[l].end());
  }
  {
    std::vector<uint8_t> on_plane(n, 1);
    for (const auto& [r, l] : mesh.symmetry_pairs) on_plane[r] = on_plane[l] = 0;
    for (int i = 0; i < n; ++i) {
      if (!on_plane[i]) continue;
      std::map<int, double> wm;
      for (const auto& [k, wv] : model.blend_weights[i]) wm[k] += wv;
      std::map<int, double> sym;
      for (const auto& [k, wv] : wm) {
        const int mk = sk.mirror_joint[k];
        if (mk == k) {
          sym[k] = wv;
        } else {
          const double paired = 0.5 * (wv + (wm.count(mk) ? wm[mk] : 0.0));
          sym[k] = paired;
          sym[mk] = paired;
        }
      }
      model.blend_weights[i].assign(sym.begin(), sym.end());
      double sum = 0;
      for (auto& [k, wv] : model.blend_weights[i]) sum += wv;
      for (auto& [k, wv] : model.blend_weights[i]) wv /= sum;
    }
  }

  // joint regressor: uniform average over a ball around each joint
  {
    std::vector<Triplet> trips;
    for (int k = 0; k < k_joints; ++k) {
      double rad = 0;
      for (const auto& c : all)
        if (c.joint == k) rad = std::max(rad, c.radius);
      rad = std::max(rad * 1.6, 0.07 * spec.height / 1.75);
      std::vector<int> members;
      for (int grow = 0; grow < 5 && members.empty(); ++grow, rad *= 1.4)
        for (int i = 0; i < n; ++i)
          if ((mesh.vertices[i] - sk.joints[k]).norm() <= rad) members.push_back(i);
      for (int i : members)
        trips.emplace_back(k, i, 1.0 / static_cast<double>(members.size()));
    }
    model.joint_regressor.resize(k_joints, n);
    model.joint_regressor.setFromTriplets(trips.begin(), trips.end());
  }

  // shape basis: height, girth, limb length, torso length
  {
    const double s = spec.height / 1.75;
    model.shape_basis = MatX::Zero(3 * n, 4);
    for (int i = 0; i < n; ++i) {
      const Vec3 v = mesh.vertices[i];
      model.shape_basis(3 * i + 1, 0) = 0.10 * v.y();                     // height
      model.shape_basis(3 * i + 0, 1) = 0.10 * v.x();                     // girth
      model.shape_basis(3 * i + 2, 1) = 0.10 * v.z();
      const double shoulder_x = 0.19 * s, hip_y = 0.92 * s;
      double arm = std::max(0.0, std::abs(v.x()) - shoulder_x);
      model.shape_basis(3 * i + 0, 2) = 0.12 * (v.x() > 0 ? arm : -arm);  // limbs
      model.shape_basis(3 * i + 1, 2) = -0.12 * std::max(0.0, hip_y - v.y());
      const double chest_y = 1.42 * s;
      double torso = std::min(1.0, std::max(0.0, (v.y() - hip_y) / (chest_y - hip_y)));
      model.shape_basis(3 * i + 1, 3) = 0.10 * torso;                     // torso
    }
  }

  // regularization weights; hands, feet and head get pulled to the body model
  model.gamma_laplacian = VecX::Ones(n);
  model.gamma_variance = VecX::Ones(n);
  model.gamma_symmetry = VecX::Ones(n);
  {
    std::vector<int> hands, feet, head;
    for (int i = 0; i < n; ++i) {
      int dominant = -1;
      double best = -1;
      for (const auto& [k, wv] : model.blend_weights[i])
        if (wv > best) {
          best = wv;
          dominant = k;
        }
      bool is_hand = dominant == 6 || dominant == 9;
      bool is_foot = dominant == 12 || dominant == 15;
      bool is_head = dominant == 3;
      if (is_hand) hands.push_back(i);
      if (is_foot) feet.push_back(i);
      if (is_head) head.push_back(i);
      if (is_hand || is_foot || is_head) {
        model.gamma_variance[i] = 10.0;
        model.gamma_laplacian[i] = 4.0;
      }
    }
    model.regions = {{"hands", hands}, {"feet", feet}, {"head", head}};
  }
  return model;
}

}  // namespace hullfuse
