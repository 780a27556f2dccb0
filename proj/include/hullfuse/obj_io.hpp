#pragma once

#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "hullfuse/common.hpp"

namespace hullfuse {

struct ObjMesh {
  MatX3 vertices;
  std::vector<Eigen::Vector3i> faces;
  MatX3 colors;  // empty or N x 3 in [0,1]

  bool has_colors() const { return colors.rows() == vertices.rows() && colors.rows() > 0; }
};

/// Writes OBJ with optional per-vertex colors ("v x y z r g b"). Doubles are
/// printed with 17 significant digits so meshes round-trip exactly.
inline void write_obj(const ObjMesh& mesh, const std::string& path) {
  std::FILE* f = std::fopen(path.c_str(), "w");
  if (!f) throw IoError("cannot write " + path);
  for (int i = 0; i < mesh.vertices.rows(); ++i) {
    if (mesh.has_colors()) {
      std::fprintf(f, "v %.17g %.17g %.17g %.6g %.6g %.6g\n", mesh.vertices(i, 0),
                   mesh.vertices(i, 1), mesh.vertices(i, 2), mesh.colors(i, 0),
                   mesh.colors(i, 1), mesh.colors(i, 2));
    } else {
      std::fprintf(f, "v %.17g %.17g %.17g\n", mesh.vertices(i, 0), mesh.vertices(i, 1),
                   mesh.vertices(i, 2));
    }
  }
  for (const auto& face : mesh.faces)
    std::fprintf(f, "f %d %d %d\n", face[0] + 1, face[1] + 1, face[2] + 1);
  std::fclose(f);
}

inline ObjMesh read_obj(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  std::vector<Vec3> verts, colors;
  std::vector<Eigen::Vector3i> faces;
  bool any_color = false;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ss(line);
    std::string tag;
    ss >> tag;
    if (tag == "v") {
      double x, y, z, r, g, b;
      ss >> x >> y >> z;
      if (!ss) throw InvalidArgument(path + ": malformed vertex line");
      verts.emplace_back(x, y, z);
      if (ss >> r >> g >> b) {
        colors.emplace_back(r, g, b);
        any_color = true;
      } else {
        colors.emplace_back(0, 0, 0);
      }
    } else if (tag == "f") {
      std::vector<int> idx;
      std::string tok;
      while (ss >> tok) {
        // accept v, v/vt, v//vn, v/vt/vn
        idx.push_back(std::stoi(tok.substr(0, tok.find('/'))));
      }
      if (idx.size() < 3) throw InvalidArgument(path + ": face with fewer than 3 vertices");
      for (size_t k = 2; k < idx.size(); ++k)  // fan-triangulate polygons
        faces.emplace_back(idx[0] - 1, idx[k - 1] - 1, idx[k] - 1);
    }
  }
  ObjMesh mesh;
  mesh.vertices.resize(static_cast<Eigen::Index>(verts.size()), 3);
  for (size_t i = 0; i < verts.size(); ++i) mesh.vertices.row(static_cast<Eigen::Index>(i)) = verts[i].transpose();
  mesh.faces = std::move(faces);
  if (any_color) {
    mesh.colors.resize(static_cast<Eigen::Index>(colors.size()), 3);
    for (size_t i = 0; i < colors.size(); ++i)
      mesh.colors.row(static_cast<Eigen::Index>(i)) = colors[i].transpose();
  }
  for (const auto& face : mesh.faces)
    if (face.minCoeff() < 0 || face.maxCoeff() >= mesh.vertices.rows())
      throw InvalidArgument(path + ": face index out of range");
  return mesh;
}

}  // namespace hullfuse
