#pragma once

#include <fstream>
#include <string>

#include <json.hpp>

#include "hullfuse/model.hpp"

namespace hullfuse {

// Mirror tolerance for symmetry pairs in the template, meters.
inline constexpr double kSymmetryTolerance = 1e-4;

/// Checks every SkinnedModel invariant; throws InvalidArgument on the first
/// violation, naming the offending field.
inline void validate_model(const SkinnedModel& model) {
  const int n = model.vertex_count();
  const int k_joints = model.joint_count();
  if (n == 0) throw InvalidArgument("model: empty template");
  if (k_joints == 0) throw InvalidArgument("model: empty kinematic tree");
  detail::topological_order(model);  // single root, no cycles
  if (static_cast<int>(model.blend_weights.size()) != n)
    throw InvalidArgument("model: blend_weights size mismatch");
  for (int i = 0; i < n; ++i) {
    double sum = 0;
    for (const auto& [k, w] : model.blend_weights[i]) {
      if (k < 0 || k >= k_joints)
        throw InvalidArgument("model: blend weight joint index out of range");
      if (w < 0) throw InvalidArgument("model: negative blend weight at vertex " +
                                       std::to_string(i));
      sum += w;
    }
    if (std::abs(sum - 1.0) > 1e-6)
      throw InvalidArgument("model: blend weights of vertex " + std::to_string(i) +
                            " sum to " + std::to_string(sum));
  }
  if (model.joint_regressor.rows() != k_joints || model.joint_regressor.cols() != n)
    throw InvalidArgument("model: joint_regressor shape mismatch");
  if (model.shape_basis.rows() != 3 * n)
    throw InvalidArgument("model: shape_basis row count must be 3N");
  if (model.has_pose_basis() && (model.pose_basis.rows() != 3 * n ||
                                 model.pose_basis.cols() != 9 * (k_joints - 1)))
    throw InvalidArgument("model: pose_basis must be 3N x 9(K-1)");
  for (const auto& [i, j] : model.symmetry_pairs) {
    if (i < 0 || i >= n || j < 0 || j >= n)
      throw InvalidArgument("model: symmetry pair index out of range");
    Vec3 mirrored = model.template_vertices.row(i).transpose();
    mirrored.x() = -mirrored.x();
    if ((mirrored - model.template_vertices.row(j).transpose()).norm() >
        kSymmetryTolerance)
      throw InvalidArgument("model: symmetry pair (" + std::to_string(i) + "," +
                            std::to_string(j) + ") violates mirror tolerance");
  }
  for (const VecX* g : {&model.gamma_laplacian, &model.gamma_variance,
                        &model.gamma_symmetry}) {
    if (g->size() != n)
      throw InvalidArgument("model: regularization weight field size mismatch");
    if (g->minCoeff() < 0)
      throw InvalidArgument("model: regularization weights must be nonnegative");
  }
  for (const auto& f : model.faces)
    if (f.minCoeff() < 0 || f.maxCoeff() >= n)
      throw InvalidArgument("model: face index out of range");
}

namespace detail {

inline SpMat sparse_from_triplets(const nlohmann::json& j, int rows, int cols,
                                  const char* field) {
  std::vector<Triplet> trips;
  for (const auto& t : j) {
    if (!t.is_array() || t.size() != 3)
      throw InvalidArgument(std::string("model: bad triplet in ") + field);
    trips.emplace_back(t[0].get<int>(), t[1].get<int>(), t[2].get<double>());
  }
  SpMat m(rows, cols);
  m.setFromTriplets(trips.begin(), trips.end());
  return m;
}

inline MatX dense_from_columns(const nlohmann::json& j, int rows) {
  MatX m(rows, static_cast<Eigen::Index>(j.size()));
  int c = 0;
  for (const auto& col : j) {
    if (static_cast<int>(col.size()) != rows)
      throw InvalidArgument("model: basis column has wrong length");
    for (int r = 0; r < rows; ++r) m(r, c) = col[r].get<double>();
    ++c;
  }
  return m;
}

}  // namespace detail

inline SkinnedModel model_from_json(const nlohmann::json& j) {
  SkinnedModel m;
  try {
    const auto& units = j.at("units").get<std::string>();
    if (units != "meters")
      throw InvalidArgument("model: units must be \"meters\", got " + units);
    const auto& verts = j.at("template_vertices");
    const int n = static_cast<int>(verts.size());
    m.template_vertices.resize(n, 3);
    for (int i = 0; i < n; ++i)
      for (int c = 0; c < 3; ++c) m.template_vertices(i, c) = verts[i][c].get<double>();
    for (const auto& f : j.at("faces"))
      m.faces.emplace_back(f[0].get<int>(), f[1].get<int>(), f[2].get<int>());
    m.parents = j.at("kinematic_tree").at("parents").get<std::vector<int>>();
    if (j.at("kinematic_tree").contains("names"))
      m.joint_names = j["kinematic_tree"]["names"].get<std::vector<std::string>>();
    const int k_joints = static_cast<int>(m.parents.size());
    m.joint_regressor = detail::sparse_from_triplets(j.at("joint_regressor"), k_joints,
                                                     n, "joint_regressor");
    m.blend_weights.assign(n, {});
    for (const auto& t : j.at("blend_weights"))
      m.blend_weights[t[0].get<int>()].emplace_back(t[1].get<int>(),
                                                    t[2].get<double>());
    m.shape_basis = detail::dense_from_columns(j.at("shape_basis"), 3 * n);
    if (j.contains("pose_basis") && !j["pose_basis"].empty())
      m.pose_basis = detail::dense_from_columns(j["pose_basis"], 3 * n);
    for (const auto& p : j.at("symmetry_pairs"))
      m.symmetry_pairs.emplace_back(p[0].get<int>(), p[1].get<int>());
    auto load_gamma = [&](const char* name) {
      auto v = j.at("regularization_weights").at(name).get<std::vector<double>>();
      return Eigen::Map<const VecX>(v.data(), static_cast<Eigen::Index>(v.size()))
          .eval();
    };
    m.gamma_laplacian = load_gamma("laplacian");
    m.gamma_variance = load_gamma("variance");
    m.gamma_symmetry = load_gamma("symmetry");
    if (j.contains("regions"))
      for (const auto& [name, ids] : j["regions"].items())
        m.regions.emplace_back(name, ids.get<std::vector<int>>());
  } catch (const nlohmann::json::exception& e) {
    throw InvalidArgument(std::string("model: ") + e.what());
  }
  validate_model(m);
  return m;
}

inline nlohmann::json model_to_json(const SkinnedModel& m) {
  nlohmann::json j;
  j["units"] = "meters";
  for (int i = 0; i < m.vertex_count(); ++i)
    j["template_vertices"].push_back(
        {m.template_vertices(i, 0), m.template_vertices(i, 1), m.template_vertices(i, 2)});
  for (const auto& f : m.faces) j["faces"].push_back({f[0], f[1], f[2]});
  j["kinematic_tree"]["parents"] = m.parents;
  j["kinematic_tree"]["names"] = m.joint_names;
  for (int k = 0; k < m.joint_regressor.outerSize(); ++k)
    for (SpMat::InnerIterator it(m.joint_regressor, k); it; ++it)
      j["joint_regressor"].push_back({static_cast<int>(it.row()),
                                      static_cast<int>(it.col()), it.value()});
  for (int i = 0; i < m.vertex_count(); ++i)
    for (const auto& [k, w] : m.blend_weights[i])
      j["blend_weights"].push_back({i, k, w});
  auto dump_basis = [](const MatX& b) {
    nlohmann::json cols = nlohmann::json::array();
    for (int c = 0; c < b.cols(); ++c) {
      nlohmann::json col = nlohmann::json::array();
      for (int r = 0; r < b.rows(); ++r) col.push_back(b(r, c));
      cols.push_back(std::move(col));
    }
    return cols;
  };
  j["shape_basis"] = dump_basis(m.shape_basis);
  if (m.has_pose_basis()) j["pose_basis"] = dump_basis(m.pose_basis);
  j["symmetry_pairs"] = nlohmann::json::array();
  for (const auto& [a, b] : m.symmetry_pairs) j["symmetry_pairs"].push_back({a, b});
  auto dump_gamma = [](const VecX& g) {
    return std::vector<double>(g.data(), g.data() + g.size());
  };
  j["regularization_weights"]["laplacian"] = dump_gamma(m.gamma_laplacian);
  j["regularization_weights"]["variance"] = dump_gamma(m.gamma_variance);
  j["regularization_weights"]["symmetry"] = dump_gamma(m.gamma_symmetry);
  for (const auto& [name, ids] : m.regions) j["regions"][name] = ids;
  return j;
}

inline SkinnedModel load_model(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open model file " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw InvalidArgument("model: " + path + " is not valid JSON: " + e.what());
  }
  return model_from_json(j);
}

inline void save_model(const SkinnedModel& m, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write model file " + path);
  out << model_to_json(m).dump();
}

}  // namespace hullfuse
