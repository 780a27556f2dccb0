#pragma once

#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "hullfuse/geometry.hpp"
#include "hullfuse/model.hpp"

namespace hullfuse {

inline nlohmann::json load_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  try {
    nlohmann::json j;
    in >> j;
    return j;
  } catch (const nlohmann::json::exception& e) {
    throw InvalidArgument(path + ": invalid JSON: " + e.what());
  }
}

inline void save_json_file(const nlohmann::json& j, const std::string& path,
                           int indent = -1) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path);
  out << j.dump(indent) << "\n";
}

// Cameras: intrinsics, 3x4 row-major extrinsic [R|t], image size.

inline nlohmann::json camera_to_json(const PinholeCamera& cam) {
  nlohmann::json j;
  j["fx"] = cam.fx;
  j["fy"] = cam.fy;
  j["cx"] = cam.cx;
  j["cy"] = cam.cy;
  j["width"] = cam.width;
  j["height"] = cam.height;
  std::vector<double> ext;
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 3; ++c) ext.push_back(cam.rotation(r, c));
    ext.push_back(cam.translation[r]);
  }
  j["extrinsic"] = ext;
  return j;
}

inline PinholeCamera camera_from_json(const nlohmann::json& j) {
  PinholeCamera cam;
  try {
    cam.fx = j.at("fx").get<double>();
    cam.fy = j.at("fy").get<double>();
    cam.cx = j.at("cx").get<double>();
    cam.cy = j.at("cy").get<double>();
    cam.width = j.at("width").get<int>();
    cam.height = j.at("height").get<int>();
    auto ext = j.at("extrinsic").get<std::vector<double>>();
    if (ext.size() != 12) throw InvalidArgument("camera: extrinsic must have 12 entries");
    for (int r = 0; r < 3; ++r) {
      for (int c = 0; c < 3; ++c) cam.rotation(r, c) = ext[4 * r + c];
      cam.translation[r] = ext[4 * r + 3];
    }
  } catch (const nlohmann::json::exception& e) {
    throw InvalidArgument(std::string("camera: ") + e.what());
  }
  cam.validate();
  return cam;
}

inline void save_cameras(const std::vector<PinholeCamera>& cams, const std::string& path) {
  nlohmann::json j;
  j["cameras"] = nlohmann::json::array();
  for (const auto& c : cams) j["cameras"].push_back(camera_to_json(c));
  save_json_file(j, path);
}

inline std::vector<PinholeCamera> load_cameras(const std::string& path) {
  auto j = load_json_file(path);
  std::vector<PinholeCamera> cams;
  for (const auto& c : j.at("cameras")) cams.push_back(camera_from_json(c));
  return cams;
}

// Poses: per frame, per joint axis-angle plus root translation.

inline nlohmann::json pose_to_json(const Pose& pose) {
  nlohmann::json j;
  j["rotations"] = nlohmann::json::array();
  for (int k = 0; k < pose.joint_rotations.rows(); ++k)
    j["rotations"].push_back({pose.joint_rotations(k, 0), pose.joint_rotations(k, 1),
                              pose.joint_rotations(k, 2)});
  j["translation"] = {pose.root_translation.x(), pose.root_translation.y(),
                      pose.root_translation.z()};
  return j;
}

inline Pose pose_from_json(const nlohmann::json& j) {
  Pose pose;
  try {
    const auto& rot = j.at("rotations");
    pose.joint_rotations.resize(static_cast<Eigen::Index>(rot.size()), 3);
    for (size_t k = 0; k < rot.size(); ++k)
      for (int c = 0; c < 3; ++c)
        pose.joint_rotations(static_cast<Eigen::Index>(k), c) = rot[k][c].get<double>();
    const auto& t = j.at("translation");
    pose.root_translation = Vec3(t[0].get<double>(), t[1].get<double>(), t[2].get<double>());
  } catch (const nlohmann::json::exception& e) {
    throw InvalidArgument(std::string("pose: ") + e.what());
  }
  pose.canonicalize();
  return pose;
}

inline void save_poses(const std::vector<Pose>& poses, const std::string& path) {
  nlohmann::json j;
  j["frames"] = nlohmann::json::array();
  for (const auto& p : poses) j["frames"].push_back(pose_to_json(p));
  save_json_file(j, path);
}

inline std::vector<Pose> load_poses(const std::string& path) {
  auto j = load_json_file(path);
  std::vector<Pose> poses;
  for (const auto& p : j.at("frames")) poses.push_back(pose_from_json(p));
  return poses;
}

}  // namespace hullfuse
