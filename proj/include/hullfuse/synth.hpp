#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "hullfuse/json_io.hpp"
#include "hullfuse/laplacian.hpp"
#include "hullfuse/mask.hpp"
#include "hullfuse/model_io.hpp"
#include "hullfuse/obj_io.hpp"
#include "hullfuse/rasterize.hpp"
#include "hullfuse/rng.hpp"
#include "hullfuse/threading.hpp"
#include "hullfuse/toy_model.hpp"

namespace hullfuse {

// Shoulder swing that turns the T-pose template into the capture A-pose.
inline constexpr double kAPoseShoulderAngle = M_PI / 6.0;

/// A-pose: arms lowered 30 degrees from horizontal. Joint indices follow the
/// toy skeleton layout (4 = left shoulder, 7 = right shoulder).
inline Pose a_pose(int joint_count) {
  Pose p = Pose::zero(joint_count);
  if (joint_count > 7) {
    p.joint_rotations.row(4) = Vec3(0, 0, -kAPoseShoulderAngle).transpose();
    p.joint_rotations.row(7) = Vec3(0, 0, kAPoseShoulderAngle).transpose();
  }
  return p;
}

struct SequenceSpec {
  int frames = 120;
  double camera_distance = 2.5;  // meters
  int image_width = 1080;
  int image_height = 1080;
  double focal = 1000.0;         // pixels
  std::string motion = "static_a";  // static_a | swing
  double offset_amplitude = 0.0;    // meters, ground-truth offset field
  int offset_smoothness = 10;       // 1-ring averaging rounds
  uint64_t seed = 1;
  bool render_rgb = false;
  ToyModelSpec toy;
};

inline SequenceSpec sequence_spec_from_json(const nlohmann::json& j) {
  SequenceSpec s;
  auto get = [&](const char* name, auto& field) {
    if (j.contains(name)) field = j.at(name).get<std::decay_t<decltype(field)>>();
  };
  get("frames", s.frames);
  get("camera_distance", s.camera_distance);
  get("image_width", s.image_width);
  get("image_height", s.image_height);
  get("focal", s.focal);
  get("motion", s.motion);
  get("offset_amplitude", s.offset_amplitude);
  get("offset_smoothness", s.offset_smoothness);
  get("seed", s.seed);
  get("render_rgb", s.render_rgb);
  if (j.contains("toy")) {
    const auto& t = j["toy"];
    if (t.contains("vertex_target")) s.toy.vertex_target = t["vertex_target"].get<int>();
    if (t.contains("height")) s.toy.height = t["height"].get<double>();
    if (t.contains("radius_scale")) s.toy.radius_scale = t["radius_scale"].get<double>();
  }
  if (s.frames < 1) throw InvalidArgument("sequence spec: frames must be >= 1");
  if (s.motion != "static_a" && s.motion != "swing")
    throw InvalidArgument("sequence spec: unknown motion \"" + s.motion + "\"");
  if (s.camera_distance <= 1.0)
    throw InvalidArgument("sequence spec: camera too close to the body");
  return s;
}

inline nlohmann::json sequence_spec_to_json(const SequenceSpec& s) {
  nlohmann::json j;
  j["frames"] = s.frames;
  j["camera_distance"] = s.camera_distance;
  j["image_width"] = s.image_width;
  j["image_height"] = s.image_height;
  j["focal"] = s.focal;
  j["motion"] = s.motion;
  j["offset_amplitude"] = s.offset_amplitude;
  j["offset_smoothness"] = s.offset_smoothness;
  j["seed"] = s.seed;
  j["render_rgb"] = s.render_rgb;
  j["toy"]["vertex_target"] = s.toy.vertex_target;
  j["toy"]["height"] = s.toy.height;
  j["toy"]["radius_scale"] = s.toy.radius_scale;
  return j;
}

/// Area-weighted vertex normals.
inline MatX3 vertex_normals(const MatX3& vertices,
                            const std::vector<Eigen::Vector3i>& faces) {
  MatX3 normals = MatX3::Zero(vertices.rows(), 3);
  for (const auto& f : faces) {
    Vec3 a = vertices.row(f[0]), b = vertices.row(f[1]), c = vertices.row(f[2]);
    Vec3 n = (b - a).cross(c - a);
    for (int e = 0; e < 3; ++e) normals.row(f[e]) += n.transpose();
  }
  for (int i = 0; i < normals.rows(); ++i) {
    double len = normals.row(i).norm();
    if (len > 0) normals.row(i) /= len;
  }
  return normals;
}

/// Smooth random normal-direction offsets: per-vertex amplitudes low-passed
/// by 1-ring averaging, mirror-symmetrized, capped at the amplitude.
/// Bit-identical for a fixed seed.
inline MatX3 smooth_offsets(const SkinnedModel& model, double amplitude,
                            int smoothness, uint64_t seed) {
  const int n = model.vertex_count();
  if (amplitude == 0.0) return MatX3::Zero(n, 3);
  VecX scalar(n);
  for (int i = 0; i < n; ++i)
    scalar[i] = Rng::for_item(seed, static_cast<uint64_t>(i)).uniform(-1.0, 1.0);
  auto adjacency = vertex_adjacency(model.faces, n);
  for (int round = 0; round < smoothness; ++round) {
    VecX next = scalar;
    for (int i = 0; i < n; ++i) {
      for (int u : adjacency[i]) next[i] += scalar[u];
      next[i] /= 1.0 + adjacency[i].size();
    }
    scalar = next;
  }
  // mirror-symmetrize, then scale so the largest displacement hits amplitude
  for (const auto& [i, j] : model.symmetry_pairs) scalar[j] = scalar[i];
  const double peak = scalar.cwiseAbs().maxCoeff();
  if (peak > 0) scalar *= amplitude / peak;
  const MatX3 normals = vertex_normals(model.template_vertices, model.faces);
  MatX3 out(n, 3);
  for (int i = 0; i < n; ++i) out.row(i) = scalar[i] * normals.row(i);
  return out;
}

/// Camera on a horizontal orbit looking at the target; azimuth in radians,
/// zero azimuth in front of the body (+z), orbiting counterclockwise.
inline PinholeCamera orbit_camera(const Vec3& target, double distance, double azimuth,
                                  const SequenceSpec& spec) {
  PinholeCamera cam;
  cam.fx = cam.fy = spec.focal;
  cam.cx = spec.image_width / 2.0;
  cam.cy = spec.image_height / 2.0;
  cam.width = spec.image_width;
  cam.height = spec.image_height;
  const Vec3 center =
      target + distance * Vec3(std::sin(azimuth), 0.0, std::cos(azimuth));
  // look-at: +z into the scene, +y down the image (y grows downward)
  Vec3 forward = (target - center).normalized();
  Vec3 up(0, -1, 0);
  Vec3 right = up.cross(forward).normalized();
  Vec3 down = forward.cross(right);
  Mat3 r;
  r.row(0) = right.transpose();
  r.row(1) = down.transpose();
  r.row(2) = forward.transpose();
  cam.rotation = r;
  cam.translation = -r * center;
  return cam;
}

inline Pose motion_pose(const SequenceSpec& spec, int joint_count, int frame) {
  Pose p = a_pose(joint_count);
  if (spec.motion == "swing" && joint_count >= 16) {
    const double phase = 2.0 * M_PI * frame / std::max(1, spec.frames);
    const double elbow = 0.35 * std::sin(phase);
    const double knee = 0.30 * std::sin(phase);
    p.joint_rotations.row(5) += Vec3(0, 0, -std::abs(elbow)).transpose();
    p.joint_rotations.row(8) += Vec3(0, 0, std::abs(elbow)).transpose();
    p.joint_rotations.row(11) += Vec3(std::abs(knee), 0, 0).transpose();
    p.joint_rotations.row(14) += Vec3(std::abs(knee), 0, 0).transpose();
  }
  return p;
}

struct SyntheticSequence {
  SkinnedModel model;      // naked body (no ground-truth offsets)
  MatX3 gt_offsets;        // D*
  VecX gt_shape;           // beta*
  std::vector<Pose> poses;
  std::vector<PinholeCamera> cameras;
  std::vector<BinaryMask> masks;
  std::vector<RgbImage> rgb;  // optional flat-colored renders
  MatX3 vertex_colors;        // colors used for the rgb renders
};

/// Renders the full synthetic sequence: orbiting camera, scripted poses,
/// silhouette masks and optional flat-colored RGB frames.
inline SyntheticSequence render_sequence(const SkinnedModel& model, const VecX& beta,
                                         const MatX3& gt_offsets,
                                         const SequenceSpec& spec) {
  SyntheticSequence seq;
  seq.model = model;
  seq.gt_offsets = gt_offsets;
  seq.gt_shape = beta;
  const Vec3 target =
      0.5 * (model.template_vertices.colwise().minCoeff() +
             model.template_vertices.colwise().maxCoeff())
          .transpose();
  seq.poses.resize(spec.frames);
  seq.cameras.resize(spec.frames);
  seq.masks.resize(spec.frames);
  if (spec.render_rgb) {
    seq.rgb.resize(spec.frames);
    // two-tone palette keyed off the x coordinate; useful for texture tests
    seq.vertex_colors.resize(model.vertex_count(), 3);
    for (int i = 0; i < model.vertex_count(); ++i)
      seq.vertex_colors.row(i) = model.template_vertices(i, 0) >= 0
                                     ? Vec3(0.8, 0.2, 0.2).transpose()
                                     : Vec3(0.2, 0.2, 0.8).transpose();
  }
  for (int f = 0; f < spec.frames; ++f)
    seq.poses[f] = motion_pose(spec, model.joint_count(), f);
  parallel_for(static_cast<size_t>(spec.frames), [&](size_t f) {
    const double azimuth = 2.0 * M_PI * static_cast<double>(f) / spec.frames;
    seq.cameras[f] = orbit_camera(target, spec.camera_distance, azimuth, spec);
    MatX3 posed = skin(model, beta, seq.poses[f], gt_offsets);
    seq.masks[f] = rasterize_silhouette(posed, model.faces, seq.cameras[f]);
    if (spec.render_rgb)
      seq.rgb[f] =
          render_vertex_colors(posed, model.faces, seq.vertex_colors, seq.cameras[f]);
  });
  return seq;
}

namespace detail {
inline std::string frame_name(int f, const char* ext) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%04d%s", f, ext);
  return buf;
}
}  // namespace detail

/// Writes the sequence directory: frames/####.pgm, poses.json, cameras.json,
/// gt_mesh.obj, gt_offsets.json, spec.json, model.json (plus rgb/####.ppm
/// when RGB renders exist).
inline void save_sequence(const SyntheticSequence& seq, const SequenceSpec& spec,
                          const std::string& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(fs::path(dir) / "frames");
  if (!seq.rgb.empty()) fs::create_directories(fs::path(dir) / "rgb");
  save_model(seq.model, (fs::path(dir) / "model.json").string());
  save_poses(seq.poses, (fs::path(dir) / "poses.json").string());
  save_cameras(seq.cameras, (fs::path(dir) / "cameras.json").string());
  save_json_file(sequence_spec_to_json(spec), (fs::path(dir) / "spec.json").string(), 2);
  for (size_t f = 0; f < seq.masks.size(); ++f)
    write_pgm(seq.masks[f],
              (fs::path(dir) / "frames" / detail::frame_name(static_cast<int>(f), ".pgm"))
                  .string());
  for (size_t f = 0; f < seq.rgb.size(); ++f)
    write_ppm(seq.rgb[f],
              (fs::path(dir) / "rgb" / detail::frame_name(static_cast<int>(f), ".ppm"))
                  .string());
  ObjMesh gt;
  gt.vertices = rest_vertices(seq.model, seq.gt_shape, seq.gt_offsets);
  gt.faces = seq.model.faces;
  if (seq.vertex_colors.rows() == gt.vertices.rows()) gt.colors = seq.vertex_colors;
  write_obj(gt, (fs::path(dir) / "gt_mesh.obj").string());
  nlohmann::json offs;
  offs["shape"] = std::vector<double>(seq.gt_shape.data(),
                                      seq.gt_shape.data() + seq.gt_shape.size());
  offs["offsets"] = nlohmann::json::array();
  for (int i = 0; i < seq.gt_offsets.rows(); ++i)
    offs["offsets"].push_back(
        {seq.gt_offsets(i, 0), seq.gt_offsets(i, 1), seq.gt_offsets(i, 2)});
  save_json_file(offs, (fs::path(dir) / "gt_offsets.json").string());
}

struct LoadedSequence {
  std::vector<Pose> poses;
  std::vector<PinholeCamera> cameras;
  std::vector<BinaryMask> masks;
  std::vector<RgbImage> rgb;  // empty when absent
};

inline LoadedSequence load_sequence(const std::string& dir) {
  namespace fs = std::filesystem;
  LoadedSequence seq;
  seq.poses = load_poses((fs::path(dir) / "poses.json").string());
  seq.cameras = load_cameras((fs::path(dir) / "cameras.json").string());
  if (seq.poses.size() != seq.cameras.size())
    throw InvalidArgument(dir + ": poses.json and cameras.json disagree on frame count");
  seq.masks.reserve(seq.poses.size());
  for (size_t f = 0; f < seq.poses.size(); ++f) {
    fs::path p = fs::path(dir) / "frames" / detail::frame_name(static_cast<int>(f), ".pgm");
    if (!fs::exists(p)) throw IoError("missing mask " + p.string());
    seq.masks.push_back(read_pgm(p.string()));
  }
  for (size_t f = 0; f < seq.poses.size(); ++f) {
    fs::path p = fs::path(dir) / "rgb" / detail::frame_name(static_cast<int>(f), ".ppm");
    if (!fs::exists(p)) break;
    seq.rgb.push_back(read_ppm(p.string()));
  }
  return seq;
}

}  // namespace hullfuse
