#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "hullfuse/consensus.hpp"
#include "hullfuse/mesh_metrics.hpp"
#include "hullfuse/obj_io.hpp"
#include "hullfuse/posefit.hpp"
#include "hullfuse/refine.hpp"
#include "hullfuse/synth.hpp"
#include "hullfuse/texture.hpp"

namespace hullfuse {

/// Layered run configuration. Precedence (low to high): built-in defaults,
/// preset, config file, explicit CLI flags.
struct RunConfig {
  std::string preset = "clothed";
  EnergyConfig energy = EnergyConfig::preset("clothed");
  PoseFitConfig posefit;
  RefineConfig refine;
  bool refine_poses = false;
  uint64_t seed = 1;
  int threads = 0;  // 0 keeps the environment default
};

inline void apply_config_json(RunConfig& cfg, const nlohmann::json& j) {
  auto get = [](const nlohmann::json& obj, const char* name, auto& field) {
    if (obj.contains(name)) field = obj.at(name).get<std::decay_t<decltype(field)>>();
  };
  if (j.contains("preset")) {
    cfg.preset = j["preset"].get<std::string>();
    cfg.energy = EnergyConfig::preset(cfg.preset);
  }
  if (j.contains("consensus")) {
    const auto& c = j["consensus"];
    get(c, "w_lp", cfg.energy.w_lp);
    get(c, "w_var", cfg.energy.w_var);
    get(c, "w_sym", cfg.energy.w_sym);
    get(c, "sigma_gm", cfg.energy.sigma_gm);
    get(c, "rounds", cfg.energy.rounds);
    get(c, "inner_iterations", cfg.energy.inner_iterations);
    get(c, "trust_radius", cfg.energy.trust_radius);
    get(c, "w_height", cfg.energy.w_height);
    if (c.contains("known_height"))
      cfg.energy.known_height = c["known_height"].get<double>();
  }
  if (j.contains("association")) {
    const auto& a = j["association"];
    get(a, "d_max", cfg.energy.association.d_max);
    get(a, "max_points", cfg.energy.association.max_points);
    get(a, "rim_only", cfg.energy.association.rim_only);
    get(a, "subpixel_boundary", cfg.energy.association.subpixel_boundary);
  }
  if (j.contains("posefit")) {
    const auto& p = j["posefit"];
    get(p, "w_outside", cfg.posefit.w_outside);
    get(p, "w_inside", cfg.posefit.w_inside);
    get(p, "pyramid_levels", cfg.posefit.pyramid_levels);
    get(p, "prior_weight", cfg.posefit.prior_weight);
    get(p, "prior_sigma", cfg.posefit.prior_sigma);
    get(p, "temporal_weight", cfg.posefit.temporal_weight);
    get(p, "reinit_factor", cfg.posefit.reinit_factor);
    get(p, "iterations_per_level", cfg.posefit.iterations_per_level);
  }
  if (j.contains("refine")) {
    const auto& r = j["refine"];
    get(r, "window_half_width", cfg.refine.window_half_width);
    get(r, "w_neigh", cfg.refine.w_neigh);
    get(r, "w_last", cfg.refine.w_last);
    get(r, "iterations", cfg.refine.iterations);
  }
  get(j, "seed", cfg.seed);
  get(j, "threads", cfg.threads);
}

/// Per-frame silhouette rays for a loaded sequence; frames with empty
/// silhouettes keep an empty ray list (callers decide how to report them).
inline std::vector<FrameObservations> build_observations(
    const LoadedSequence& seq, const AssociationConfig& assoc) {
  std::vector<FrameObservations> frames(seq.masks.size());
  parallel_for(seq.masks.size(), [&](size_t f) {
    frames[f].camera = seq.cameras[f];
    frames[f].pose = seq.poses[f];
    try {
      frames[f].rays = frame_boundary_rays(seq.masks[f], seq.cameras[f], assoc);
    } catch (const EmptySilhouetteError&) {
      frames[f].rays.clear();
    }
  });
  return frames;
}

struct ReconstructOutput {
  ConsensusResult consensus;
  std::vector<Pose> used_poses;
  std::vector<int> empty_frames;
  std::vector<int> pose_refine_failures;
};

/// Full reconstruction: optional silhouette pose refinement, silhouette-cone
/// unposing, consensus optimization.
inline ReconstructOutput run_reconstruct(const SkinnedModel& model, const VecX& beta0,
                                         const LoadedSequence& seq,
                                         const RunConfig& cfg) {
  if (cfg.threads > 0) set_thread_count(cfg.threads);
  LoadedSequence working = seq;
  ReconstructOutput out;
  if (cfg.refine_poses) {
    PoseFitConfig pf = cfg.posefit;
    if (pf.prior_mean.joint_rotations.rows() == 0)
      pf.prior_mean = a_pose(model.joint_count());
    auto results = refine_pose_sequence(model, beta0, MatX3::Zero(model.vertex_count(), 3),
                                        seq.poses, seq.masks, seq.cameras, pf);
    for (size_t f = 0; f < results.size(); ++f) {
      working.poses[f] = results[f].pose;
      if (results[f].failed) out.pose_refine_failures.push_back(static_cast<int>(f));
    }
  }
  std::vector<FrameObservations> frames =
      build_observations(working, cfg.energy.association);
  std::vector<FrameObservations> usable;
  for (size_t f = 0; f < frames.size(); ++f) {
    if (frames[f].rays.empty())
      out.empty_frames.push_back(static_cast<int>(f));
    else
      usable.push_back(frames[f]);
  }
  if (usable.empty()) throw EmptySilhouetteError("no frame has a usable silhouette");
  out.consensus = optimize_consensus(model, beta0, usable, cfg.energy);
  out.used_poses = working.poses;
  return out;
}

inline nlohmann::json consensus_report_to_json(const ReconstructOutput& out) {
  nlohmann::json j;
  j["rounds"] = nlohmann::json::array();
  for (const auto& r : out.consensus.report.rounds) {
    nlohmann::json jr;
    jr["round"] = r.round;
    jr["energy_start"] = r.energy_start;
    jr["energy_end"] = r.energy_end;
    jr["correspondences"] = r.correspondences;
    jr["dropped_beyond_cap"] = r.dropped_beyond_cap;
    jr["dropped_singular"] = r.dropped_singular;
    jr["solver_iterations"] = r.solver_iterations;
    jr["factorization_failures"] = r.factorization_failures;
    j["rounds"].push_back(jr);
  }
  j["final_energy"] = out.consensus.report.final_energy;
  j["beta"] = std::vector<double>(out.consensus.beta.data(),
                                  out.consensus.beta.data() + out.consensus.beta.size());
  j["empty_frames"] = out.empty_frames;
  j["pose_mismatch_frames"] = out.consensus.report.pose_mismatch_frames;
  j["pose_refine_failures"] = out.pose_refine_failures;
  double max_offset = 0;
  for (int i = 0; i < out.consensus.offsets.rows(); ++i)
    max_offset = std::max(max_offset, out.consensus.offsets.row(i).norm());
  j["max_offset_m"] = max_offset;
  return j;
}

struct EvaluationOutput {
  BidirectionalError error;
  SimilarityTransform alignment;
  MatX3 aligned_reconstruction;
};

/// Similarity-aligns the reconstruction to the reference and scores it.
inline EvaluationOutput evaluate_reconstruction(const ObjMesh& recon,
                                                const ObjMesh& reference) {
  EvaluationOutput out;
  out.alignment = align(recon.vertices, recon.faces, reference.vertices, reference.faces);
  out.aligned_reconstruction = out.alignment.apply(recon.vertices);
  out.error = bidirectional_error(out.aligned_reconstruction, recon.faces,
                                  reference.vertices, reference.faces);
  return out;
}

inline nlohmann::json evaluation_to_json(const EvaluationOutput& out) {
  nlohmann::json j;
  j["mean_mm"] = out.error.mean_mm;
  j["std_mm"] = out.error.std_mm;
  j["forward_mean_mm"] = out.error.forward_mean_mm;
  j["backward_mean_mm"] = out.error.backward_mean_mm;
  j["aligned_scale"] = out.alignment.scale;
  char line[64];
  std::snprintf(line, sizeof(line), "%.2f ±%.2f", out.error.mean_mm, out.error.std_mm);
  j["summary"] = line;
  return j;
}

}  // namespace hullfuse
