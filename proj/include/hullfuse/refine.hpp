#pragma once

#include <vector>

#include "hullfuse/consensus.hpp"

namespace hullfuse {

struct RefineConfig {
  int window_half_width = 1;  // m: frames on each side contributing data terms
  double w_neigh = 0.3;       // influence of neighbor frames, in (0,1)
  double w_last = 0.5;        // anchor on the preceding frame's offsets
  int iterations = 30;

  void validate() const {
    if (window_half_width < 0) throw InvalidArgument("refine: window must be >= 0");
    if (w_neigh <= 0 || w_neigh >= 1)
      throw InvalidArgument("refine: w_neigh must lie in (0, 1)");
    if (w_last < 0) throw InvalidArgument("refine: w_last must be >= 0");
  }
};

/// Least squares over one frame's offsets D_f: windowed data terms plus
/// body-model, Laplacian and previous-frame anchors. The shape stays frozen.
class RefineProblem : public LeastSquaresProblem {
 public:
  RefineProblem(const SkinnedModel& model, const VecX& beta0, const SpMat& laplacian,
                const MatX3& delta, const MatX3& naked_anchor, const MatX3& prev_offsets,
                const EnergyConfig& energy, const RefineConfig& refine)
      : model_(model),
        beta0_(beta0),
        laplacian_(laplacian),
        delta_(delta),
        naked_(naked_anchor),
        prev_(prev_offsets),
        energy_(energy),
        refine_(refine) {}

  std::vector<WeightedConstraint> constraints;

  int dimension() const override { return 3 * model_.vertex_count(); }

  VecX pack(const MatX3& offsets) const {
    VecX x(dimension());
    for (int i = 0; i < model_.vertex_count(); ++i)
      x.segment<3>(3 * i) = offsets.row(i).transpose();
    return x;
  }

  MatX3 unpack(const VecX& x) const {
    MatX3 d(model_.vertex_count(), 3);
    for (int i = 0; i < model_.vertex_count(); ++i)
      d.row(i) = x.segment<3>(3 * i).transpose();
    return d;
  }

  MatX3 mesh(const VecX& x) const { return rest_vertices(model_, beta0_, unpack(x)); }

  void evaluate(const VecX& x, VecX* residuals, SpMat* jacobian) const override {
    const int n = model_.vertex_count();
    const MatX3 offsets = unpack(x);
    const MatX3 v = rest_vertices(model_, beta0_, offsets);
    const bool use_lp = energy_.w_lp > 0;
    const bool use_var = energy_.w_var > 0;
    const bool use_last = refine_.w_last > 0;
    int rows = 3 * static_cast<int>(constraints.size());
    if (use_lp) rows += 3 * n;
    if (use_var) rows += 3 * n;
    if (use_last) rows += 3 * n;
    residuals->resize(rows);
    std::vector<Triplet> trips;
    if (jacobian) trips.reserve(constraints.size() * 9 + 30 * n);

    int row = 0;
    for (const auto& cst : constraints) {
      const double s = std::sqrt(cst.irls_weight * cst.scale);
      const Vec3 p = v.row(cst.vertex).transpose();
      residuals->segment<3>(row) = s * point_line_residual(cst.ray, p);
      if (jacobian) {
        const Mat3 dres = -s * skew(cst.ray.direction);
        for (int r = 0; r < 3; ++r)
          for (int c = 0; c < 3; ++c)
            if (dres(r, c) != 0)
              trips.emplace_back(row + r, 3 * cst.vertex + c, dres(r, c));
      }
      row += 3;
    }
    if (use_lp) {
      const MatX3 lv = laplacian_ * v;
      for (int i = 0; i < n; ++i) {
        const double s = std::sqrt(energy_.w_lp * model_.gamma_laplacian[i]);
        residuals->segment<3>(row + 3 * i) = s * (lv.row(i) - delta_.row(i)).transpose();
      }
      if (jacobian)
        for (int i = 0; i < laplacian_.outerSize(); ++i)
          for (SpMat::InnerIterator it(laplacian_, i); it; ++it) {
            const double s =
                std::sqrt(energy_.w_lp * model_.gamma_laplacian[it.row()]);
            for (int c = 0; c < 3; ++c)
              trips.emplace_back(row + 3 * static_cast<int>(it.row()) + c,
                                 3 * static_cast<int>(it.col()) + c, s * it.value());
          }
      row += 3 * n;
    }
    if (use_var) {
      for (int i = 0; i < n; ++i) {
        const double s = std::sqrt(energy_.w_var * model_.gamma_variance[i]);
        residuals->segment<3>(row + 3 * i) = s * (v.row(i) - naked_.row(i)).transpose();
        if (jacobian)
          for (int c = 0; c < 3; ++c) trips.emplace_back(row + 3 * i + c, 3 * i + c, s);
      }
      row += 3 * n;
    }
    if (use_last) {
      const double s = std::sqrt(refine_.w_last);
      for (int i = 0; i < n; ++i) {
        residuals->segment<3>(row + 3 * i) = s * (offsets.row(i) - prev_.row(i)).transpose();
        if (jacobian)
          for (int c = 0; c < 3; ++c) trips.emplace_back(row + 3 * i + c, 3 * i + c, s);
      }
      row += 3 * n;
    }
    if (jacobian) {
      jacobian->resize(rows, dimension());
      jacobian->setFromTriplets(trips.begin(), trips.end());
    }
  }

  void refresh_robust_weights(const MatX3& mesh_now) {
    for (auto& cst : constraints) {
      const double e = point_line_distance(cst.ray, mesh_now.row(cst.vertex).transpose());
      cst.irls_weight = gm_irls_weight(e, energy_.sigma_gm);
    }
  }

 private:
  const SkinnedModel& model_;
  const VecX& beta0_;
  const SpMat& laplacian_;
  const MatX3& delta_;
  const MatX3& naked_;
  const MatX3& prev_;
  const EnergyConfig& energy_;
  const RefineConfig& refine_;
};

struct RefineFrameReport {
  double energy_start = 0;
  double energy_end = 0;
  int64_t correspondences = 0;
};

struct RefineResult {
  std::vector<MatX3> offsets;  // per frame D_f
  std::vector<RefineFrameReport> reports;
};

/// Sequential per-frame shape refinement around the consensus result. Frame f
/// minimizes its windowed data terms with the center frame at full weight and
/// neighbors at w_neigh; E_last chains each frame to the previous result.
inline RefineResult refine_sequence(const SkinnedModel& model, const VecX& beta0,
                                    const VecX& beta_consensus,
                                    const MatX3& consensus_offsets,
                                    const std::vector<FrameObservations>& frames,
                                    const EnergyConfig& energy,
                                    const RefineConfig& refine) {
  refine.validate();
  const int n = model.vertex_count();
  const int f_count = static_cast<int>(frames.size());
  LaplacianResult lap = uniform_laplacian(model.faces, n);
  const MatX3 delta = lap.op * rest_vertices(model, beta0, consensus_offsets);
  const MatX3 naked = rest_vertices(model, beta_consensus);

  // per-frame constraints against the posed consensus shape, built once
  std::vector<std::vector<WeightedConstraint>> frame_constraints(f_count);
  parallel_for(static_cast<size_t>(f_count), [&](size_t f) {
    std::vector<Correspondence> corr;
    DropStats stats;
    unpose_frame(model, beta0, consensus_offsets, frames[f].pose, frames[f].rays,
                 frames[f].camera, energy.association, static_cast<int>(f), &corr,
                 &stats);
    for (const auto& c : corr)
      frame_constraints[f].push_back({c.vertex, c.unposed, 1.0, 1.0});
  });

  RefineResult result;
  MatX3 prev = consensus_offsets;
  for (int f = 0; f < f_count; ++f) {
    RefineProblem problem(model, beta0, lap.op, delta, naked, prev, energy, refine);
    for (int j = std::max(0, f - refine.window_half_width);
         j <= std::min(f_count - 1, f + refine.window_half_width); ++j) {
      const double psi = (j == f) ? 1.0 : refine.w_neigh;
      for (auto cst : frame_constraints[j]) {
        cst.scale = psi;
        problem.constraints.push_back(cst);
      }
    }
    problem.refresh_robust_weights(rest_vertices(model, beta0, prev));
    DoglegOptions opts;
    opts.max_iterations = refine.iterations;
    opts.initial_radius = energy.trust_radius;
    DoglegReport rep;
    VecX x = solve_dogleg(problem, problem.pack(prev), opts, &rep);
    MatX3 d_f = problem.unpack(x);
    result.reports.push_back(
        {rep.energies.front(), rep.energies.back(),
         static_cast<int64_t>(problem.constraints.size())});
    result.offsets.push_back(d_f);
    prev = std::move(d_f);
  }
  return result;
}

}  // namespace hullfuse
