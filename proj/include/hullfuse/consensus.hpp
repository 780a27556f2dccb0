#pragma once

#include <algorithm>
#include <optional>
#include <string>
#include <vector>

#include "hullfuse/dogleg.hpp"
#include "hullfuse/laplacian.hpp"
#include "hullfuse/model.hpp"
#include "hullfuse/unpose.hpp"

namespace hullfuse {

/// Geman-McClure robust penalty: bounded by sigma^2, quadratic near zero.
inline double gm_rho(double e, double sigma) {
  const double e2 = e * e, s2 = sigma * sigma;
  return s2 * e2 / (e2 + s2);
}

/// Least-squares weight implementing the robustifier; refreshed at
/// alternation boundaries and frozen during each inner solve.
inline double gm_irls_weight(double e, double sigma) {
  const double e2 = e * e, s2 = sigma * sigma;
  const double denom = e2 + s2;
  return s2 / (denom * denom);
}

struct EnergyConfig {
  double w_lp = 2.0;
  double w_var = 0.2;
  double w_sym = 1.0;
  double sigma_gm = 0.01;  // meters
  int rounds = 5;
  int inner_iterations = 50;
  double trust_radius = 10.0;
  std::optional<double> known_height;  // meters
  double w_height = 1.0;
  AssociationConfig association;

  /// Two built-in weight sets: "clothed" and "minimal" (tight clothing).
  static EnergyConfig preset(const std::string& name) {
    EnergyConfig c;
    if (name == "clothed") {
      c.w_lp = 2.0;
      c.w_var = 0.2;
      c.w_sym = 1.0;
      c.sigma_gm = 0.01;
    } else if (name == "minimal") {
      c.w_lp = 1.0;
      c.w_var = 1.0;
      c.w_sym = 1.0;
      c.sigma_gm = 0.005;
    } else {
      throw InvalidArgument("unknown preset: " + name);
    }
    return c;
  }
};

/// One frame's inputs to consensus: world-space silhouette rays plus the
/// camera and pose they were observed under.
struct FrameObservations {
  std::vector<PluckerRay> rays;
  PinholeCamera camera;
  Pose pose;
};

/// A fused constraint with its frozen robust weight and optional extra scale
/// (used by the sliding-window refinement to weight neighbor frames).
struct WeightedConstraint {
  int vertex;
  PluckerRay ray;
  double irls_weight = 1.0;
  double scale = 1.0;
};

/// Least-squares form of the consensus energy over x = [beta; D].
///
/// The data term always measures the mesh T + B_s(data_shape) + D against
/// rays; `shape_in_data` selects whether data_shape is the frozen beta0 or
/// the beta variable (the latter is used to fit shape alone). The body-model
/// term couples that mesh to the naked mesh T + B_s(beta).
class ConsensusProblem : public LeastSquaresProblem {
 public:
  ConsensusProblem(const SkinnedModel& model, VecX beta0, const SpMat& laplacian,
                   MatX3 laplacian_anchor, const EnergyConfig& config)
      : model_(model),
        beta0_(std::move(beta0)),
        laplacian_(laplacian),
        delta_(std::move(laplacian_anchor)),
        config_(config) {}

  bool shape_in_data = false;    // data mesh uses beta variable instead of beta0
  bool offsets_active = true;    // D is part of x; otherwise frozen at fixed_offsets
  MatX3 fixed_offsets;           // used when offsets_active is false

  std::vector<WeightedConstraint> constraints;

  int dimension() const override {
    return model_.shape_dim() + (offsets_active ? 3 * model_.vertex_count() : 0);
  }

  VecX pack(const VecX& beta, const MatX3& offsets) const {
    VecX x(dimension());
    x.head(model_.shape_dim()) = beta;
    if (offsets_active)
      for (int i = 0; i < model_.vertex_count(); ++i)
        x.segment<3>(model_.shape_dim() + 3 * i) = offsets.row(i).transpose();
    return x;
  }

  void unpack(const VecX& x, VecX* beta, MatX3* offsets) const {
    *beta = x.head(model_.shape_dim());
    if (offsets_active) {
      offsets->resize(model_.vertex_count(), 3);
      for (int i = 0; i < model_.vertex_count(); ++i)
        offsets->row(i) = x.segment<3>(model_.shape_dim() + 3 * i).transpose();
    } else {
      *offsets = fixed_offsets;
    }
  }

  /// Canonical-pose mesh the data term measures.
  MatX3 data_mesh(const VecX& x) const {
    VecX beta;
    MatX3 offsets;
    unpack(x, &beta, &offsets);
    return rest_vertices(model_, shape_in_data ? beta : beta0_, offsets);
  }

  void evaluate(const VecX& x, VecX* residuals, SpMat* jacobian) const override {
    const int n = model_.vertex_count();
    const int b_dim = model_.shape_dim();
    VecX beta;
    MatX3 offsets;
    unpack(x, &beta, &offsets);
    const MatX3 mesh = data_mesh(x);
    const MatX3 naked = rest_vertices(model_, beta);
    const bool use_lp = config_.w_lp > 0 && offsets_active;
    const bool use_var = config_.w_var > 0;
    const bool use_sym = config_.w_sym > 0 && offsets_active;
    const bool use_height = config_.known_height.has_value();

    int rows = 3 * static_cast<int>(constraints.size());
    if (use_lp) rows += 3 * n;
    if (use_var) rows += 3 * n;
    if (use_sym) rows += 3 * static_cast<int>(model_.symmetry_pairs.size());
    if (use_height) rows += 1;
    residuals->resize(rows);

    std::vector<Triplet> trips;
    if (jacobian) trips.reserve(constraints.size() * 3 * (3 + b_dim) + 9 * 8 * n);
    const int off0 = b_dim;  // offset block start in x
    auto offset_col = [&](int vertex, int c) { return off0 + 3 * vertex + c; };

    int row = 0;
    // data: sqrt(w) * (v x n - m)
    for (const auto& cst : constraints) {
      const double s = std::sqrt(cst.irls_weight * cst.scale);
      const Vec3 v = mesh.row(cst.vertex).transpose();
      residuals->segment<3>(row) = s * point_line_residual(cst.ray, v);
      if (jacobian) {
        const Mat3 dvdres = -s * skew(cst.ray.direction);  // d(v x n)/dv
        if (offsets_active)
          for (int r = 0; r < 3; ++r)
            for (int c = 0; c < 3; ++c)
              if (dvdres(r, c) != 0)
                trips.emplace_back(row + r, offset_col(cst.vertex, c), dvdres(r, c));
        if (shape_in_data)
          for (int r = 0; r < 3; ++r)
            for (int j = 0; j < b_dim; ++j) {
              double val = 0;
              for (int c = 0; c < 3; ++c)
                val += dvdres(r, c) * model_.shape_basis(3 * cst.vertex + c, j);
              if (val != 0) trips.emplace_back(row + r, j, val);
            }
      }
      row += 3;
    }

    // Laplacian: sqrt(w_lp * gamma_l) * (L v - delta)
    if (use_lp) {
      const MatX3 lv = laplacian_ * mesh;
      for (int i = 0; i < n; ++i) {
        const double s = std::sqrt(config_.w_lp * model_.gamma_laplacian[i]);
        residuals->segment<3>(row + 3 * i) =
            s * (lv.row(i) - delta_.row(i)).transpose();
      }
      if (jacobian) {
        for (int i = 0; i < laplacian_.outerSize(); ++i) {
          for (SpMat::InnerIterator it(laplacian_, i); it; ++it) {
            const double s =
                std::sqrt(config_.w_lp * model_.gamma_laplacian[it.row()]);
            for (int c = 0; c < 3; ++c)
              trips.emplace_back(row + 3 * static_cast<int>(it.row()) + c,
                                 offset_col(static_cast<int>(it.col()), c),
                                 s * it.value());
          }
        }
        if (shape_in_data) {
          // L * B_s columns, restricted to the coordinate layout
          for (int j = 0; j < b_dim; ++j) {
            MatX3 bs(n, 3);
            for (int i = 0; i < n; ++i)
              bs.row(i) = model_.shape_basis.block<3, 1>(3 * i, j).transpose();
            MatX3 lbs = laplacian_ * bs;
            for (int i = 0; i < n; ++i) {
              const double s = std::sqrt(config_.w_lp * model_.gamma_laplacian[i]);
              for (int c = 0; c < 3; ++c)
                if (lbs(i, c) != 0)
                  trips.emplace_back(row + 3 * i + c, j, s * lbs(i, c));
            }
          }
        }
      }
      row += 3 * n;
    }

    // body-model: sqrt(w_var * gamma_v) * (v_data - v_naked)
    if (use_var) {
      for (int i = 0; i < n; ++i) {
        const double s = std::sqrt(config_.w_var * model_.gamma_variance[i]);
        residuals->segment<3>(row + 3 * i) = s * (mesh.row(i) - naked.row(i)).transpose();
        if (jacobian) {
          if (offsets_active)
            for (int c = 0; c < 3; ++c)
              trips.emplace_back(row + 3 * i + c, offset_col(i, c), s);
          for (int j = 0; j < b_dim; ++j) {
            // beta enters v_naked with -B_s, and v_data with +B_s when active
            double factor = (shape_in_data ? 1.0 : 0.0) - 1.0;
            for (int c = 0; c < 3; ++c) {
              double val = s * factor * model_.shape_basis(3 * i + c, j);
              if (val != 0) trips.emplace_back(row + 3 * i + c, j, val);
            }
          }
        }
      }
      row += 3 * n;
    }

    // symmetry: sqrt(w_sym * gamma_s) * (mirror(d_i) - d_j)
    if (use_sym) {
      const Vec3 mirror(-1.0, 1.0, 1.0);
      for (size_t p = 0; p < model_.symmetry_pairs.size(); ++p) {
        const auto [i, j] = model_.symmetry_pairs[p];
        const double gamma =
            0.5 * (model_.gamma_symmetry[i] + model_.gamma_symmetry[j]);
        const double s = std::sqrt(config_.w_sym * gamma);
        const Vec3 di = offsets.row(i).transpose();
        const Vec3 dj = offsets.row(j).transpose();
        residuals->segment<3>(row) = s * (mirror.asDiagonal() * di - dj);
        if (jacobian) {
          for (int c = 0; c < 3; ++c) {
            trips.emplace_back(row + c, offset_col(i, c), s * mirror[c]);
            trips.emplace_back(row + c, offset_col(j, c), -s);
          }
        }
        row += 3;
      }
    }

    // height: sqrt(w_h) * (Y extent - target)
    if (use_height) {
      int arg_max = 0, arg_min = 0;
      mesh.col(1).maxCoeff(&arg_max);
      mesh.col(1).minCoeff(&arg_min);
      const double s = std::sqrt(config_.w_height);
      (*residuals)[row] =
          s * (mesh(arg_max, 1) - mesh(arg_min, 1) - *config_.known_height);
      if (jacobian) {
        if (offsets_active) {
          trips.emplace_back(row, offset_col(arg_max, 1), s);
          trips.emplace_back(row, offset_col(arg_min, 1), -s);
        }
        if (shape_in_data)
          for (int j = 0; j < b_dim; ++j) {
            double val = s * (model_.shape_basis(3 * arg_max + 1, j) -
                              model_.shape_basis(3 * arg_min + 1, j));
            if (val != 0) trips.emplace_back(row, j, val);
          }
      }
      row += 1;
    }

    if (jacobian) {
      jacobian->resize(rows, dimension());
      jacobian->setFromTriplets(trips.begin(), trips.end());
    }
  }

  /// Refreshes robust weights from current point-line distances.
  void refresh_robust_weights(const MatX3& mesh) {
    for (auto& cst : constraints) {
      double e = point_line_distance(cst.ray, mesh.row(cst.vertex).transpose());
      cst.irls_weight = gm_irls_weight(e, config_.sigma_gm);
    }
  }

  const SkinnedModel& model() const { return model_; }
  const VecX& beta0() const { return beta0_; }
  const EnergyConfig& config() const { return config_; }

 private:
  const SkinnedModel& model_;
  VecX beta0_;
  const SpMat& laplacian_;
  MatX3 delta_;
  const EnergyConfig& config_;
};

struct ConsensusRound {
  int round = 0;
  double energy_start = 0;
  double energy_end = 0;
  int64_t correspondences = 0;
  int64_t dropped_beyond_cap = 0;
  int64_t dropped_singular = 0;
  int solver_iterations = 0;
  int factorization_failures = 0;
};

struct ConsensusReport {
  std::vector<ConsensusRound> rounds;
  std::vector<int> skipped_frames;
  std::vector<int> pose_mismatch_frames;
  double final_energy = 0;
};

struct ConsensusResult {
  VecX beta;
  MatX3 offsets;
  ConsensusReport report;
};

namespace detail {

inline std::vector<WeightedConstraint> cloud_to_constraints(const UnposedCloud& cloud) {
  std::vector<WeightedConstraint> out;
  out.reserve(cloud.items.size());
  for (const auto& c : cloud.items) out.push_back({c.vertex, c.unposed, 1.0, 1.0});
  return out;
}

inline void check_monotone(const DoglegReport& rep) {
  for (size_t i = 1; i < rep.energies.size(); ++i)
    if (rep.energies[i] > rep.energies[i - 1] + 1e-9)
      throw NumericalError("energy increased within an inner solve (bug trap)");
}

}  // namespace detail

/// Alternates inner dog-leg solves of the consensus energy over (beta, D)
/// with re-association/re-unposing of the silhouette rays against the updated
/// shape, re-anchoring the Laplacian target and refreshing robust weights at
/// each round boundary.
inline ConsensusResult optimize_consensus(const SkinnedModel& model, const VecX& beta0,
                                          const std::vector<FrameObservations>& frames,
                                          const EnergyConfig& config) {
  const int n = model.vertex_count();
  LaplacianResult lap = uniform_laplacian(model.faces, n);

  VecX beta = beta0;
  MatX3 offsets = MatX3::Zero(n, 3);
  MatX3 delta = lap.op * rest_vertices(model, beta0);  // anchor at D = 0

  std::vector<Pose> poses;
  std::vector<std::vector<PluckerRay>> rays;
  std::vector<PinholeCamera> cameras;
  for (const auto& f : frames) {
    poses.push_back(f.pose);
    rays.push_back(f.rays);
    cameras.push_back(f.camera);
  }

  ConsensusResult result;
  int64_t round1_count = -1;
  for (int round = 1; round <= config.rounds; ++round) {
    UnposedCloud cloud = build_unposed_cloud_from_rays(model, beta0, offsets, poses,
                                                       rays, cameras,
                                                       config.association);
    if (round1_count < 0) {
      round1_count = cloud.stats.survived;
      result.report.pose_mismatch_frames = cloud.stats.pose_mismatch_frames;
    }
    if (cloud.stats.survived * 10 < round1_count)
      throw NumericalError(
          "correspondence collapse: " + std::to_string(cloud.stats.survived) +
          " survivors vs " + std::to_string(round1_count) + " in round 1");
    if (round > 1) delta = lap.op * rest_vertices(model, beta0, offsets);

    ConsensusProblem problem(model, beta0, lap.op, delta, config);
    problem.constraints = detail::cloud_to_constraints(cloud);
    problem.refresh_robust_weights(rest_vertices(model, beta0, offsets));

    DoglegOptions opts;
    opts.max_iterations = config.inner_iterations;
    opts.initial_radius = config.trust_radius;
    DoglegReport rep;
    VecX x = solve_dogleg(problem, problem.pack(beta, offsets), opts, &rep);
    detail::check_monotone(rep);
    if (rep.energies.back() > rep.energies.front() + 1e-9)
      throw NumericalError("energy increased across an inner solve (bug trap)");
    problem.unpack(x, &beta, &offsets);

    ConsensusRound r;
    r.round = round;
    r.energy_start = rep.energies.front();
    r.energy_end = rep.energies.back();
    r.correspondences = cloud.stats.survived;
    r.dropped_beyond_cap = cloud.stats.beyond_cap;
    r.dropped_singular = cloud.stats.singular;
    r.solver_iterations = rep.iterations;
    r.factorization_failures = rep.factorization_failures;
    result.report.rounds.push_back(r);
    result.report.final_energy = r.energy_end;
  }
  result.beta = beta;
  result.offsets = offsets;
  return result;
}

/// Fits shape coefficients alone (offsets frozen) to one or more frames'
/// rays, optionally with a known-height constraint. Used to bootstrap beta0.
inline VecX fit_shape_to_frames(const SkinnedModel& model, const VecX& beta_init,
                                const std::vector<FrameObservations>& frames,
                                EnergyConfig config) {
  config.w_lp = 0;
  config.w_var = 0;
  config.w_sym = 0;
  const int n = model.vertex_count();
  LaplacianResult lap = uniform_laplacian(model.faces, n);
  MatX3 zero = MatX3::Zero(n, 3);
  VecX beta = beta_init;
  std::vector<Pose> poses;
  std::vector<std::vector<PluckerRay>> rays;
  std::vector<PinholeCamera> cameras;
  for (const auto& f : frames) {
    poses.push_back(f.pose);
    rays.push_back(f.rays);
    cameras.push_back(f.camera);
  }
  for (int round = 1; round <= config.rounds; ++round) {
    UnposedCloud cloud = build_unposed_cloud_from_rays(model, beta, zero, poses, rays,
                                                       cameras, config.association);
    MatX3 delta = lap.op * rest_vertices(model, beta);
    ConsensusProblem problem(model, beta, lap.op, delta, config);
    problem.shape_in_data = true;
    problem.offsets_active = false;
    problem.fixed_offsets = zero;
    problem.constraints = detail::cloud_to_constraints(cloud);
    problem.refresh_robust_weights(rest_vertices(model, beta));
    DoglegOptions opts;
    opts.max_iterations = config.inner_iterations;
    opts.initial_radius = config.trust_radius;
    DoglegReport rep;
    VecX x = solve_dogleg(problem, problem.pack(beta, zero), opts, &rep);
    MatX3 ignored;
    problem.unpack(x, &beta, &ignored);
  }
  return beta;
}

}  // namespace hullfuse
