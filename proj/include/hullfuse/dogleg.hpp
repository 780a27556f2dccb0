#pragma once

#include <Eigen/SparseCholesky>

#include <cmath>
#include <string>
#include <vector>

#include "hullfuse/common.hpp"

namespace hullfuse {

/// Sparse nonlinear least-squares problem: minimize |r(x)|^2.
class LeastSquaresProblem {
 public:
  virtual ~LeastSquaresProblem() = default;
  virtual int dimension() const = 0;
  /// Fills residuals at x; fills the jacobian too when non-null.
  virtual void evaluate(const VecX& x, VecX* residuals, SpMat* jacobian) const = 0;
};

struct DoglegOptions {
  int max_iterations = 50;
  double initial_radius = 10.0;
  double gradient_tolerance = 1e-8;   // on the inf-norm of J^T r
  double step_tolerance = 1e-10;
  double min_radius = 1e-14;
};

struct DoglegReport {
  int iterations = 0;               // accepted steps
  int rejected_steps = 0;
  int factorization_failures = 0;   // iterations that fell back to steepest descent
  std::vector<double> energies;     // |r|^2 after each accepted step, incl. start
  bool converged = false;
  std::string stop_reason;
};

/// Powell dog-leg on the Gauss-Newton model with sparse normal equations.
/// Accepted steps never increase |r|^2. Factorization failures fall back to
/// the steepest-descent leg for that iteration and are counted.
inline VecX solve_dogleg(const LeastSquaresProblem& problem, VecX x,
                         const DoglegOptions& opts, DoglegReport* report) {
  DoglegReport local;
  DoglegReport& rep = report ? *report : local;
  rep = DoglegReport{};

  VecX residuals;
  SpMat jac;
  problem.evaluate(x, &residuals, &jac);
  double energy = residuals.squaredNorm();
  rep.energies.push_back(energy);
  if (energy == 0.0) {
    rep.converged = true;
    rep.stop_reason = "zero residual at start";
    return x;
  }

  double radius = opts.initial_radius;
  for (int iter = 0; iter < opts.max_iterations;) {
    VecX gradient = jac.transpose() * residuals;  // half-gradient of |r|^2
    if (gradient.lpNorm<Eigen::Infinity>() < opts.gradient_tolerance) {
      rep.converged = true;
      rep.stop_reason = "gradient below tolerance";
      break;
    }

    // Gauss-Newton step via the normal equations.
    bool have_gn = false;
    VecX h_gn;
    {
      SpMat jtj = SpMat(jac.transpose()) * jac;
      Eigen::SimplicialLDLT<SpMat> ldlt(jtj);
      if (ldlt.info() == Eigen::Success) {
        h_gn = ldlt.solve(-gradient);
        have_gn = ldlt.info() == Eigen::Success && h_gn.allFinite();
      }
      if (!have_gn) ++rep.factorization_failures;
    }

    const double g_sqnorm = gradient.squaredNorm();
    const VecX jg = jac * gradient;
    const double alpha = g_sqnorm / jg.squaredNorm();
    const VecX h_sd = -alpha * gradient;

    // dog-leg combination within the trust region
    VecX step;
    if (have_gn && h_gn.norm() <= radius) {
      step = h_gn;
    } else if (h_sd.norm() >= radius) {
      step = (radius / h_sd.norm()) * h_sd;
    } else if (!have_gn) {
      step = h_sd;
    } else {
      const VecX diff = h_gn - h_sd;
      const double a = diff.squaredNorm();
      const double b = 2.0 * h_sd.dot(diff);
      const double c = h_sd.squaredNorm() - radius * radius;
      const double tau = (-b + std::sqrt(std::max(0.0, b * b - 4 * a * c))) / (2 * a);
      step = h_sd + tau * diff;
    }

    const VecX predicted = residuals + jac * step;
    const double pred_reduction = energy - predicted.squaredNorm();
    VecX trial = x + step;
    VecX trial_res;
    problem.evaluate(trial, &trial_res, nullptr);
    const double trial_energy = trial_res.squaredNorm();
    const double actual_reduction = energy - trial_energy;

    if (actual_reduction > 0 && std::isfinite(trial_energy)) {
      const double rho = pred_reduction > 0 ? actual_reduction / pred_reduction : 1.0;
      x = std::move(trial);
      energy = trial_energy;
      rep.energies.push_back(energy);
      ++rep.iterations;
      ++iter;
      const double step_norm = step.norm();
      if (rho > 0.75) radius = std::max(radius, 3.0 * step_norm);
      if (rho < 0.25) radius *= 0.5;
      problem.evaluate(x, &residuals, &jac);
      if (step_norm < opts.step_tolerance) {
        rep.converged = true;
        rep.stop_reason = "step below tolerance";
        break;
      }
    } else {
      ++rep.rejected_steps;
      radius = std::min(radius * 0.5, step.norm() * 0.5);
      if (radius < opts.min_radius) {
        rep.stop_reason = "trust region collapsed";
        break;
      }
    }
  }
  if (rep.stop_reason.empty()) rep.stop_reason = "iteration limit";
  return x;
}

}  // namespace hullfuse
