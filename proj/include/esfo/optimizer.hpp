#pragma once

#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "esfo/camera.hpp"
#include "esfo/orbit_model.hpp"
#include "esfo/reconstruction.hpp"

namespace esfo {

inline constexpr double kResidualCap = 1e3;

struct ResidualSet {
  std::vector<Eigen::Vector2d> values;  // predicted - measured, pixels
  std::vector<bool> behind;             // capped because the point was behind the camera
};

// Reprojection residuals for every observation at t_k = k * dt. Throws
// PreconditionError for an observation with an unknown landmark.
ResidualSet residuals(const OrbitParams& orbit, std::span<const Eigen::Vector3d> landmarks,
                      std::span<const Observation> observations, const CameraIntrinsics& K,
                      double dt, double residual_cap = kResidualCap);

// Residuals against free poses keyed by window.
ResidualSet residuals(const SfmSolution& solution, std::span<const Observation> observations,
                      double residual_cap = kResidualCap);

// Per-component RMS: sqrt(sum |e|^2 / (2 N)).
double rms_of(const ResidualSet& res);
double rms_reprojection(const Reconstruction& rec, std::span<const Observation> observations);
double rms_reprojection(const SfmSolution& solution, std::span<const Observation> observations);

// Huber penalty on a residual norm: s^2 inside delta, 2 delta s - delta^2 outside.
double huber(double s, double delta);

struct OptimizerOptions {
  double huber_delta = 2.0;     // pixels
  int max_iters = 200;
  double rel_cost_tol = 1e-10;
  double gradient_tol = 1e-10;
  double initial_lambda = 1e-4;
  double residual_cap = kResidualCap;
  // Solve on growing time horizons before the full sequence.
  bool continuation = false;
  std::vector<double> horizons = {0.125, 0.25, 0.5};  // fractions of the sequence

  void validate() const;
};

// Local parametrisation used by the solver: 10 orbit increments
// (df, dR0 (3), dn tangent (2), du about n (1), dc (3)) followed by 3 per
// landmark. r is not a variable.
inline constexpr int kOrbitDofs = 10;

struct SolverState {
  OrbitParams orbit;
  std::vector<Eigen::Vector3d> landmarks;
};

// Applies an increment of size kOrbitDofs + 3 * landmarks.
SolverState retract(const SolverState& state, const Eigen::VectorXd& delta);

// Robust cost and its gradient over the local parametrisation; exposed for
// derivative checks.
class CostFunction {
 public:
  CostFunction(std::span<const Observation> observations, const CameraIntrinsics& K, double dt,
               const OptimizerOptions& opts);

  double cost(const SolverState& state) const;
  // Gradient of cost at `state` from central-difference Jacobians.
  Eigen::VectorXd gradient(const SolverState& state) const;

 private:
  std::vector<Observation> observations_;
  CameraIntrinsics K_;
  double dt_;
  OptimizerOptions opts_;
};

// Levenberg-Marquardt refinement of {f, R0, n, u, c, landmarks} with r
// fixed. Throws InvalidInitialization for a non-finite initial cost.
Reconstruction optimize(const Reconstruction& init, std::span<const Observation> observations,
                        const OptimizerOptions& opts = {});

}  // namespace esfo
