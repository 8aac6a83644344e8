#pragma once

#include <map>
#include <vector>

#include <Eigen/Core>

#include "esfo/camera.hpp"
#include "esfo/orbit_model.hpp"

namespace esfo {

// One tracked pixel: landmark index into the landmark array, window k.
struct Observation {
  int landmark = 0;
  int window = 0;
  Eigen::Vector2d px = Eigen::Vector2d::Zero();
};

// Orbit-constrained solution. Poses are never stored; they are derived from
// the orbit at t_k = k * dt.
struct Reconstruction {
  OrbitParams orbit;
  std::vector<Eigen::Vector3d> landmarks;
  std::vector<int> landmark_ids;  // external ids (track ids), parallel to landmarks
  CameraIntrinsics intrinsics;
  double dt = 0.030;
  std::vector<int> windows;  // windows with at least one observation

  double initial_rms = 0.0;
  double rms_reprojection = 0.0;
  bool converged = false;
  int iterations = 0;
  std::vector<double> cost_history;  // cost after every accepted step, initial first

  CameraPose pose(int window) const;
  PoseSet poses() const;
};

// Free-pose view used to compare against solutions that are not orbit
// constrained (e.g. an imported model).
struct SfmSolution {
  std::map<int, CameraPose> poses;  // by window
  std::vector<Eigen::Vector3d> landmarks;
  std::vector<int> landmark_ids;
  CameraIntrinsics intrinsics;
};

SfmSolution to_solution(const Reconstruction& rec);

// Windows referenced by the observations, sorted and unique.
std::vector<int> observed_windows(const std::vector<Observation>& observations);

}  // namespace esfo
