#pragma once

#include <optional>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "esfo/camera.hpp"
#include "esfo/reconstruction.hpp"

namespace esfo {

// Unit viewing ray in world coordinates through pixel px.
Eigen::Vector3d pixel_ray(const CameraPose& pose, const Eigen::Vector2d& px,
                          const CameraIntrinsics& K);

// Midpoint of the shortest segment between two viewing rays. Throws
// DegenerateGeometry for (near) parallel rays.
Eigen::Vector3d triangulate_midpoint(const CameraPose& a, const Eigen::Vector2d& pa,
                                     const CameraPose& b, const Eigen::Vector2d& pb,
                                     const CameraIntrinsics& K);

// Linear (DLT) triangulation over all views. Throws DegenerateGeometry when
// the rays are parallel or fewer than 2 views are given.
Eigen::Vector3d triangulate_dlt(std::span<const CameraPose> poses,
                                std::span<const Eigen::Vector2d> pixels,
                                const CameraIntrinsics& K);

// Gauss-Newton/LM refinement of one point against its observations.
Eigen::Vector3d refine_point(const Eigen::Vector3d& initial, std::span<const CameraPose> poses,
                             std::span<const Eigen::Vector2d> pixels, const CameraIntrinsics& K,
                             int max_iters = 50);

// Largest angle (radians) between any two viewing rays of the point.
double max_ray_angle(std::span<const CameraPose> poses, std::span<const Eigen::Vector2d> pixels,
                     const CameraIntrinsics& K);

struct TriangulationOptions {
  int min_observations = 2;
  double min_ray_angle_deg = 1.0;
};

// Triangulates every landmark of `rec` from its observations under the
// orbit poses: the widest-baseline pair seeds a midpoint estimate that is
// refined over all observations. Landmarks that fail are returned empty.
std::vector<std::optional<Eigen::Vector3d>> triangulate_landmarks(
    const Reconstruction& rec, std::span<const Observation> observations,
    const TriangulationOptions& opts = {});

}  // namespace esfo
