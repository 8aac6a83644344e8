#pragma once

#include <optional>
#include <utility>

#include <Eigen/Core>
#include <Eigen/Geometry>

#include "esfo/camera.hpp"

namespace esfo {

// Circular-motion model: 14 stored numbers (r, f, R0, n, u, c).
struct OrbitParams {
  double r = 1.0;  // orbit radius, world units
  double f = 1.0;  // rotation rate, Hz
  Eigen::Matrix3d R0 = Eigen::Matrix3d::Identity();
  Eigen::Vector3d n = Eigen::Vector3d::UnitZ();  // spin axis, unit
  Eigen::Vector3d u = Eigen::Vector3d::UnitX();  // phase vector, unit, orthogonal to n
  Eigen::Vector3d c = Eigen::Vector3d::Zero();   // circle centre

  Eigen::Vector3d v() const { return n.cross(u); }
  double phase(double t) const;

  // Re-normalises n and u and makes u orthogonal to n.
  void normalize();
  // Throws ValidationError when the invariants do not hold.
  void validate() const;
};

// Camera centre on the orbit at time tau.
Eigen::Vector3d orbit_center(double tau, const OrbitParams& orbit);

// Orientation of the co-rotating orbit frame at time t: Rod(n, z) applied
// after undoing the in-plane rotation about n.
Eigen::Matrix3d orbit_frame_rotation(double t, const OrbitParams& orbit);

// Rotation whose rows are (-y x d, d x (-y x d), d), so d becomes the
// optical axis. Throws DegenerateGeometry when d is parallel to y.
Eigen::Matrix3d look_at_rotation(const Eigen::Vector3d& d);

// World-to-camera transform at time t: R0 * look-at * orbit frame, centred
// on orbit_center(t).
CameraPose orbit_pose(double t, const OrbitParams& orbit);

Eigen::Vector2d reproject(const Eigen::Vector3d& Xw, double t, const OrbitParams& orbit,
                          const CameraIntrinsics& K, double min_depth = kMinDepth);

// Image of the spin axis through the circle centre at t = 0.
struct ScrewLine {
  Eigen::Vector2d center_px;  // projection of c
  Eigen::Vector2d axis_px;    // projection of a second point on the axis
  // Endpoints clipped to the image rectangle, when the line crosses it.
  std::optional<std::pair<Eigen::Vector2d, Eigen::Vector2d>> border;

  Eigen::Vector2d direction() const { return (axis_px - center_px).normalized(); }
  double distance_to(const Eigen::Vector2d& p) const;
};

ScrewLine screw_line(const OrbitParams& orbit, const CameraIntrinsics& K);

}  // namespace esfo
