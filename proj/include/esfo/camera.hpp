#pragma once

#include <vector>

#include <Eigen/Core>

namespace esfo {

struct CameraIntrinsics {
  double fx = 1.0;
  double fy = 1.0;
  double cx = 0.0;
  double cy = 0.0;
  int width = 0;   // 0 when unknown
  int height = 0;

  void validate() const;
  Eigen::Matrix3d matrix() const;
  bool in_image(const Eigen::Vector2d& px) const;
};

inline constexpr double kMinDepth = 1e-6;

// Pinhole projection of a camera-frame point. Throws BehindCamera when
// Z <= min_depth.
Eigen::Vector2d project(const Eigen::Vector3d& Xc, const CameraIntrinsics& K,
                        double min_depth = kMinDepth);

// World-to-camera rigid transform: Xc = R * Xw + t.
struct CameraPose {
  double time = 0.0;  // seconds
  Eigen::Matrix3d R = Eigen::Matrix3d::Identity();
  Eigen::Vector3d t = Eigen::Vector3d::Zero();

  Eigen::Vector3d apply(const Eigen::Vector3d& Xw) const { return R * Xw + t; }
  Eigen::Vector3d center() const { return -R.transpose() * t; }
};

using PoseSet = std::vector<CameraPose>;

// Throws ValidationError if any rotation is not orthonormal with det +1.
void validate_poses(const PoseSet& poses);

}  // namespace esfo
