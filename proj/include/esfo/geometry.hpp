#pragma once

#include <span>

#include <Eigen/Core>
#include <Eigen/Geometry>

namespace esfo {

// Minimal rotation taking unit vector a onto unit vector b (rotation about
// a x b by acos(a . b)). Anti-parallel inputs rotate by pi about an axis
// orthogonal to a.
Eigen::Matrix3d rod(const Eigen::Vector3d& a, const Eigen::Vector3d& b);

// Rotation by `angle` radians about unit `axis`.
Eigen::Matrix3d axis_rotation(const Eigen::Vector3d& axis, double angle);

// Exponential map from a rotation vector.
Eigen::Matrix3d so3_exp(const Eigen::Vector3d& w);
Eigen::Vector3d so3_log(const Eigen::Matrix3d& R);

// Nearest rotation in the Frobenius sense.
Eigen::Matrix3d project_to_so3(const Eigen::Matrix3d& M);

// Geodesic angle between two rotations, radians.
double rotation_angle_between(const Eigen::Matrix3d& A, const Eigen::Matrix3d& B);

// Angle between two directions, radians.
double angle_between(const Eigen::Vector3d& a, const Eigen::Vector3d& b);

bool is_rotation(const Eigen::Matrix3d& R, double tol = 1e-9);

// Chordal L2 mean of rotations.
Eigen::Matrix3d chordal_mean(std::span<const Eigen::Matrix3d> rotations);

}  // namespace esfo
