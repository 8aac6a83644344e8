#include "esfo/orbit_model.hpp"

#include <cmath>
#include <numbers>
#include <vector>

#include "esfo/errors.hpp"
#include "esfo/geometry.hpp"

namespace esfo {

void CameraIntrinsics::validate() const {
  if (!(fx > 0 && fy > 0)) throw ValidationError("focal lengths must be positive");
}

Eigen::Matrix3d CameraIntrinsics::matrix() const {
  Eigen::Matrix3d K;
  K << fx, 0, cx, 0, fy, cy, 0, 0, 1;
  return K;
}

bool CameraIntrinsics::in_image(const Eigen::Vector2d& px) const {
  // Unknown image size means every pixel counts as inside.
  if (width <= 0 || height <= 0) return true;
  return px.x() >= 0 && px.y() >= 0 && px.x() < width && px.y() < height;
}

Eigen::Vector2d project(const Eigen::Vector3d& Xc, const CameraIntrinsics& K, double min_depth) {
  if (!(Xc.z() > min_depth)) throw BehindCamera("point behind camera (Z <= min depth)");
  return {K.fx * Xc.x() / Xc.z() + K.cx, K.fy * Xc.y() / Xc.z() + K.cy};
}

void validate_poses(const PoseSet& poses) {
  for (const auto& p : poses) {
    if (!is_rotation(p.R)) throw ValidationError("pose rotation is not orthonormal");
  }
}

double OrbitParams::phase(double t) const { return 2.0 * std::numbers::pi * f * t; }

void OrbitParams::normalize() {
  n.normalize();
  u = (u - n.dot(u) * n).normalized();
  R0 = project_to_so3(R0);
}

void OrbitParams::validate() const {
  if (!(r > 0) || !std::isfinite(r)) throw ValidationError("orbit radius must be positive");
  if (!(f > 0) || !std::isfinite(f)) throw ValidationError("orbit rate must be positive");
  if (std::abs(n.norm() - 1.0) > 1e-9 || std::abs(u.norm() - 1.0) > 1e-9) {
    throw ValidationError("orbit axis and phase vector must be unit length");
  }
  if (std::abs(n.dot(u)) > 1e-9) throw ValidationError("phase vector must be orthogonal to axis");
  if (!is_rotation(R0)) throw ValidationError("R0 is not a rotation");
}

Eigen::Vector3d orbit_center(double tau, const OrbitParams& o) {
  const double a = o.phase(tau);
  return o.r * std::cos(a) * o.u + o.r * std::sin(a) * o.v() + o.c;
}

Eigen::Matrix3d orbit_frame_rotation(double t, const OrbitParams& o) {
  // Rod(n, z) * R_n(-phase) == R_z(-phase) * Rod(n, z).
  return axis_rotation(Eigen::Vector3d::UnitZ(), -o.phase(t)) * rod(o.n, Eigen::Vector3d::UnitZ());
}

Eigen::Matrix3d look_at_rotation(const Eigen::Vector3d& d) {
  const Eigen::Vector3d minus_y(0.0, -1.0, 0.0);
  const Eigen::Vector3d side = minus_y.cross(d);
  if (side.norm() < 1e-12) throw DegenerateGeometry("look-at direction parallel to y axis");
  const Eigen::Vector3d e = side.normalized();
  const Eigen::Vector3d g = d.cross(e).normalized();
  Eigen::Matrix3d L;
  L.row(0) = e.transpose();
  L.row(1) = g.transpose();
  L.row(2) = d.normalized().transpose();
  return L;
}

CameraPose orbit_pose(double t, const OrbitParams& o) {
  if (!(o.r > 0)) throw DegenerateGeometry("orbit radius must be positive");
  const Eigen::Vector3d center = orbit_center(t, o);
  const Eigen::Matrix3d Ro = orbit_frame_rotation(t, o);
  const Eigen::Vector3d to_c = Ro * (o.c - center);
  const double dist = to_c.norm();
  if (dist < 1e-300) throw DegenerateGeometry("camera centre coincides with orbit centre");
  const Eigen::Matrix3d L = look_at_rotation(to_c / dist);

  CameraPose pose;
  pose.time = t;
  pose.R = o.R0 * L * Ro;
  pose.t = -pose.R * center;
  return pose;
}

Eigen::Vector2d reproject(const Eigen::Vector3d& Xw, double t, const OrbitParams& o,
                          const CameraIntrinsics& K, double min_depth) {
  return project(orbit_pose(t, o).apply(Xw), K, min_depth);
}

double ScrewLine::distance_to(const Eigen::Vector2d& p) const {
  const Eigen::Vector2d d = direction();
  const Eigen::Vector2d w = p - center_px;
  return std::abs(d.x() * w.y() - d.y() * w.x());
}

namespace {

// Clips the infinite line through a, b to [0, w] x [0, h].
std::optional<std::pair<Eigen::Vector2d, Eigen::Vector2d>> clip_to_image(
    const Eigen::Vector2d& a, const Eigen::Vector2d& b, double w, double h) {
  const Eigen::Vector2d d = b - a;
  std::vector<Eigen::Vector2d> hits;
  const auto add = [&](double s) {
    const Eigen::Vector2d p = a + s * d;
    if (p.x() >= -1e-9 && p.x() <= w + 1e-9 && p.y() >= -1e-9 && p.y() <= h + 1e-9) {
      for (const auto& q : hits) {
        if ((q - p).norm() < 1e-9) return;
      }
      hits.push_back(p);
    }
  };
  if (std::abs(d.x()) > 1e-15) {
    add((0.0 - a.x()) / d.x());
    add((w - a.x()) / d.x());
  }
  if (std::abs(d.y()) > 1e-15) {
    add((0.0 - a.y()) / d.y());
    add((h - a.y()) / d.y());
  }
  if (hits.size() < 2) return std::nullopt;
  return std::make_pair(hits[0], hits[1]);
}

}  // namespace

ScrewLine screw_line(const OrbitParams& o, const CameraIntrinsics& K) {
  const CameraPose pose = orbit_pose(0.0, o);
  const Eigen::Vector3d c_cam = pose.apply(o.c);
  const Eigen::Vector3d n_cam = pose.R * o.n;

  // Two axis points in front of the camera, preferring c itself.
  const double step = o.r;
  double s0 = 0.0;
  if (!(c_cam.z() > kMinDepth)) {
    if (std::abs(n_cam.z()) < 1e-12) throw BehindCamera("rotation axis is behind the camera");
    s0 = (kMinDepth - c_cam.z()) / n_cam.z() + (n_cam.z() > 0 ? step : -step);
  }
  double s1 = s0 + step;
  if (!((c_cam + s1 * n_cam).z() > kMinDepth)) s1 = s0 - step;
  if (!((c_cam + s1 * n_cam).z() > kMinDepth)) s1 = s0 + 0.5 * step * (n_cam.z() >= 0 ? 1 : -1);

  ScrewLine line;
  line.center_px = project(c_cam + s0 * n_cam, K);
  line.axis_px = project(c_cam + s1 * n_cam, K);
  if ((line.axis_px - line.center_px).norm() < 1e-12) {
    throw DegenerateGeometry("rotation axis projects to a point");
  }
  const double w = K.width > 0 ? K.width : 2.0 * K.cx;
  const double h = K.height > 0 ? K.height : 2.0 * K.cy;
  line.border = clip_to_image(line.center_px, line.axis_px, w, h);
  return line;
}

}  // namespace esfo
