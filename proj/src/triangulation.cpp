#include "esfo/triangulation.hpp"

#include <cmath>
#include <numbers>

#include <Eigen/Dense>

#include "esfo/errors.hpp"
#include "esfo/geometry.hpp"

namespace esfo {

Eigen::Vector3d pixel_ray(const CameraPose& pose, const Eigen::Vector2d& px,
                          const CameraIntrinsics& K) {
  const Eigen::Vector3d cam((px.x() - K.cx) / K.fx, (px.y() - K.cy) / K.fy, 1.0);
  return (pose.R.transpose() * cam).normalized();
}

Eigen::Vector3d triangulate_midpoint(const CameraPose& a, const Eigen::Vector2d& pa,
                                     const CameraPose& b, const Eigen::Vector2d& pb,
                                     const CameraIntrinsics& K) {
  const Eigen::Vector3d ca = a.center();
  const Eigen::Vector3d cb = b.center();
  const Eigen::Vector3d da = pixel_ray(a, pa, K);
  const Eigen::Vector3d db = pixel_ray(b, pb, K);
  const double cosang = da.dot(db);
  const double denom = 1.0 - cosang * cosang;
  if (denom < 1e-14) throw DegenerateGeometry("viewing rays are parallel");
  const Eigen::Vector3d w = ca - cb;
  const double sa = (cosang * db.dot(w) - da.dot(w)) / denom;
  const double sb = (db.dot(w) - cosang * da.dot(w)) / denom;
  return 0.5 * ((ca + sa * da) + (cb + sb * db));
}

Eigen::Vector3d triangulate_dlt(std::span<const CameraPose> poses,
                                std::span<const Eigen::Vector2d> pixels,
                                const CameraIntrinsics& K) {
  if (poses.size() != pixels.size()) throw PreconditionError("pose/pixel count mismatch");
  if (poses.size() < 2) throw DegenerateGeometry("triangulation needs at least 2 views");
  const Eigen::Index m = static_cast<Eigen::Index>(poses.size());
  Eigen::MatrixXd A(2 * m, 4);
  for (Eigen::Index i = 0; i < m; ++i) {
    Eigen::Matrix<double, 3, 4> P;
    P.leftCols<3>() = poses[i].R;
    P.col(3) = poses[i].t;
    // Normalised image coordinates keep the system well conditioned.
    const double x = (pixels[i].x() - K.cx) / K.fx;
    const double y = (pixels[i].y() - K.cy) / K.fy;
    A.row(2 * i) = x * P.row(2) - P.row(0);
    A.row(2 * i + 1) = y * P.row(2) - P.row(1);
  }
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(A, Eigen::ComputeFullV);
  const auto s = svd.singularValues();
  if (!(s(0) > 0) || s(2) <= 1e-12 * s(0)) {
    throw DegenerateGeometry("triangulation is rank deficient (parallel rays)");
  }
  const Eigen::Vector4d X = svd.matrixV().col(3);
  if (std::abs(X(3)) < 1e-15 * X.head<3>().norm()) {
    throw DegenerateGeometry("triangulated point at infinity");
  }
  return X.head<3>() / X(3);
}

Eigen::Vector3d refine_point(const Eigen::Vector3d& initial, std::span<const CameraPose> poses,
                             std::span<const Eigen::Vector2d> pixels, const CameraIntrinsics& K,
                             int max_iters) {
  const auto cost_of = [&](const Eigen::Vector3d& X, double* out) {
    double c = 0.0;
    for (std::size_t i = 0; i < poses.size(); ++i) {
      const Eigen::Vector3d Xc = poses[i].apply(X);
      if (!(Xc.z() > kMinDepth)) return false;
      c += (project(Xc, K) - pixels[i]).squaredNorm();
    }
    *out = c;
    return true;
  };

  Eigen::Vector3d X = initial;
  double cost = 0.0;
  if (!cost_of(X, &cost)) return X;
  double lambda = 1e-3;
  for (int it = 0; it < max_iters; ++it) {
    Eigen::Matrix3d H = Eigen::Matrix3d::Zero();
    Eigen::Vector3d g = Eigen::Vector3d::Zero();
    for (std::size_t i = 0; i < poses.size(); ++i) {
      const Eigen::Vector3d Xc = poses[i].apply(X);
      const double iz = 1.0 / Xc.z();
      Eigen::Matrix<double, 2, 3> dp;
      dp << K.fx * iz, 0, -K.fx * Xc.x() * iz * iz, 0, K.fy * iz, -K.fy * Xc.y() * iz * iz;
      const Eigen::Matrix<double, 2, 3> J = dp * poses[i].R;
      const Eigen::Vector2d e = project(Xc, K) - pixels[i];
      H += J.transpose() * J;
      g += J.transpose() * e;
    }
    if (g.lpNorm<Eigen::Infinity>() < 1e-12) break;
    bool accepted = false;
    while (lambda < 1e12) {
      Eigen::Matrix3d Hd = H;
      Hd.diagonal() *= (1.0 + lambda);
      const Eigen::Vector3d step = Hd.ldlt().solve(-g);
      const Eigen::Vector3d trial = X + step;
      double trial_cost = 0.0;
      if (step.allFinite() && cost_of(trial, &trial_cost) && trial_cost < cost) {
        const double drop = (cost - trial_cost) / std::max(cost, 1e-300);
        X = trial;
        cost = trial_cost;
        lambda = std::max(lambda * 0.5, 1e-9);
        accepted = true;
        if (drop < 1e-12) return X;
        break;
      }
      lambda *= 10.0;
    }
    if (!accepted) break;
  }
  return X;
}

double max_ray_angle(std::span<const CameraPose> poses, std::span<const Eigen::Vector2d> pixels,
                     const CameraIntrinsics& K) {
  std::vector<Eigen::Vector3d> rays;
  rays.reserve(poses.size());
  for (std::size_t i = 0; i < poses.size(); ++i) rays.push_back(pixel_ray(poses[i], pixels[i], K));
  double best = 0.0;
  for (std::size_t i = 0; i < rays.size(); ++i) {
    for (std::size_t j = i + 1; j < rays.size(); ++j) {
      best = std::max(best, angle_between(rays[i], rays[j]));
    }
  }
  return best;
}

std::vector<std::optional<Eigen::Vector3d>> triangulate_landmarks(
    const Reconstruction& rec, std::span<const Observation> observations,
    const TriangulationOptions& opts) {
  const std::size_t count = rec.landmarks.size();
  std::vector<std::vector<const Observation*>> by_landmark(count);
  for (const auto& o : observations) {
    if (o.landmark < 0 || static_cast<std::size_t>(o.landmark) >= count) {
      throw PreconditionError("observation references unknown landmark");
    }
    by_landmark[o.landmark].push_back(&o);
  }

  const double min_angle = opts.min_ray_angle_deg * std::numbers::pi / 180.0;
  std::vector<std::optional<Eigen::Vector3d>> out(count);
  for (std::size_t p = 0; p < count; ++p) {
    const auto& obs = by_landmark[p];
    if (static_cast<int>(obs.size()) < std::max(2, opts.min_observations)) continue;
    PoseSet poses;
    std::vector<Eigen::Vector2d> pixels;
    std::vector<Eigen::Vector3d> rays;
    for (const auto* o : obs) {
      poses.push_back(rec.pose(o->window));
      pixels.push_back(o->px);
      rays.push_back(pixel_ray(poses.back(), o->px, rec.intrinsics));
    }
    std::size_t bi = 0, bj = 1;
    double best = -1.0;
    for (std::size_t i = 0; i < rays.size(); ++i) {
      for (std::size_t j = i + 1; j < rays.size(); ++j) {
        const double a = angle_between(rays[i], rays[j]);
        if (a > best) {
          best = a;
          bi = i;
          bj = j;
        }
      }
    }
    if (best < min_angle) continue;
    Eigen::Vector3d X;
    try {
      X = triangulate_midpoint(poses[bi], pixels[bi], poses[bj], pixels[bj], rec.intrinsics);
    } catch (const DegenerateGeometry&) {
      continue;
    }
    X = refine_point(X, poses, pixels, rec.intrinsics);
    bool in_front = X.allFinite();
    for (const auto& pose : poses) {
      if (!in_front) break;
      in_front = pose.apply(X).z() > kMinDepth;
    }
    if (in_front) out[p] = X;
  }
  return out;
}

}  // namespace esfo
