#include "esfo/orbit_init.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <numeric>

#include <Eigen/SVD>
#include <fftw3.h>

#include "esfo/errors.hpp"
#include "esfo/geometry.hpp"

namespace esfo {

namespace {

Eigen::MatrixXd centered_rows(std::span<const Eigen::Vector3d> pts, const Eigen::Vector3d& mean) {
  Eigen::MatrixXd T(pts.size(), 3);
  for (std::size_t i = 0; i < pts.size(); ++i) T.row(i) = (pts[i] - mean).transpose();
  return T;
}

}  // namespace

PlaneFit fit_plane(std::span<const Eigen::Vector3d> centers) {
  if (centers.size() < 3) throw DegenerateGeometry("plane fit needs at least 3 points");
  PlaneFit fit;
  fit.centroid = Eigen::Vector3d::Zero();
  for (const auto& p : centers) fit.centroid += p;
  fit.centroid /= static_cast<double>(centers.size());
  const Eigen::MatrixXd T = centered_rows(centers, fit.centroid);

  const Eigen::MatrixXd xy = T.leftCols(2);
  Eigen::JacobiSVD<Eigen::MatrixXd> xy_svd(xy);
  const auto sv = xy_svd.singularValues();
  if (sv(0) > 0 && sv(1) > 1e-6 * sv(0)) {
    Eigen::MatrixXd A(T.rows(), 3);
    A << xy, Eigen::VectorXd::Ones(T.rows());
    const Eigen::Vector3d sol =
        A.bdcSvd(Eigen::ComputeThinU | Eigen::ComputeThinV).solve(T.col(2));
    fit.n = Eigen::Vector3d(sol(0), sol(1), -1.0).normalized();
  } else {
    // Plane contains the z direction (or the points are degenerate).
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(T, Eigen::ComputeThinV);
    const auto s = svd.singularValues();
    if (!(s(0) > 0) || s(1) <= 1e-9 * s(0)) {
      throw DegenerateGeometry("points are collinear or coincident");
    }
    fit.n = svd.matrixV().col(2).normalized();
    fit.total_least_squares = true;
  }

  // Orient n so the sequence turns counter-clockwise about it.
  Eigen::Vector3d swept = Eigen::Vector3d::Zero();
  for (Eigen::Index i = 0; i + 1 < T.rows(); ++i) {
    const Eigen::Vector3d a = T.row(i).transpose();
    const Eigen::Vector3d b = T.row(i + 1).transpose();
    swept += a.cross(b);
  }
  if (swept.dot(fit.n) < 0) fit.n = -fit.n;
  return fit;
}

CircleFit fit_circle(std::span<const Eigen::Vector3d> centers, const Eigen::Vector3d& n,
                     const Eigen::Vector3d& t_c) {
  if (centers.size() < 3) throw DegenerateGeometry("circle fit needs at least 3 points");
  const Eigen::Matrix3d to_z = rod(n, Eigen::Vector3d::UnitZ());
  const Eigen::Index m = static_cast<Eigen::Index>(centers.size());
  Eigen::MatrixXd A(m, 3);
  Eigen::VectorXd b(m);
  for (Eigen::Index i = 0; i < m; ++i) {
    const Eigen::Vector2d p = (to_z * (centers[i] - t_c)).head<2>();
    A.row(i) << p.x(), p.y(), 1.0;
    b(i) = p.squaredNorm();
  }
  Eigen::BDCSVD<Eigen::MatrixXd> svd(A, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const auto s = svd.singularValues();
  if (!(s(0) > 0) || s(2) <= 1e-12 * s(0)) {
    throw DegenerateGeometry("circle fit is rank deficient (collinear points)");
  }
  const Eigen::Vector3d theta = svd.solve(b);
  const double a = theta(0) / 2.0;
  const double bb = theta(1) / 2.0;
  const double radicand = theta(2) + a * a + bb * bb;
  if (!(radicand > 0) || !std::isfinite(radicand)) {
    throw DegenerateGeometry("circle radius is not real");
  }

  CircleFit fit;
  fit.n = n.normalized();
  fit.r = std::sqrt(radicand);
  fit.c = to_z.transpose() * Eigen::Vector3d(a, bb, 0.0) + t_c;
  Eigen::Vector3d radial = centers[0] - fit.c;
  radial -= radial.dot(fit.n) * fit.n;
  if (radial.norm() < 1e-300) throw DegenerateGeometry("first point sits on the circle axis");
  fit.u = radial.normalized();

  double sq = 0.0;
  for (const auto& p : centers) {
    const double d = distance_to_circle(p, fit.n, fit.c, fit.r);
    sq += d * d;
  }
  fit.rms_residual = std::sqrt(sq / static_cast<double>(m));
  return fit;
}

CircleFit fit_orbit_circle(std::span<const Eigen::Vector3d> centers) {
  const auto plane = fit_plane(centers);
  return fit_circle(centers, plane.n, plane.centroid);
}

double distance_to_circle(const Eigen::Vector3d& p, const Eigen::Vector3d& n,
                          const Eigen::Vector3d& c, double r) {
  const Eigen::Vector3d w = p - c;
  const double h = w.dot(n);
  const double rho = (w - h * n).norm();
  return std::hypot(rho - r, h);
}

double circle_deviation(std::span<const Eigen::Vector3d> centers) {
  return fit_orbit_circle(centers).rms_residual;
}

FrequencyEstimate dominant_frequency(std::span<const double> samples, double sample_period) {
  const int count = static_cast<int>(samples.size());
  if (count < 8) throw PreconditionError("frequency estimate needs at least 8 samples");
  FrequencyEstimate est;
  est.bin_width = 1.0 / (count * sample_period);

  const double mean = std::accumulate(samples.begin(), samples.end(), 0.0) / count;
  std::vector<double> in(count);
  double energy = 0.0;
  double scale = 0.0;
  for (int i = 0; i < count; ++i) {
    in[i] = samples[i] - mean;
    energy += in[i] * in[i];
    scale = std::max(scale, std::abs(samples[i]));
  }

  const int bins = count / 2 + 1;
  std::vector<std::complex<double>> out(bins);
  fftw_plan plan = fftw_plan_dft_r2c_1d(count, in.data(),
                                        reinterpret_cast<fftw_complex*>(out.data()), FFTW_ESTIMATE);
  fftw_execute(plan);
  fftw_destroy_plan(plan);

  std::vector<double> magnitude(bins);
  est.spectrum.reserve(bins);
  for (int k = 0; k < bins; ++k) {
    magnitude[k] = std::abs(out[k]);
    est.spectrum.emplace_back(k * est.bin_width, std::norm(out[k]));
  }

  // A signal whose AC energy is at rounding level has no dominant frequency.
  const double noise_floor = 1e-20 * count * std::max(scale * scale, 1e-300);
  if (!(energy > noise_floor) || bins < 2) return est;

  int peak = 1;
  for (int k = 2; k < bins; ++k) {
    if (magnitude[k] > magnitude[peak]) peak = k;
  }
  est.has_peak = true;
  est.peak_bin = peak;
  double offset = 0.0;
  if (peak > 1 && peak + 1 < bins) {
    const double a = magnitude[peak - 1];
    const double b = magnitude[peak];
    const double c = magnitude[peak + 1];
    const double denom = a - 2.0 * b + c;
    if (denom < 0) offset = std::clamp(0.5 * (a - c) / denom, -0.5, 0.5);
  }
  est.f_init = (peak + offset) * est.bin_width;
  return est;
}

std::vector<double> mean_x_signal(const EventStream& stream, double dt_f) {
  if (!(dt_f > 0)) throw ValidationError("sampling window must be positive");
  const int windows = static_cast<int>(std::floor(stream.end_time() / dt_f)) - 1;
  if (windows < 8) {
    throw PreconditionError("frequency estimate needs at least 8 windows of " +
                            std::to_string(dt_f) + " s");
  }
  std::vector<double> sum(windows, 0.0);
  std::vector<std::size_t> count(windows, 0);
  for (const auto& e : stream.events) {
    const int k = static_cast<int>(std::ceil(e.t / dt_f)) - 1;
    if (k < 1 || k > windows) continue;
    sum[k - 1] += e.x;
    ++count[k - 1];
  }
  const auto first = std::find_if(count.begin(), count.end(), [](std::size_t c) { return c > 0; });
  if (first == count.end()) throw EmptyStream("no events inside the sampling windows");

  std::vector<double> signal(windows);
  double last = sum[first - count.begin()] / static_cast<double>(*first);
  for (int i = 0; i < windows; ++i) {
    if (count[i] > 0) last = sum[i] / static_cast<double>(count[i]);
    signal[i] = last;
  }
  return signal;
}

FrequencyEstimate estimate_frequency(const EventStream& stream, double dt_f) {
  const auto signal = mean_x_signal(stream, dt_f);
  return dominant_frequency(signal, dt_f);
}

OrbitParams init_orbit(const PoseSet& poses, double f_init) {
  if (poses.size() < 3) throw PreconditionError("orbit initialisation needs at least 3 poses");
  if (!(f_init > 0) || !std::isfinite(f_init)) {
    throw ValidationError("initial frequency must be positive");
  }
  validate_poses(poses);

  std::vector<Eigen::Vector3d> centers;
  centers.reserve(poses.size());
  for (const auto& p : poses) centers.push_back(p.center());
  const auto circle = fit_orbit_circle(centers);

  OrbitParams o;
  o.r = circle.r;
  o.f = f_init;
  o.n = circle.n;
  o.c = circle.c;
  // u is the phase at t = 0; the first pose may be later.
  o.u = axis_rotation(o.n, -o.phase(poses.front().time)) * circle.u;
  o.R0 = Eigen::Matrix3d::Identity();
  o.normalize();

  std::vector<Eigen::Matrix3d> residuals;
  residuals.reserve(poses.size());
  for (const auto& p : poses) {
    const CameraPose modeled = orbit_pose(p.time, o);
    residuals.push_back(p.R * modeled.R.transpose());
  }
  o.R0 = chordal_mean(residuals);
  return o;
}

}  // namespace esfo
