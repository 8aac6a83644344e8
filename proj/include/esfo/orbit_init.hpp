#pragma once

#include <span>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "esfo/camera.hpp"
#include "esfo/events.hpp"
#include "esfo/orbit_model.hpp"

namespace esfo {

struct PlaneFit {
  Eigen::Vector3d n;         // unit normal, oriented so the input runs counter-clockwise
  Eigen::Vector3d centroid;  // mean of the input points
  bool total_least_squares = false;  // set when the z = ax + by + d form was unusable
};

// Least-squares plane z = a x + b y + d through time-ordered points, with a
// principal-direction fallback. Throws DegenerateGeometry for collinear or
// coincident input.
PlaneFit fit_plane(std::span<const Eigen::Vector3d> centers);

struct CircleFit {
  Eigen::Vector3d n;
  Eigen::Vector3d c;
  double r = 0.0;
  Eigen::Vector3d u;  // from the centre towards the first point, in plane
  double rms_residual = 0.0;
};

// Algebraic circle fit inside the plane (n, t_c).
CircleFit fit_circle(std::span<const Eigen::Vector3d> centers, const Eigen::Vector3d& n,
                     const Eigen::Vector3d& t_c);

// Plane fit followed by circle fit.
CircleFit fit_orbit_circle(std::span<const Eigen::Vector3d> centers);

// Distance of a point to the circle (n, c, r).
double distance_to_circle(const Eigen::Vector3d& p, const Eigen::Vector3d& n,
                          const Eigen::Vector3d& c, double r);

// RMS distance of the points to their own best-fit circle.
double circle_deviation(std::span<const Eigen::Vector3d> centers);

struct FrequencyEstimate {
  double f_init = 0.0;  // Hz; 0 when no dominant frequency was found
  bool has_peak = false;
  int peak_bin = 0;
  double bin_width = 0.0;  // Hz
  std::vector<std::pair<double, double>> spectrum;  // (frequency Hz, power)
};

// Dominant frequency of a uniformly sampled signal: mean removed, DFT, peak
// bin refined by parabolic interpolation on the magnitude.
FrequencyEstimate dominant_frequency(std::span<const double> samples, double sample_period);

// Dominant frequency of the per-window mean x coordinate of the stream,
// windows (f dt_f, (f+1) dt_f] for f = 1..floor(T / dt_f) - 1. Throws
// PreconditionError below 8 windows and EmptyStream when every window is
// empty.
FrequencyEstimate estimate_frequency(const EventStream& stream, double dt_f);

// Per-window mean x signal used by estimate_frequency (empty windows carry
// the previous value).
std::vector<double> mean_x_signal(const EventStream& stream, double dt_f);

// Orbit parameters from camera poses: circle fit on the centres, rate from
// f_init and R0 as the chordal mean of the per-pose residual rotations.
OrbitParams init_orbit(const PoseSet& poses, double f_init);

}  // namespace esfo
