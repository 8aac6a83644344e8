#pragma once

#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <json.hpp>

#include "esfo/camera.hpp"
#include "esfo/reconstruction.hpp"
#include "esfo/simulator.hpp"
#include "esfo/tracker.hpp"

namespace esfo {

struct ThresholdResult {
  double threshold = 0.0;
  bool valid = false;  // at least one sample survived
  int inliers = 0;
  double rmse = 0.0;         // Euclidean pixel error over surviving samples
  double feature_age = 0.0;  // seconds between first and last surviving sample
};

struct TrackEvaluation {
  int track_id = 0;
  bool valid = false;
  std::string reason;  // why the track was excluded
  Eigen::Vector3d point = Eigen::Vector3d::Zero();
  std::vector<ThresholdResult> thresholds;
};

// Triangulates each track from ground-truth poses (matched by window index,
// pose time = k * dt), reprojects and scores it per outlier threshold.
std::vector<TrackEvaluation> evaluate_tracks(std::span<const FeatureTrack> tracks,
                                             const PoseSet& gt_poses, const CameraIntrinsics& K,
                                             double dt,
                                             std::span<const double> thresholds = {});

struct ThresholdSummary {
  double threshold = 0.0;
  int tracks = 0;
  double mean_rmse = 0.0;
  double std_rmse = 0.0;
  double median_rmse = 0.0;
  double mean_feature_age = 0.0;
};

std::vector<ThresholdSummary> summarize_tracks(std::span<const TrackEvaluation> evaluations);

nlohmann::json to_json(std::span<const TrackEvaluation> evaluations);
nlohmann::json to_json(std::span<const ThresholdSummary> summaries);

struct Purity {
  int label = -1;       // majority ground-truth label
  double purity = 0.0;  // fraction of the track's events carrying it
};

Purity track_purity(const FeatureTrack& track, std::span<const int> event_labels);

// Fraction of tracks whose purity reaches min_purity.
double pure_track_fraction(std::span<const FeatureTrack> tracks, std::span<const int> event_labels,
                           double min_purity = 0.9);

struct ComparisonReport {
  double rms_a = 0.0;
  double rms_b = 0.0;
  double circle_deviation_a = 0.0;
  double circle_deviation_b = 0.0;
  std::optional<double> structure_rmse_a;
  std::optional<double> structure_rmse_b;
};

// Landmark ids of each solution map into gt.landmarks through `id_to_gt`.
ComparisonReport compare_reconstructions(const SfmSolution& a, const SfmSolution& b,
                                         std::span<const Observation> observations,
                                         const SimScene* gt = nullptr,
                                         const std::map<int, int>* id_to_gt = nullptr);

nlohmann::json to_json(const ComparisonReport& report);

// Structure error after similarity alignment, or empty when fewer than 3
// landmarks correspond.
std::optional<double> structure_rmse(const SfmSolution& solution, const SimScene& gt,
                                     const std::map<int, int>& id_to_gt);

// Angle between two spin axes expressed in a camera frame, minimum over the
// sign of the axis, degrees.
double axis_error_deg(const Eigen::Vector3d& a_cam, const Eigen::Vector3d& b_cam);

}  // namespace esfo
