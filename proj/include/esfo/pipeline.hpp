#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "esfo/camera.hpp"
#include "esfo/evaluation.hpp"
#include "esfo/events.hpp"
#include "esfo/optimizer.hpp"
#include "esfo/reconstruction.hpp"
#include "esfo/tracker.hpp"

namespace esfo {

enum class InitSource { colmap_model, simulator_gt, perturbed_gt };
enum class TrackSource { events, simulator_gt };
enum class IntrinsicsSource { config, colmap, ground_truth };

struct PipelineConfig {
  TrackerConfig tracker;
  double dt_f = 0.020;  // frequency sampling window, seconds
  std::filesystem::path events_path;
  EventFormat events_format = EventFormat::csv;
  std::filesystem::path ground_truth_path;  // simulator sidecar, optional
  std::filesystem::path colmap_dir;
  IntrinsicsSource intrinsics_source = IntrinsicsSource::ground_truth;
  CameraIntrinsics intrinsics;
  InitSource init = InitSource::perturbed_gt;
  TrackSource tracks = TrackSource::events;
  OptimizerOptions optimizer;
  std::filesystem::path output_dir = "esfo_out";
  std::uint64_t seed = 1;
  double perturb_frequency = 0.05;  // relative
  double perturb_axis_deg = 5.0;
  double perturb_r0_deg = 5.0;
  double landmark_jitter = 0.05;  // fraction of the object diameter

  PipelineConfig();
  // Throws ValidationError for inconsistent settings or missing inputs.
  void validate() const;
};

// Applies the keys present in `j` on top of `base`. Relative paths are
// resolved against `base_dir`.
PipelineConfig pipeline_config_from_json(const nlohmann::json& j, PipelineConfig base = {},
                                         const std::filesystem::path& base_dir = {});
nlohmann::json to_json(const PipelineConfig& config);

InitSource init_source_from_string(const std::string& s);
TrackSource track_source_from_string(const std::string& s);
IntrinsicsSource intrinsics_source_from_string(const std::string& s);
TrackerConfig tracker_config_from_json(const nlohmann::json& j, TrackerConfig base = {});
OptimizerOptions optimizer_options_from_json(const nlohmann::json& j, OptimizerOptions base = {});

struct MetricsReport {
  double f_fft = 0.0;
  bool fft_has_peak = false;
  double f_init = 0.0;
  double f_final = 0.0;
  std::optional<double> f_gt;
  std::optional<double> f_rel_error;
  std::optional<double> f_fft_rel_error;
  std::optional<double> axis_error_init_deg;
  std::optional<double> axis_error_deg;
  std::optional<double> structure_rmse;
  std::optional<double> structure_rmse_fraction;  // of the object diameter
  std::optional<double> screw_line_error_px;
  std::optional<double> pure_track_fraction;
  double rms_init = 0.0;
  double rms_final = 0.0;
  bool converged = false;
  int iterations = 0;
  std::size_t events = 0;
  std::size_t corners = 0;
  std::size_t filtered_corners = 0;
  std::size_t clusters = 0;
  std::size_t tracks = 0;
  std::size_t landmarks = 0;
  std::size_t observations = 0;
  std::vector<ThresholdSummary> track_summary;
};

nlohmann::json to_json(const MetricsReport& m);

struct PipelineResult {
  Reconstruction reconstruction;
  MetricsReport metrics;
  std::vector<FeatureTrack> tracks;
  std::vector<Observation> observations;
};

// Runs every stage and writes reconstruction.json, landmarks.ply,
// tracks.csv, metrics.json, spectrum.csv, residual_histogram.csv,
// screw_line.csv and status.json into the output directory. Stage failures
// raise StageError naming the stage; status.json then marks the output
// incomplete.
PipelineResult run_pipeline(const PipelineConfig& config);

// Observations with one landmark per track (landmark index = track order).
std::vector<Observation> observations_from_tracks(std::span<const FeatureTrack> tracks);
// One track per landmark from ground-truth observations.
std::vector<FeatureTrack> tracks_from_observations(std::span<const Observation> observations);

// Axis error in the camera frame at t = 0, degrees.
double camera_axis_error_deg(const OrbitParams& estimate, const OrbitParams& truth);

}  // namespace esfo
