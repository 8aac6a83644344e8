#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <json.hpp>

#include "esfo/camera.hpp"
#include "esfo/events.hpp"
#include "esfo/orbit_model.hpp"
#include "esfo/reconstruction.hpp"

namespace esfo {

enum class ObjectPreset { cube_corners, ring, random_blob };

ObjectPreset preset_from_string(const std::string& name);
std::string to_string(ObjectPreset preset);

struct SimScene {
  OrbitParams orbit_gt;
  std::vector<Eigen::Vector3d> landmarks;
  std::vector<Eigen::Vector3d> normals;  // outward, unit
  CameraIntrinsics intrinsics;
  double duration = 4.0;  // seconds
  std::uint64_t seed = 0;
  ObjectPreset preset = ObjectPreset::random_blob;
  double object_radius = 1.0;
  Eigen::Vector3d object_offset = Eigen::Vector3d::Zero();  // landmark shift off the spin axis

  // Largest pairwise landmark distance.
  double object_diameter() const;
};

struct SimEventConfig {
  double events_per_landmark_per_second = 4000.0;
  double pixel_jitter = 1.0;        // sigma, pixels
  double timestamp_jitter = 0.0;    // sigma, seconds
  double background_noise_rate = 0.0;  // events/s over the whole sensor
  double time_step = 5e-4;          // visibility/projection sampling step, seconds

  void validate() const;
};

// Camera geometry for a spinning object at the origin seen by a static
// camera: distance from the object, angle between the line of sight and
// the spin axis, spin axis, rate.
struct ViewGeometry {
  double frequency = 1.5;
  double distance = 6.0;
  double elevation_deg = 60.0;
  Eigen::Vector3d axis = Eigen::Vector3d::UnitZ();
};

// Orbit parameters of the equivalent camera orbit, with R0 aiming the
// optical axis at the object origin and the spin axis pointing up in the
// image.
OrbitParams make_orbit(const ViewGeometry& view);

// Default sensor-sized pinhole camera (346 x 260, f = 300 px).
CameraIntrinsics default_intrinsics();

// Landmark counts default to 8 (cube), 12 (ring), 50 (blob).
SimScene make_scene(ObjectPreset preset, const OrbitParams& orbit_gt, double duration,
                    std::uint64_t seed, int count = 0, double object_radius = 1.0,
                    const CameraIntrinsics& K = default_intrinsics(),
                    const Eigen::Vector3d& object_offset = Eigen::Vector3d::Zero());

// Back-face and frustum test for landmark p at time t.
bool landmark_visible(const SimScene& scene, std::size_t p, double t);

struct GtObservations {
  std::vector<Observation> observations;  // landmark field indexes scene.landmarks
  std::vector<int> association;           // observation -> landmark id
};

// Noisy projections at t_k = k * dt for k = 1..floor(T / dt) - 1. The
// Gaussian noise is truncated at 3 sigma.
GtObservations gt_observations(const SimScene& scene, double dt, double sigma_px);

struct LabeledEvents {
  EventStream stream;
  std::vector<int> labels;  // landmark id per event, -1 for background
};

LabeledEvents gt_events_labeled(const SimScene& scene, const SimEventConfig& cfg);
EventStream gt_events(const SimScene& scene, const SimEventConfig& cfg);

struct Similarity {
  double scale = 1.0;
  Eigen::Matrix3d rotation = Eigen::Matrix3d::Identity();
  Eigen::Vector3d translation = Eigen::Vector3d::Zero();
  double rmse = 0.0;

  Eigen::Vector3d apply(const Eigen::Vector3d& x) const {
    return scale * rotation * x + translation;
  }
};

// Least-squares similarity taking estimated[i] onto gt[correspondence[i]]
// for every entry of the map (estimated index -> gt index).
Similarity align_similarity(std::span<const Eigen::Vector3d> estimated,
                            std::span<const Eigen::Vector3d> gt,
                            const std::map<int, int>& correspondence);

// Orbit with multiplicative frequency error, axis and R0 tilted by the
// given angles about random directions; used to start the optimizer away
// from ground truth.
OrbitParams perturb_orbit(const OrbitParams& orbit, double rel_frequency, double axis_deg,
                          double r0_deg, std::uint64_t seed);

// Landmarks displaced by uniform random directions of length
// fraction * diameter.
std::vector<Eigen::Vector3d> jitter_landmarks(std::span<const Eigen::Vector3d> landmarks,
                                              double distance, std::uint64_t seed);

// Scene description file (orbit, preset, T, seed, noise) and the GT sidecar.
struct SceneSpec {
  ObjectPreset preset = ObjectPreset::random_blob;
  ViewGeometry view;
  int landmark_count = 0;
  double object_radius = 1.0;
  Eigen::Vector3d object_offset = Eigen::Vector3d::Zero();
  double duration = 4.0;
  std::uint64_t seed = 1;
  double dt = 0.030;
  double sigma_px = 0.5;  // noise of the ground-truth feature observations
  SimEventConfig events;
  CameraIntrinsics intrinsics = default_intrinsics();
};

SceneSpec scene_spec_from_json(const nlohmann::json& j);
nlohmann::json to_json(const SceneSpec& spec);
SimScene make_scene(const SceneSpec& spec);

nlohmann::json gt_sidecar(const SimScene& scene, const SceneSpec& spec,
                          const GtObservations& obs, const std::vector<int>& event_labels);

// Ground truth read back from a sidecar file.
struct GroundTruth {
  SimScene scene;
  double dt = 0.030;
  double sigma_px = 0.0;
  PoseSet poses;
  GtObservations observations;
  std::vector<int> event_labels;
};

GroundTruth ground_truth_from_json(const nlohmann::json& j);
GroundTruth load_ground_truth(const std::filesystem::path& path);

}  // namespace esfo
