#include <doctest.h>

#include <cmath>
#include <map>
#include <numbers>
#include <random>
#include <set>

#include "esfo/errors.hpp"
#include "esfo/geometry.hpp"
#include "esfo/optimizer.hpp"
#include "esfo/simulator.hpp"
#include "oracles.hpp"

using namespace esfo;

namespace {

constexpr double kPi = std::numbers::pi;

SimScene scene_of(ObjectPreset preset, std::uint64_t seed, double f = 1.5, double T = 4.0) {
  SceneSpec spec;
  spec.preset = preset;
  spec.seed = seed;
  spec.view.frequency = f;
  spec.duration = T;
  return make_scene(spec);
}

}  // namespace

TEST_CASE("cube preset") {
  SceneSpec spec;
  spec.preset = ObjectPreset::cube_corners;
  spec.object_radius = 0.7;
  const SimScene s = make_scene(spec);
  REQUIRE(s.landmarks.size() == 8);
  std::set<std::tuple<double, double, double>> corners;
  for (std::size_t i = 0; i < 8; ++i) {
    const auto& p = s.landmarks[i];
    CHECK(p.cwiseAbs().isApprox(Eigen::Vector3d::Constant(0.7)));
    CHECK((s.normals[i] - p.normalized()).norm() < 1e-15);
    corners.emplace(p.x(), p.y(), p.z());
  }
  CHECK(corners.size() == 8);
  CHECK(s.object_diameter() == doctest::Approx(2 * 0.7 * std::sqrt(3.0)));
}

TEST_CASE("ring preset spacing") {
  SceneSpec spec;
  spec.preset = ObjectPreset::ring;
  spec.landmark_count = 12;
  const SimScene s = make_scene(spec);
  REQUIRE(s.landmarks.size() == 12);
  for (std::size_t i = 0; i < 12; ++i) {
    const double a = angle_between(s.landmarks[i], s.landmarks[(i + 1) % 12]);
    CHECK(a * 180 / kPi == doctest::Approx(30.0));
    CHECK(std::abs(s.landmarks[i].dot(s.orbit_gt.n)) < 1e-12);
  }
}

TEST_CASE("blob landmarks lie on the sphere") {
  const SimScene s = scene_of(ObjectPreset::random_blob, 4);
  CHECK(s.landmarks.size() == 50);
  for (const auto& p : s.landmarks) CHECK(p.norm() == doctest::Approx(1.0));
}

TEST_CASE("same seed, same scene and data; other seed differs") {
  const SimScene a = scene_of(ObjectPreset::random_blob, 9);
  const SimScene b = scene_of(ObjectPreset::random_blob, 9);
  const SimScene c = scene_of(ObjectPreset::random_blob, 10);
  CHECK(a.landmarks == b.landmarks);
  CHECK(a.landmarks != c.landmarks);
  const auto oa = gt_observations(a, 0.03, 0.5);
  const auto ob = gt_observations(b, 0.03, 0.5);
  REQUIRE(oa.observations.size() == ob.observations.size());
  for (std::size_t i = 0; i < oa.observations.size(); ++i) {
    CHECK(oa.observations[i].px == ob.observations[i].px);
  }
  SimEventConfig cfg;
  cfg.background_noise_rate = 500;
  cfg.timestamp_jitter = 1e-4;
  CHECK(gt_events(a, cfg).events == gt_events(b, cfg).events);
}

TEST_CASE("noiseless observations are exact reprojections") {
  const SimScene s = scene_of(ObjectPreset::random_blob, 2);
  const auto gt = gt_observations(s, 0.03, 0.0);
  REQUIRE(!gt.observations.empty());
  for (std::size_t i = 0; i < gt.observations.size(); ++i) {
    const auto& o = gt.observations[i];
    CHECK(gt.association[i] == o.landmark);
    CHECK((o.px - reproject(s.landmarks[o.landmark], o.window * 0.03, s.orbit_gt, s.intrinsics))
              .norm() == 0.0);
  }
  const ResidualSet res = residuals(s.orbit_gt, s.landmarks, gt.observations, s.intrinsics, 0.03);
  CHECK(rms_of(res) == 0.0);
}

TEST_CASE("observation noise is truncated at three sigma") {
  const SimScene s = scene_of(ObjectPreset::random_blob, 3);
  const auto gt = gt_observations(s, 0.03, 0.5);
  double worst = 0.0, sum_sq = 0.0;
  for (const auto& o : gt.observations) {
    const Eigen::Vector2d e =
        o.px - reproject(s.landmarks[o.landmark], o.window * 0.03, s.orbit_gt, s.intrinsics);
    worst = std::max(worst, e.cwiseAbs().maxCoeff());
    sum_sq += e.squaredNorm();
  }
  CHECK(worst <= 1.5 + 1e-12);
  CHECK(std::sqrt(sum_sq / (2.0 * gt.observations.size())) == doctest::Approx(0.5).epsilon(0.1));
}

TEST_CASE("back-face visibility follows the closed-form phase interval") {
  // (X - C(t)) . N < 0 with C on the orbit reduces to
  // r A cos(phase - psi) > (X - c) . N.
  const SimScene s = scene_of(ObjectPreset::random_blob, 5);
  const auto gt = gt_observations(s, 0.03, 0.0);
  std::set<std::pair<int, int>> seen;
  for (const auto& o : gt.observations) seen.emplace(o.landmark, o.window);
  const OrbitParams& o = s.orbit_gt;
  const int windows = int(std::floor(s.duration / 0.03)) - 1;
  int checked = 0;
  int partially_visible = 0;
  for (std::size_t p = 0; p < s.landmarks.size(); ++p) {
    const Eigen::Vector3d& N = s.normals[p];
    const double a = o.r * o.u.dot(N);
    const double b = o.r * o.v().dot(N);
    const double rhs = (s.landmarks[p] - o.c).dot(N);
    int visible = 0;
    for (int k = 1; k <= windows; ++k) {
      const double phase = 2 * kPi * o.f * k * 0.03;
      const double lhs = a * std::cos(phase) + b * std::sin(phase);
      if (std::abs(lhs - rhs) < 1e-9) continue;  // tangent view, skip
      CHECK((lhs > rhs) == (seen.count({int(p), k}) == 1));
      visible += lhs > rhs;
      ++checked;
    }
    if (visible > 0 && visible < windows) ++partially_visible;
  }
  CHECK(checked > 1000);
  CHECK(partially_visible > 10);
}

TEST_CASE("visibility repeats every revolution") {
  // Period of 20 windows.
  const SimScene s = scene_of(ObjectPreset::random_blob, 6, 1.0 / 0.6, 4.0);
  const auto gt = gt_observations(s, 0.03, 0.0);
  std::set<std::pair<int, int>> seen;
  for (const auto& o : gt.observations) seen.emplace(o.landmark, o.window);
  for (std::size_t p = 0; p < s.landmarks.size(); ++p) {
    for (int k = 1; k + 20 <= 131; ++k) {
      CHECK(seen.count({int(p), k}) == seen.count({int(p), k + 20}));
    }
  }
}

TEST_CASE("landmarks projecting outside the sensor are not visible") {
  SimScene s = scene_of(ObjectPreset::cube_corners, 1);
  // Single landmark at the origin facing the camera at t = 0.
  const Eigen::Vector3d C = orbit_pose(0.0, s.orbit_gt).center();
  s.landmarks = {Eigen::Vector3d::Zero()};
  s.normals = {C.normalized()};
  CHECK(landmark_visible(s, 0, 0.0));
  s.intrinsics.cx = 400.0;
  s.intrinsics.cy = 0.0;
  CHECK_FALSE(landmark_visible(s, 0, 0.0));
  s.intrinsics = default_intrinsics();
  s.normals = {-C.normalized()};
  CHECK_FALSE(landmark_visible(s, 0, 0.0));
}

TEST_CASE("zero rates give an empty stream") {
  SimEventConfig cfg;
  cfg.events_per_landmark_per_second = 0;
  cfg.background_noise_rate = 0;
  CHECK(gt_events(scene_of(ObjectPreset::random_blob, 1), cfg).empty());
  cfg.events_per_landmark_per_second = -1;
  CHECK_THROWS_AS(cfg.validate(), ValidationError);
}

TEST_CASE("nearly static landmark emits around one pixel") {
  ViewGeometry view;
  view.frequency = 1e-6;
  SimScene s = make_scene(ObjectPreset::cube_corners, make_orbit(view), 0.1, 3);
  const Eigen::Vector3d C = orbit_pose(0.0, s.orbit_gt).center();
  s.landmarks = {Eigen::Vector3d::Zero()};
  s.normals = {C.normalized()};
  SimEventConfig cfg;
  cfg.events_per_landmark_per_second = 1000;
  cfg.pixel_jitter = 1.0;
  const LabeledEvents ev = gt_events_labeled(s, cfg);
  const Eigen::Vector2d px = reproject(Eigen::Vector3d::Zero(), 0.0, s.orbit_gt, s.intrinsics);
  // Poisson mean 100: a 4 sigma band.
  CHECK(ev.stream.size() >= 60);
  CHECK(ev.stream.size() <= 140);
  int positive = 0;
  for (std::size_t i = 0; i < ev.stream.size(); ++i) {
    const auto& e = ev.stream.events[i];
    CHECK(std::abs(e.x - px.x()) <= 3.0 + 0.5);
    CHECK(std::abs(e.y - px.y()) <= 3.0 + 0.5);
    CHECK(ev.labels[i] == 0);
    if (i > 0) CHECK(e.t >= ev.stream.events[i - 1].t);
    positive += e.p > 0;
  }
  CHECK(std::abs(2 * positive - int(ev.stream.size())) <= 1);
}

TEST_CASE("background events are labelled -1 and stay on the sensor") {
  SimEventConfig cfg;
  cfg.events_per_landmark_per_second = 0;
  cfg.background_noise_rate = 2000;
  const SimScene s = scene_of(ObjectPreset::cube_corners, 1, 1.5, 1.0);
  const LabeledEvents ev = gt_events_labeled(s, cfg);
  CHECK(ev.stream.size() > 1500);
  CHECK(ev.stream.size() < 2500);
  for (std::size_t i = 0; i < ev.stream.size(); ++i) {
    CHECK(ev.labels[i] == -1);
    CHECK(ev.stream.sensor.contains(ev.stream.events[i].x, ev.stream.events[i].y));
  }
}

TEST_CASE("similarity of identical clouds is the identity") {
  std::mt19937_64 rng(1);
  std::vector<Eigen::Vector3d> pts;
  std::map<int, int> corr;
  for (int i = 0; i < 20; ++i) {
    pts.push_back(oracle::random_vector(rng, 1.0));
    corr[i] = i;
  }
  const Similarity sim = align_similarity(pts, pts, corr);
  CHECK(sim.scale == doctest::Approx(1.0).epsilon(1e-12));
  CHECK((sim.rotation - Eigen::Matrix3d::Identity()).norm() < 1e-12);
  CHECK(sim.translation.norm() < 1e-12);
  CHECK(sim.rmse < 1e-12);
}

TEST_CASE("similarity recovers a known rotation, scale and shift") {
  std::mt19937_64 rng(2);
  const Eigen::Matrix3d R = so3_exp(Eigen::Vector3d(0.3, -1.2, 0.7));
  const Eigen::Vector3d t(1, 2, -3);
  std::vector<Eigen::Vector3d> est, gt;
  std::map<int, int> corr;
  for (int i = 0; i < 15; ++i) {
    est.push_back(oracle::random_vector(rng, 1.0));
    gt.push_back(2.0 * R * est.back() + t);
    corr[i] = i;
  }
  const Similarity sim = align_similarity(est, gt, corr);
  CHECK(std::abs(sim.scale - 2.0) < 1e-9);
  CHECK((sim.rotation - R).norm() < 1e-9);
  CHECK((sim.translation - t).norm() < 1e-9);
  CHECK(sim.rmse < 1e-9);
}

TEST_CASE("similarity residual under isotropic noise") {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> noise(0.0, 0.01);
  std::vector<Eigen::Vector3d> est, gt;
  std::map<int, int> corr;
  for (int i = 0; i < 500; ++i) {
    gt.push_back(oracle::random_vector(rng, 1.0));
    est.push_back(gt.back() + Eigen::Vector3d(noise(rng), noise(rng), noise(rng)));
    corr[i] = i;
  }
  const Similarity sim = align_similarity(est, gt, corr);
  CHECK(sim.rmse == doctest::Approx(0.01 * std::sqrt(3.0)).epsilon(0.3));
}

TEST_CASE("degenerate correspondences are rejected") {
  std::vector<Eigen::Vector3d> line = {{0, 0, 0}, {1, 0, 0}, {2, 0, 0}, {3, 0, 0}};
  std::map<int, int> corr = {{0, 0}, {1, 1}, {2, 2}, {3, 3}};
  CHECK_THROWS_AS(align_similarity(line, line, corr), DegenerateGeometry);
  std::map<int, int> two = {{0, 0}, {1, 1}};
  CHECK_THROWS_AS(align_similarity(line, line, two), DegenerateGeometry);
}

TEST_CASE("perturbation sizes") {
  const SimScene s = scene_of(ObjectPreset::random_blob, 1);
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const OrbitParams p = perturb_orbit(s.orbit_gt, 0.05, 5.0, 5.0, seed);
    CHECK(std::abs(std::abs(p.f / s.orbit_gt.f - 1.0) - 0.05) < 1e-12);
    CHECK(angle_between(p.n, s.orbit_gt.n) * 180 / kPi == doctest::Approx(5.0));
    CHECK(rotation_angle_between(p.R0, s.orbit_gt.R0) * 180 / kPi == doctest::Approx(5.0));
    CHECK(std::abs(p.n.dot(p.u)) < 1e-12);
    const auto j = jitter_landmarks(s.landmarks, 0.1, seed);
    for (std::size_t i = 0; i < j.size(); ++i) {
      CHECK((j[i] - s.landmarks[i]).norm() == doctest::Approx(0.1));
    }
  }
}

TEST_CASE("scene spec and sidecar round trip") {
  SceneSpec spec;
  spec.preset = ObjectPreset::ring;
  spec.landmark_count = 9;
  spec.view.frequency = 0.8;
  spec.object_offset = Eigen::Vector3d(0.1, 0.2, 0.3);
  spec.seed = 77;
  spec.events.background_noise_rate = 12;
  const SceneSpec back = scene_spec_from_json(to_json(spec));
  CHECK(back.preset == spec.preset);
  CHECK(back.landmark_count == 9);
  CHECK(back.view.frequency == 0.8);
  CHECK(back.object_offset == spec.object_offset);
  CHECK(back.seed == 77);
  CHECK(back.events.background_noise_rate == 12);

  const SimScene scene = make_scene(spec);
  const GtObservations obs = gt_observations(scene, spec.dt, spec.sigma_px);
  const GroundTruth gt = ground_truth_from_json(gt_sidecar(scene, spec, obs, {}));
  CHECK(gt.scene.landmarks == scene.landmarks);
  CHECK(gt.scene.orbit_gt.f == scene.orbit_gt.f);
  CHECK(gt.observations.observations.size() == obs.observations.size());
  REQUIRE(!gt.poses.empty());
  const CameraPose p = orbit_pose(gt.poses[0].time, scene.orbit_gt);
  CHECK((gt.poses[0].R - p.R).norm() < 1e-12);
  CHECK_THROWS_AS(preset_from_string("sphere"), ValidationError);
}
