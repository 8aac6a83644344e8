#include "esfo/simulator.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <random>

#include <Eigen/Dense>

#include "esfo/errors.hpp"
#include "esfo/geometry.hpp"
#include "esfo/reconstruction_io.hpp"

namespace esfo {

using nlohmann::json;

namespace {

constexpr double kDeg = std::numbers::pi / 180.0;

// Standard normal sample truncated at 3 sigma by rejection.
double truncated_normal(std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  for (;;) {
    const double z = normal(rng);
    if (std::abs(z) <= 3.0) return z;
  }
}

Eigen::Vector3d random_unit(std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  for (;;) {
    const Eigen::Vector3d v(normal(rng), normal(rng), normal(rng));
    const double len = v.norm();
    if (len > 1e-9) return v / len;
  }
}

Eigen::Vector3d random_orthogonal(const Eigen::Vector3d& n, std::mt19937_64& rng) {
  for (;;) {
    const Eigen::Vector3d v = random_unit(rng);
    const Eigen::Vector3d w = v - v.dot(n) * n;
    if (w.norm() > 1e-6) return w.normalized();
  }
}

int default_count(ObjectPreset preset) {
  switch (preset) {
    case ObjectPreset::cube_corners: return 8;
    case ObjectPreset::ring: return 12;
    case ObjectPreset::random_blob: return 50;
  }
  return 0;
}

bool visible_from(const CameraPose& pose, const Eigen::Vector3d& X, const Eigen::Vector3d& normal,
                  const CameraIntrinsics& K, Eigen::Vector2d* px) {
  const Eigen::Vector3d Xc = pose.apply(X);
  if (!(Xc.z() > kMinDepth)) return false;
  if ((X - pose.center()).dot(normal) >= 0.0) return false;
  const Eigen::Vector2d p = project(Xc, K);
  if (!K.in_image(p)) return false;
  if (px) *px = p;
  return true;
}

}  // namespace

ObjectPreset preset_from_string(const std::string& name) {
  if (name == "cube_corners") return ObjectPreset::cube_corners;
  if (name == "ring") return ObjectPreset::ring;
  if (name == "random_blob") return ObjectPreset::random_blob;
  throw ValidationError("unknown object preset: " + name);
}

std::string to_string(ObjectPreset preset) {
  switch (preset) {
    case ObjectPreset::cube_corners: return "cube_corners";
    case ObjectPreset::ring: return "ring";
    case ObjectPreset::random_blob: return "random_blob";
  }
  return "unknown";
}

double SimScene::object_diameter() const {
  double best = 0.0;
  for (std::size_t i = 0; i < landmarks.size(); ++i) {
    for (std::size_t j = i + 1; j < landmarks.size(); ++j) {
      best = std::max(best, (landmarks[i] - landmarks[j]).norm());
    }
  }
  return best;
}

void SimEventConfig::validate() const {
  if (!(events_per_landmark_per_second >= 0) || !(pixel_jitter >= 0) ||
      !(timestamp_jitter >= 0) || !(background_noise_rate >= 0)) {
    throw ValidationError("simulator rates and jitters must be non-negative");
  }
  if (!(time_step > 0)) throw ValidationError("simulator time step must be positive");
}

OrbitParams make_orbit(const ViewGeometry& view) {
  if (!(view.frequency > 0) || !(view.distance > 0)) {
    throw ValidationError("view frequency and distance must be positive");
  }
  const double alpha = view.elevation_deg * kDeg;
  if (!(std::sin(alpha) > 1e-6)) throw ValidationError("line of sight parallel to the spin axis");
  OrbitParams o;
  o.f = view.frequency;
  o.n = view.axis.normalized();
  // Keeps the look-at direction in the orbit frame on -x, away from y.
  o.u = rod(Eigen::Vector3d::UnitZ(), o.n) * Eigen::Vector3d::UnitX();
  o.r = view.distance * std::sin(alpha);
  o.c = view.distance * std::cos(alpha) * o.n;
  o.R0 = Eigen::Matrix3d::Identity();
  o.normalize();

  const Eigen::Vector3d center0 = orbit_center(0.0, o);
  const Eigen::Vector3d z = (-center0).normalized();
  const Eigen::Vector3d y = -(o.n - o.n.dot(z) * z).normalized();
  const Eigen::Vector3d x = y.cross(z);
  Eigen::Matrix3d wanted;
  wanted.row(0) = x.transpose();
  wanted.row(1) = y.transpose();
  wanted.row(2) = z.transpose();
  const Eigen::Matrix3d modeled = orbit_pose(0.0, o).R;
  o.R0 = project_to_so3(wanted * modeled.transpose());
  return o;
}

CameraIntrinsics default_intrinsics() {
  CameraIntrinsics K;
  K.fx = K.fy = 300.0;
  K.cx = 173.0;
  K.cy = 130.0;
  K.width = 346;
  K.height = 260;
  return K;
}

SimScene make_scene(ObjectPreset preset, const OrbitParams& orbit_gt, double duration,
                    std::uint64_t seed, int count, double object_radius,
                    const CameraIntrinsics& K, const Eigen::Vector3d& object_offset) {
  orbit_gt.validate();
  K.validate();
  if (!(duration > 0)) throw ValidationError("scene duration must be positive");
  if (!(object_radius > 0)) throw ValidationError("object radius must be positive");
  if (count <= 0) count = default_count(preset);

  SimScene s;
  s.orbit_gt = orbit_gt;
  s.intrinsics = K;
  s.duration = duration;
  s.seed = seed;
  s.preset = preset;
  s.object_radius = object_radius;
  s.object_offset = object_offset;
  std::mt19937_64 rng(seed);

  switch (preset) {
    case ObjectPreset::cube_corners:
      for (int i = 0; i < 8; ++i) {
        const Eigen::Vector3d corner((i & 1) ? 1.0 : -1.0, (i & 2) ? 1.0 : -1.0,
                                     (i & 4) ? 1.0 : -1.0);
        s.landmarks.push_back(object_radius * corner);
        s.normals.push_back(corner.normalized());
      }
      break;
    case ObjectPreset::ring: {
      // Circle about the spin axis through the object origin.
      Eigen::Vector3d b1 = orbit_gt.u;
      Eigen::Vector3d b2 = orbit_gt.v();
      for (int i = 0; i < count; ++i) {
        const double a = 2.0 * std::numbers::pi * i / count;
        const Eigen::Vector3d dir = std::cos(a) * b1 + std::sin(a) * b2;
        s.landmarks.push_back(object_radius * dir);
        s.normals.push_back(dir);
      }
      break;
    }
    case ObjectPreset::random_blob:
      for (int i = 0; i < count; ++i) {
        const Eigen::Vector3d dir = random_unit(rng);
        s.landmarks.push_back(object_radius * dir);
        s.normals.push_back(dir);
      }
      break;
  }
  for (auto& X : s.landmarks) X += object_offset;
  return s;
}

bool landmark_visible(const SimScene& scene, std::size_t p, double t) {
  const CameraPose pose = orbit_pose(t, scene.orbit_gt);
  return visible_from(pose, scene.landmarks.at(p), scene.normals.at(p), scene.intrinsics, nullptr);
}

GtObservations gt_observations(const SimScene& scene, double dt, double sigma_px) {
  if (!(dt > 0)) throw ValidationError("window duration must be positive");
  if (!(sigma_px >= 0)) throw ValidationError("pixel noise must be non-negative");
  GtObservations out;
  std::mt19937_64 rng(scene.seed ^ 0x9e3779b97f4a7c15ULL);
  const int windows = static_cast<int>(std::floor(scene.duration / dt)) - 1;
  for (int k = 1; k <= windows; ++k) {
    const CameraPose pose = orbit_pose(k * dt, scene.orbit_gt);
    for (std::size_t p = 0; p < scene.landmarks.size(); ++p) {
      Eigen::Vector2d px;
      if (!visible_from(pose, scene.landmarks[p], scene.normals[p], scene.intrinsics, &px)) {
        continue;
      }
      if (sigma_px > 0) {
        px.x() += sigma_px * truncated_normal(rng);
        px.y() += sigma_px * truncated_normal(rng);
      }
      out.observations.push_back({static_cast<int>(p), k, px});
      out.association.push_back(static_cast<int>(p));
    }
  }
  return out;
}

LabeledEvents gt_events_labeled(const SimScene& scene, const SimEventConfig& cfg) {
  cfg.validate();
  const CameraIntrinsics& K = scene.intrinsics;
  const SensorSize sensor{K.width > 0 ? K.width : 346, K.height > 0 ? K.height : 260};
  std::mt19937_64 rng(scene.seed ^ 0xd1b54a32d192ed03ULL);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  std::vector<Event> events;
  std::vector<int> labels;
  std::vector<int> next_polarity(scene.landmarks.size(), 1);
  const double h = cfg.time_step;
  const auto steps = static_cast<long>(std::ceil(scene.duration / h));
  std::poisson_distribution<int> per_step(cfg.events_per_landmark_per_second * h);

  for (long i = 0; i < steps && cfg.events_per_landmark_per_second > 0; ++i) {
    const double t0 = i * h;
    const double t1 = std::min(scene.duration, t0 + h);
    const CameraPose mid = orbit_pose(0.5 * (t0 + t1), scene.orbit_gt);
    for (std::size_t p = 0; p < scene.landmarks.size(); ++p) {
      if (!visible_from(mid, scene.landmarks[p], scene.normals[p], K, nullptr)) continue;
      const int n = per_step(rng);
      for (int e = 0; e < n; ++e) {
        const double t_true = t0 + (t1 - t0) * unit(rng);
        const Eigen::Vector3d Xc = orbit_pose(t_true, scene.orbit_gt).apply(scene.landmarks[p]);
        if (!(Xc.z() > kMinDepth)) continue;
        Eigen::Vector2d px = project(Xc, K);
        px.x() += cfg.pixel_jitter * truncated_normal(rng);
        px.y() += cfg.pixel_jitter * truncated_normal(rng);
        double t = t_true;
        if (cfg.timestamp_jitter > 0) t += cfg.timestamp_jitter * truncated_normal(rng);
        const int x = static_cast<int>(std::lround(px.x()));
        const int y = static_cast<int>(std::lround(px.y()));
        if (!sensor.contains(x, y) || t < 0 || t >= scene.duration) continue;
        events.push_back({t, x, y, next_polarity[p]});
        next_polarity[p] = -next_polarity[p];
        labels.push_back(static_cast<int>(p));
      }
    }
  }

  if (cfg.background_noise_rate > 0) {
    std::poisson_distribution<long> total(cfg.background_noise_rate * scene.duration);
    const long n = total(rng);
    std::uniform_int_distribution<int> ux(0, sensor.width - 1);
    std::uniform_int_distribution<int> uy(0, sensor.height - 1);
    int pol = 1;
    for (long i = 0; i < n; ++i) {
      const double t = scene.duration * unit(rng);
      const int x = ux(rng);
      const int y = uy(rng);
      events.push_back({t, x, y, pol});
      pol = -pol;
      labels.push_back(-1);
    }
  }

  std::vector<std::size_t> order(events.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return events[a].t < events[b].t; });
  LabeledEvents out;
  out.stream.sensor = sensor;
  out.stream.events.reserve(events.size());
  out.labels.reserve(events.size());
  for (std::size_t i : order) {
    out.stream.events.push_back(events[i]);
    out.labels.push_back(labels[i]);
  }
  return out;
}

EventStream gt_events(const SimScene& scene, const SimEventConfig& cfg) {
  return gt_events_labeled(scene, cfg).stream;
}

Similarity align_similarity(std::span<const Eigen::Vector3d> estimated,
                            std::span<const Eigen::Vector3d> gt,
                            const std::map<int, int>& correspondence) {
  const Eigen::Index n = static_cast<Eigen::Index>(correspondence.size());
  if (n < 3) throw DegenerateGeometry("alignment needs at least 3 correspondences");
  Eigen::Matrix3Xd X(3, n), Y(3, n);
  Eigen::Index i = 0;
  for (const auto& [e, g] : correspondence) {
    if (e < 0 || g < 0 || static_cast<std::size_t>(e) >= estimated.size() ||
        static_cast<std::size_t>(g) >= gt.size()) {
      throw PreconditionError("correspondence index out of range");
    }
    X.col(i) = estimated[e];
    Y.col(i) = gt[g];
    ++i;
  }
  const Eigen::Vector3d mx = X.rowwise().mean();
  const Eigen::Vector3d my = Y.rowwise().mean();
  const Eigen::Matrix3Xd Xc = X.colwise() - mx;
  const Eigen::Matrix3Xd Yc = Y.colwise() - my;

  Eigen::JacobiSVD<Eigen::Matrix3Xd> spread(Xc);
  const auto sv = spread.singularValues();
  if (!(sv(0) > 0) || sv(1) <= 1e-9 * sv(0)) {
    throw DegenerateGeometry("correspondences are collinear");
  }

  const Eigen::Matrix3d cov = Yc * Xc.transpose() / static_cast<double>(n);
  Eigen::JacobiSVD<Eigen::Matrix3d> svd(cov, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Eigen::Matrix3d S = Eigen::Matrix3d::Identity();
  if (svd.matrixU().determinant() * svd.matrixV().determinant() < 0) S(2, 2) = -1.0;
  const double var_x = Xc.squaredNorm() / static_cast<double>(n);

  Similarity sim;
  sim.rotation = svd.matrixU() * S * svd.matrixV().transpose();
  sim.scale = (svd.singularValues().asDiagonal() * S).trace() / var_x;
  sim.translation = my - sim.scale * sim.rotation * mx;
  double sq = 0.0;
  for (Eigen::Index j = 0; j < n; ++j) sq += (sim.apply(X.col(j)) - Y.col(j)).squaredNorm();
  sim.rmse = std::sqrt(sq / static_cast<double>(n));
  return sim;
}

OrbitParams perturb_orbit(const OrbitParams& orbit, double rel_frequency, double axis_deg,
                          double r0_deg, std::uint64_t seed) {
  std::mt19937_64 rng(seed ^ 0x94d049bb133111ebULL);
  OrbitParams o = orbit;
  const double sign = std::uniform_int_distribution<int>(0, 1)(rng) ? 1.0 : -1.0;
  o.f = orbit.f * (1.0 + sign * rel_frequency);
  const Eigen::Matrix3d tilt =
      axis_rotation(random_orthogonal(orbit.n, rng), axis_deg * kDeg);
  o.n = tilt * orbit.n;
  o.u = tilt * orbit.u;
  o.R0 = axis_rotation(random_unit(rng), r0_deg * kDeg) * orbit.R0;
  o.normalize();
  return o;
}

std::vector<Eigen::Vector3d> jitter_landmarks(std::span<const Eigen::Vector3d> landmarks,
                                              double distance, std::uint64_t seed) {
  std::mt19937_64 rng(seed ^ 0xbf58476d1ce4e5b9ULL);
  std::vector<Eigen::Vector3d> out;
  out.reserve(landmarks.size());
  for (const auto& X : landmarks) out.push_back(X + distance * random_unit(rng));
  return out;
}

SceneSpec scene_spec_from_json(const json& j) {
  try {
    SceneSpec s;
    s.preset = preset_from_string(j.value("preset", std::string("random_blob")));
    s.landmark_count = j.value("landmarks", 0);
    s.object_radius = j.value("object_radius", 1.0);
    if (j.contains("object_offset")) s.object_offset = vector3_from_json(j.at("object_offset"));
    s.view.frequency = j.value("frequency", s.view.frequency);
    s.view.distance = j.value("distance", s.view.distance);
    s.view.elevation_deg = j.value("elevation_deg", s.view.elevation_deg);
    if (j.contains("axis")) s.view.axis = vector3_from_json(j.at("axis"));
    s.duration = j.value("duration", s.duration);
    s.seed = j.value("seed", s.seed);
    s.dt = j.value("dt", s.dt);
    s.sigma_px = j.value("sigma_px", s.sigma_px);
    if (j.contains("events")) {
      const auto& e = j.at("events");
      s.events.events_per_landmark_per_second =
          e.value("rate", s.events.events_per_landmark_per_second);
      s.events.pixel_jitter = e.value("pixel_jitter", s.events.pixel_jitter);
      s.events.timestamp_jitter = e.value("timestamp_jitter", s.events.timestamp_jitter);
      s.events.background_noise_rate = e.value("background_rate", s.events.background_noise_rate);
      s.events.time_step = e.value("time_step", s.events.time_step);
    }
    if (j.contains("intrinsics")) s.intrinsics = intrinsics_from_json(j.at("intrinsics"));
    s.events.validate();
    return s;
  } catch (const json::exception& e) {
    throw ValidationError(std::string("scene spec: ") + e.what());
  }
}

json to_json(const SceneSpec& s) {
  return {{"preset", to_string(s.preset)},
          {"landmarks", s.landmark_count},
          {"object_radius", s.object_radius},
          {"object_offset", to_json(s.object_offset)},
          {"frequency", s.view.frequency},
          {"distance", s.view.distance},
          {"elevation_deg", s.view.elevation_deg},
          {"axis", to_json(s.view.axis)},
          {"duration", s.duration},
          {"seed", s.seed},
          {"dt", s.dt},
          {"sigma_px", s.sigma_px},
          {"events",
           {{"rate", s.events.events_per_landmark_per_second},
            {"pixel_jitter", s.events.pixel_jitter},
            {"timestamp_jitter", s.events.timestamp_jitter},
            {"background_rate", s.events.background_noise_rate},
            {"time_step", s.events.time_step}}},
          {"intrinsics", to_json(s.intrinsics)}};
}

SimScene make_scene(const SceneSpec& spec) {
  return make_scene(spec.preset, make_orbit(spec.view), spec.duration, spec.seed,
                    spec.landmark_count, spec.object_radius, spec.intrinsics, spec.object_offset);
}

json gt_sidecar(const SimScene& scene, const SceneSpec& spec, const GtObservations& obs,
                const std::vector<int>& event_labels) {
  json landmarks = json::array();
  for (std::size_t p = 0; p < scene.landmarks.size(); ++p) {
    landmarks.push_back({{"id", p}, {"xyz", to_json(scene.landmarks[p])},
                         {"normal", to_json(scene.normals[p])}});
  }
  json poses = json::array();
  const int windows = static_cast<int>(std::floor(scene.duration / spec.dt)) - 1;
  for (int k = 1; k <= windows; ++k) {
    json p = to_json(orbit_pose(k * spec.dt, scene.orbit_gt));
    p["window"] = k;
    poses.push_back(p);
  }
  json observations = json::array();
  for (std::size_t i = 0; i < obs.observations.size(); ++i) {
    const auto& o = obs.observations[i];
    observations.push_back({obs.association[i], o.window, o.px.x(), o.px.y()});
  }
  return {{"spec", to_json(spec)},
          {"orbit", to_json(scene.orbit_gt)},
          {"intrinsics", to_json(scene.intrinsics)},
          {"duration", scene.duration},
          {"seed", scene.seed},
          {"preset", to_string(scene.preset)},
          {"object_radius", scene.object_radius},
          {"object_offset", to_json(scene.object_offset)},
          {"dt", spec.dt},
          {"sigma_px", spec.sigma_px},
          {"landmarks", landmarks},
          {"poses", poses},
          {"observations", observations},
          {"event_labels", event_labels}};
}

GroundTruth ground_truth_from_json(const json& j) {
  try {
    GroundTruth gt;
    gt.scene.orbit_gt = orbit_from_json(j.at("orbit"));
    gt.scene.intrinsics = intrinsics_from_json(j.at("intrinsics"));
    gt.scene.duration = j.at("duration").get<double>();
    gt.scene.seed = j.value("seed", std::uint64_t{0});
    gt.scene.preset = preset_from_string(j.value("preset", std::string("random_blob")));
    gt.scene.object_radius = j.value("object_radius", 1.0);
    if (j.contains("object_offset")) {
      gt.scene.object_offset = vector3_from_json(j.at("object_offset"));
    }
    for (const auto& l : j.at("landmarks")) {
      gt.scene.landmarks.push_back(vector3_from_json(l.at("xyz")));
      gt.scene.normals.push_back(vector3_from_json(l.at("normal")));
    }
    gt.dt = j.at("dt").get<double>();
    gt.sigma_px = j.value("sigma_px", 0.0);
    for (const auto& p : j.at("poses")) gt.poses.push_back(pose_from_json(p));
    for (const auto& o : j.at("observations")) {
      const int p = o.at(0).get<int>();
      gt.observations.observations.push_back(
          {p, o.at(1).get<int>(), Eigen::Vector2d(o.at(2).get<double>(), o.at(3).get<double>())});
      gt.observations.association.push_back(p);
    }
    gt.event_labels = j.value("event_labels", std::vector<int>{});
    return gt;
  } catch (const json::exception& e) {
    throw ValidationError(std::string("ground truth sidecar: ") + e.what());
  }
}

GroundTruth load_ground_truth(const std::filesystem::path& path) {
  return ground_truth_from_json(read_json(path));
}

}  // namespace esfo
