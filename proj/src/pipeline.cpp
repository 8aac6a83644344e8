#include "esfo/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <map>

#include "esfo/colmap_io.hpp"
#include "esfo/errors.hpp"
#include "esfo/geometry.hpp"
#include "esfo/orbit_init.hpp"
#include "esfo/reconstruction_io.hpp"
#include "esfo/simulator.hpp"
#include "esfo/triangulation.hpp"

namespace esfo {

using nlohmann::json;

namespace {

template <typename F>
auto run_stage(const std::string& name, F&& body) {
  try {
    return body();
  } catch (const StageError&) {
    throw;
  } catch (const std::exception& e) {
    throw StageError(name, e.what());
  }
}

template <typename T>
void put_optional(json& j, const char* key, const std::optional<T>& v) {
  if (v) j[key] = *v;
}

std::filesystem::path resolve(const std::filesystem::path& p, const std::filesystem::path& base) {
  if (p.empty() || p.is_absolute() || base.empty()) return p;
  return base / p;
}

void write_spectrum(const std::filesystem::path& path, const FrequencyEstimate& est) {
  std::ofstream out(path);
  out.precision(17);
  out << "frequency_hz,power\n";
  for (const auto& [f, p] : est.spectrum) out << f << ',' << p << '\n';
}

void write_histogram(const std::filesystem::path& path, const ResidualSet& res) {
  constexpr double kBin = 0.25;
  constexpr int kBins = 40;
  std::vector<std::size_t> counts(kBins + 1, 0);
  for (std::size_t i = 0; i < res.values.size(); ++i) {
    const double s = res.values[i].norm();
    const int b = res.behind[i] ? kBins : std::min(kBins, static_cast<int>(s / kBin));
    ++counts[b];
  }
  std::ofstream out(path);
  out << "bin_low_px,bin_high_px,count\n";
  for (int b = 0; b < kBins; ++b) {
    out << b * kBin << ',' << (b + 1) * kBin << ',' << counts[b] << '\n';
  }
  out << kBins * kBin << ",inf," << counts[kBins] << '\n';
}

void write_screw_lines(const std::filesystem::path& path, const std::optional<ScrewLine>& est,
                       const std::optional<ScrewLine>& gt) {
  std::ofstream out(path);
  out.precision(17);
  out << "source,x0,y0,x1,y1\n";
  const auto row = [&](const char* name, const ScrewLine& l) {
    const auto [a, b] = l.border ? *l.border : std::make_pair(l.center_px, l.axis_px);
    out << name << ',' << a.x() << ',' << a.y() << ',' << b.x() << ',' << b.y() << '\n';
  };
  if (est) row("estimate", *est);
  if (gt) row("ground_truth", *gt);
}

// Majority landmark label per track id, when labels cover the stream.
std::map<int, int> track_labels(std::span<const FeatureTrack> tracks,
                                const std::vector<int>& labels) {
  std::map<int, int> out;
  for (const auto& t : tracks) {
    const Purity p = track_purity(t, labels);
    if (p.label >= 0 && p.purity > 0.5) out[t.track_id] = p.label;
  }
  return out;
}

}  // namespace

PipelineConfig::PipelineConfig() { optimizer.continuation = true; }

void PipelineConfig::validate() const {
  tracker.validate();
  optimizer.validate();
  if (!(dt_f > 0)) throw ValidationError("dt_f must be positive");
  if (events_path.empty()) throw ValidationError("no event file given");
  if (!std::filesystem::exists(events_path)) {
    throw ValidationError("event file does not exist: " + events_path.string());
  }
  const bool needs_gt = init != InitSource::colmap_model || tracks == TrackSource::simulator_gt ||
                        intrinsics_source == IntrinsicsSource::ground_truth;
  if (needs_gt && ground_truth_path.empty()) {
    throw ValidationError("this configuration needs a ground-truth sidecar");
  }
  if (!ground_truth_path.empty() && !std::filesystem::exists(ground_truth_path)) {
    throw ValidationError("ground-truth file does not exist: " + ground_truth_path.string());
  }
  const bool needs_colmap =
      init == InitSource::colmap_model || intrinsics_source == IntrinsicsSource::colmap;
  if (needs_colmap && !std::filesystem::exists(colmap_dir / "images.txt")) {
    throw ValidationError("COLMAP model not found in " + colmap_dir.string());
  }
  if (intrinsics_source == IntrinsicsSource::config) intrinsics.validate();
  if (!(perturb_frequency >= 0) || !(perturb_axis_deg >= 0) || !(perturb_r0_deg >= 0) ||
      !(landmark_jitter >= 0)) {
    throw ValidationError("perturbations must be non-negative");
  }
}

InitSource init_source_from_string(const std::string& s) {
  if (s == "colmap_model") return InitSource::colmap_model;
  if (s == "simulator_gt") return InitSource::simulator_gt;
  if (s == "perturbed_gt") return InitSource::perturbed_gt;
  throw ValidationError("unknown init source: " + s);
}

TrackSource track_source_from_string(const std::string& s) {
  if (s == "events") return TrackSource::events;
  if (s == "simulator_gt") return TrackSource::simulator_gt;
  throw ValidationError("unknown track source: " + s);
}

IntrinsicsSource intrinsics_source_from_string(const std::string& s) {
  if (s == "config") return IntrinsicsSource::config;
  if (s == "colmap") return IntrinsicsSource::colmap;
  if (s == "ground_truth") return IntrinsicsSource::ground_truth;
  throw ValidationError("unknown intrinsics source: " + s);
}

namespace {

const char* name_of(InitSource s) {
  switch (s) {
    case InitSource::colmap_model: return "colmap_model";
    case InitSource::simulator_gt: return "simulator_gt";
    case InitSource::perturbed_gt: return "perturbed_gt";
  }
  return "";
}

const char* name_of(TrackSource s) {
  return s == TrackSource::events ? "events" : "simulator_gt";
}

const char* name_of(IntrinsicsSource s) {
  switch (s) {
    case IntrinsicsSource::config: return "config";
    case IntrinsicsSource::colmap: return "colmap";
    case IntrinsicsSource::ground_truth: return "ground_truth";
  }
  return "";
}

}  // namespace

TrackerConfig tracker_config_from_json(const json& j, TrackerConfig c) {
  c.lambda = j.value("lambda", c.lambda);
  c.min_pts = j.value("min_pts", c.min_pts);
  c.epsilon = j.value("epsilon", c.epsilon);
  c.phi = j.value("phi", c.phi);
  c.n_sigma = j.value("n_sigma", c.n_sigma);
  c.dt = j.value("dt", c.dt);
  c.time_scale = j.value("time_scale", c.time_scale);
  return c;
}

OptimizerOptions optimizer_options_from_json(const json& j, OptimizerOptions o) {
  o.huber_delta = j.value("huber_delta", o.huber_delta);
  o.max_iters = j.value("max_iters", o.max_iters);
  o.rel_cost_tol = j.value("rel_cost_tol", o.rel_cost_tol);
  o.gradient_tol = j.value("gradient_tol", o.gradient_tol);
  o.initial_lambda = j.value("initial_lambda", o.initial_lambda);
  o.residual_cap = j.value("residual_cap", o.residual_cap);
  o.continuation = j.value("continuation", o.continuation);
  o.horizons = j.value("horizons", o.horizons);
  return o;
}

PipelineConfig pipeline_config_from_json(const json& j, PipelineConfig c,
                                         const std::filesystem::path& base_dir) {
  try {
    if (j.contains("tracker")) c.tracker = tracker_config_from_json(j.at("tracker"), c.tracker);
    if (j.contains("optimizer")) {
      c.optimizer = optimizer_options_from_json(j.at("optimizer"), c.optimizer);
    }
    c.dt_f = j.value("dt_f", c.dt_f);
    if (j.contains("events")) c.events_path = resolve(j.at("events").get<std::string>(), base_dir);
    if (j.contains("format")) {
      const auto f = j.at("format").get<std::string>();
      if (f == "csv") c.events_format = EventFormat::csv;
      else if (f == "text") c.events_format = EventFormat::text;
      else throw ValidationError("unknown event format: " + f);
    }
    if (j.contains("ground_truth")) {
      c.ground_truth_path = resolve(j.at("ground_truth").get<std::string>(), base_dir);
    }
    if (j.contains("colmap")) c.colmap_dir = resolve(j.at("colmap").get<std::string>(), base_dir);
    if (j.contains("output")) c.output_dir = resolve(j.at("output").get<std::string>(), base_dir);
    if (j.contains("init")) c.init = init_source_from_string(j.at("init").get<std::string>());
    if (j.contains("tracks")) {
      c.tracks = track_source_from_string(j.at("tracks").get<std::string>());
    }
    if (j.contains("intrinsics_source")) {
      c.intrinsics_source =
          intrinsics_source_from_string(j.at("intrinsics_source").get<std::string>());
    }
    if (j.contains("intrinsics")) c.intrinsics = intrinsics_from_json(j.at("intrinsics"));
    c.seed = j.value("seed", c.seed);
    if (j.contains("perturbation")) {
      const auto& p = j.at("perturbation");
      c.perturb_frequency = p.value("frequency", c.perturb_frequency);
      c.perturb_axis_deg = p.value("axis_deg", c.perturb_axis_deg);
      c.perturb_r0_deg = p.value("r0_deg", c.perturb_r0_deg);
      c.landmark_jitter = p.value("landmark_jitter", c.landmark_jitter);
    }
    return c;
  } catch (const json::exception& e) {
    throw ValidationError(std::string("pipeline config: ") + e.what());
  }
}

json to_json(const PipelineConfig& c) {
  return {{"tracker",
           {{"lambda", c.tracker.lambda},
            {"min_pts", c.tracker.min_pts},
            {"epsilon", c.tracker.epsilon},
            {"phi", c.tracker.phi},
            {"n_sigma", c.tracker.n_sigma},
            {"dt", c.tracker.dt},
            {"time_scale", c.tracker.time_scale}}},
          {"optimizer",
           {{"huber_delta", c.optimizer.huber_delta},
            {"max_iters", c.optimizer.max_iters},
            {"rel_cost_tol", c.optimizer.rel_cost_tol},
            {"gradient_tol", c.optimizer.gradient_tol},
            {"initial_lambda", c.optimizer.initial_lambda},
            {"residual_cap", c.optimizer.residual_cap},
            {"continuation", c.optimizer.continuation},
            {"horizons", c.optimizer.horizons}}},
          {"dt_f", c.dt_f},
          {"events", c.events_path.string()},
          {"format", c.events_format == EventFormat::csv ? "csv" : "text"},
          {"ground_truth", c.ground_truth_path.string()},
          {"colmap", c.colmap_dir.string()},
          {"output", c.output_dir.string()},
          {"init", name_of(c.init)},
          {"tracks", name_of(c.tracks)},
          {"intrinsics_source", name_of(c.intrinsics_source)},
          {"intrinsics", to_json(c.intrinsics)},
          {"seed", c.seed},
          {"perturbation",
           {{"frequency", c.perturb_frequency},
            {"axis_deg", c.perturb_axis_deg},
            {"r0_deg", c.perturb_r0_deg},
            {"landmark_jitter", c.landmark_jitter}}}};
}

json to_json(const MetricsReport& m) {
  json freq = {{"fft", m.f_fft}, {"fft_has_peak", m.fft_has_peak}, {"init", m.f_init},
               {"final", m.f_final}};
  put_optional(freq, "gt", m.f_gt);
  put_optional(freq, "relative_error", m.f_rel_error);
  put_optional(freq, "fft_relative_error", m.f_fft_rel_error);
  json j = {{"frequency", freq},
            {"rms_reprojection_init_px", m.rms_init},
            {"rms_reprojection_px", m.rms_final},
            {"converged", m.converged},
            {"iterations", m.iterations},
            {"counts",
             {{"events", m.events},
              {"corners", m.corners},
              {"filtered_corners", m.filtered_corners},
              {"clusters", m.clusters},
              {"tracks", m.tracks},
              {"landmarks", m.landmarks},
              {"observations", m.observations}}}};
  put_optional(j, "axis_error_init_deg", m.axis_error_init_deg);
  put_optional(j, "axis_error_deg", m.axis_error_deg);
  put_optional(j, "structure_rmse", m.structure_rmse);
  put_optional(j, "structure_rmse_fraction_of_diameter", m.structure_rmse_fraction);
  put_optional(j, "screw_line_error_px", m.screw_line_error_px);
  put_optional(j, "pure_track_fraction", m.pure_track_fraction);
  if (!m.track_summary.empty()) j["track_evaluation"] = to_json(m.track_summary);
  return j;
}

std::vector<Observation> observations_from_tracks(std::span<const FeatureTrack> tracks) {
  std::vector<Observation> obs;
  for (std::size_t i = 0; i < tracks.size(); ++i) {
    for (const auto& s : tracks[i].samples) {
      obs.push_back({static_cast<int>(i), s.k, Eigen::Vector2d(s.u, s.v)});
    }
  }
  return obs;
}

std::vector<FeatureTrack> tracks_from_observations(std::span<const Observation> observations) {
  std::map<int, FeatureTrack> by_landmark;
  for (const auto& o : observations) {
    auto& t = by_landmark[o.landmark];
    t.track_id = o.landmark;
    t.source_cluster = o.landmark;
    t.samples.push_back({o.window, o.px.x(), o.px.y(), 1});
  }
  std::vector<FeatureTrack> out;
  for (auto& [id, t] : by_landmark) {
    std::sort(t.samples.begin(), t.samples.end(),
              [](const TrackSample& a, const TrackSample& b) { return a.k < b.k; });
    out.push_back(std::move(t));
  }
  return out;
}

double camera_axis_error_deg(const OrbitParams& estimate, const OrbitParams& truth) {
  const Eigen::Vector3d a = orbit_pose(0.0, estimate).R * estimate.n;
  const Eigen::Vector3d b = orbit_pose(0.0, truth).R * truth.n;
  return axis_error_deg(a, b);
}

PipelineResult run_pipeline(const PipelineConfig& config) {
  config.validate();
  std::filesystem::create_directories(config.output_dir);
  const auto status_path = config.output_dir / "status.json";
  const auto started = std::chrono::steady_clock::now();
  write_json(status_path, {{"complete", false}, {"stage", "start"}});

  PipelineResult result;
  MetricsReport& m = result.metrics;
  try {
    std::optional<GroundTruth> gt;
    if (!config.ground_truth_path.empty()) {
      gt = run_stage("load_ground_truth", [&] { return load_ground_truth(config.ground_truth_path); });
    }

    CameraIntrinsics K = config.intrinsics;
    std::optional<ColmapModel> colmap;
    if (config.init == InitSource::colmap_model ||
        config.intrinsics_source == IntrinsicsSource::colmap) {
      colmap = run_stage("load_colmap", [&] { return read_colmap_text(config.colmap_dir); });
    }
    if (config.intrinsics_source == IntrinsicsSource::ground_truth) K = gt->scene.intrinsics;
    if (config.intrinsics_source == IntrinsicsSource::colmap) {
      if (colmap->cameras.empty()) throw StageError("load_colmap", "model has no cameras");
      K = colmap->cameras.begin()->second;
    }
    SensorSize sensor;
    if (K.width > 0 && K.height > 0) sensor = {K.width, K.height};

    const EventStream stream = run_stage("load_events", [&] {
      EventStream s = load_events(config.events_path, config.events_format, sensor);
      if (s.empty()) throw EmptyStream("event file holds no events");
      return s;
    });
    m.events = stream.size();

    // Feature tracks and the observations derived from them.
    std::vector<int> landmark_ids;
    if (config.tracks == TrackSource::events) {
      const TrackerResult tr = run_stage("track", [&] { return run_tracker(stream, config.tracker); });
      m.corners = tr.corner_count;
      m.filtered_corners = tr.filtered_count;
      m.clusters = tr.merged_count;
      result.tracks = tr.tracks;
      result.observations = observations_from_tracks(result.tracks);
      for (const auto& t : result.tracks) landmark_ids.push_back(t.track_id);
    } else {
      result.observations = gt->observations.observations;
      result.tracks = tracks_from_observations(result.observations);
      for (std::size_t p = 0; p < gt->scene.landmarks.size(); ++p) {
        landmark_ids.push_back(static_cast<int>(p));
      }
    }
    m.tracks = result.tracks.size();
    if (result.tracks.empty()) throw StageError("track", "no feature tracks");

    const FrequencyEstimate fft =
        run_stage("estimate_frequency", [&] { return estimate_frequency(stream, config.dt_f); });
    m.f_fft = fft.f_init;
    m.fft_has_peak = fft.has_peak;

    Reconstruction init;
    init.intrinsics = K;
    init.dt = config.tracker.dt;
    init.orbit = run_stage("init_orbit", [&] {
      switch (config.init) {
        case InitSource::colmap_model:
          if (!fft.has_peak) throw InvalidInitialization("no dominant frequency in the stream");
          return init_orbit(colmap_poses(*colmap, config.tracker.dt), fft.f_init);
        case InitSource::simulator_gt:
          return gt->scene.orbit_gt;
        case InitSource::perturbed_gt:
          return perturb_orbit(gt->scene.orbit_gt, config.perturb_frequency,
                               config.perturb_axis_deg, config.perturb_r0_deg, config.seed);
      }
      throw ValidationError("unknown init source");
    });
    m.f_init = init.orbit.f;

    run_stage("triangulate", [&] {
      const bool gt_structure =
          config.tracks == TrackSource::simulator_gt && config.init != InitSource::colmap_model;
      std::vector<std::optional<Eigen::Vector3d>> points;
      if (gt_structure) {
        const double jitter = config.init == InitSource::perturbed_gt
                                  ? config.landmark_jitter * gt->scene.object_diameter()
                                  : 0.0;
        const auto pts = jitter > 0 ? jitter_landmarks(gt->scene.landmarks, jitter, config.seed)
                                    : gt->scene.landmarks;
        for (const auto& p : pts) points.emplace_back(p);
      } else {
        init.landmarks.assign(landmark_ids.size(), Eigen::Vector3d::Zero());
        points = triangulate_landmarks(init, result.observations);
      }
      // Keep landmarks that triangulated and still have two observations.
      std::vector<int> count(points.size(), 0);
      for (const auto& o : result.observations) {
        if (points[o.landmark]) ++count[o.landmark];
      }
      std::vector<int> remap(points.size(), -1);
      init.landmarks.clear();
      init.landmark_ids.clear();
      for (std::size_t p = 0; p < points.size(); ++p) {
        if (!points[p] || count[p] < 2) continue;
        remap[p] = static_cast<int>(init.landmarks.size());
        init.landmarks.push_back(*points[p]);
        init.landmark_ids.push_back(landmark_ids[p]);
      }
      std::vector<Observation> kept;
      for (auto o : result.observations) {
        if (remap[o.landmark] < 0) continue;
        o.landmark = remap[o.landmark];
        kept.push_back(o);
      }
      result.observations = std::move(kept);
      if (init.landmarks.empty()) throw DegenerateGeometry("no landmark could be triangulated");
      init.windows = observed_windows(result.observations);
      return 0;
    });
    m.landmarks = init.landmarks.size();
    m.observations = result.observations.size();

    result.reconstruction = run_stage(
        "optimize", [&] { return optimize(init, result.observations, config.optimizer); });
    const Reconstruction& rec = result.reconstruction;
    m.f_final = rec.orbit.f;
    m.rms_init = rec.initial_rms;
    m.rms_final = rec.rms_reprojection;
    m.converged = rec.converged;
    m.iterations = rec.iterations;

    std::optional<ScrewLine> line_est, line_gt;
    try {
      line_est = screw_line(rec.orbit, K);
    } catch (const Error&) {
    }

    run_stage("evaluate", [&] {
      if (!gt) return 0;
      const OrbitParams& truth = gt->scene.orbit_gt;
      m.f_gt = truth.f;
      m.f_rel_error = std::abs(rec.orbit.f - truth.f) / truth.f;
      m.f_fft_rel_error = std::abs(fft.f_init - truth.f) / truth.f;
      m.axis_error_init_deg = camera_axis_error_deg(init.orbit, truth);
      m.axis_error_deg = camera_axis_error_deg(rec.orbit, truth);

      std::map<int, int> id_to_gt;
      if (config.tracks == TrackSource::simulator_gt) {
        for (int id : rec.landmark_ids) id_to_gt[id] = id;
      } else if (gt->event_labels.size() == stream.size()) {
        id_to_gt = track_labels(result.tracks, gt->event_labels);
        m.pure_track_fraction = pure_track_fraction(result.tracks, gt->event_labels);
      }
      m.structure_rmse = structure_rmse(to_solution(rec), gt->scene, id_to_gt);
      if (m.structure_rmse) m.structure_rmse_fraction = *m.structure_rmse / gt->scene.object_diameter();

      try {
        line_gt = screw_line(truth, gt->scene.intrinsics);
        if (line_est) {
          m.screw_line_error_px =
              std::max(line_est->distance_to(line_gt->center_px), line_est->distance_to(line_gt->axis_px));
        }
      } catch (const Error&) {
      }

      const auto evals = evaluate_tracks(result.tracks, gt->poses, gt->scene.intrinsics, gt->dt);
      m.track_summary = summarize_tracks(evals);
      return 0;
    });

    run_stage("write_outputs", [&] {
      const auto& out = config.output_dir;
      save_reconstruction(out / "reconstruction.json", rec);
      save_ply(out / "landmarks.ply", rec.landmarks);
      save_tracks_csv(out / "tracks.csv", result.tracks, config.tracker.dt);
      write_json(out / "metrics.json", to_json(m));
      write_spectrum(out / "spectrum.csv", fft);
      write_histogram(out / "residual_histogram.csv",
                      residuals(rec.orbit, rec.landmarks, result.observations, rec.intrinsics,
                                rec.dt, config.optimizer.residual_cap));
      write_screw_lines(out / "screw_line.csv", line_est, line_gt);
      return 0;
    });
  } catch (const StageError& e) {
    write_json(status_path, {{"complete", false}, {"failed_stage", e.stage()}, {"error", e.what()}});
    throw;
  }
  const double seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  write_json(status_path, {{"complete", true}, {"runtime_s", seconds}});
  return result;
}

}  // namespace esfo
