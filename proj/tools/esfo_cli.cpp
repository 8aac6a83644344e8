#include <cstdint>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "esfo/colmap_io.hpp"
#include "esfo/errors.hpp"
#include "esfo/evaluation.hpp"
#include "esfo/optimizer.hpp"
#include "esfo/orbit_init.hpp"
#include "esfo/pipeline.hpp"
#include "esfo/reconstruction_io.hpp"
#include "esfo/simulator.hpp"
#include "esfo/tracker.hpp"
#include "esfo/triangulation.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kExitValidation = 2;
constexpr int kExitStage = 3;

struct SimulateArgs {
  std::string scene;
  std::string out = "sim";
  std::optional<std::string> preset;
  std::optional<int> landmarks;
  std::optional<double> frequency, duration, sigma_px, rate, pixel_jitter, background, dt;
  std::optional<std::uint64_t> seed;
};

struct TrackerArgs {
  esfo::TrackerConfig cfg;
  int width = 346;
  int height = 260;

  void add(CLI::App* app) {
    app->add_option("--lambda", cfg.lambda, "density radius (scaled units)");
    app->add_option("--min-pts", cfg.min_pts, "minimum cluster size");
    app->add_option("--epsilon", cfg.epsilon, "cluster selection epsilon");
    app->add_option("--phi", cfg.phi, "head/tail merge radius");
    app->add_option("--n-sigma", cfg.n_sigma, "events per head/tail descriptor");
    app->add_option("--dt", cfg.dt, "track window, seconds");
    app->add_option("--time-scale", cfg.time_scale, "scaled units per second");
    app->add_option("--width", width, "sensor width");
    app->add_option("--height", height, "sensor height");
  }
};

void print_json(const json& j) { std::cout << j.dump(2) << '\n'; }

int cmd_simulate(const SimulateArgs& a) {
  esfo::SceneSpec spec;
  if (!a.scene.empty()) spec = esfo::scene_spec_from_json(esfo::read_json(a.scene));
  if (a.preset) spec.preset = esfo::preset_from_string(*a.preset);
  if (a.landmarks) spec.landmark_count = *a.landmarks;
  if (a.frequency) spec.view.frequency = *a.frequency;
  if (a.duration) spec.duration = *a.duration;
  if (a.sigma_px) spec.sigma_px = *a.sigma_px;
  if (a.rate) spec.events.events_per_landmark_per_second = *a.rate;
  if (a.pixel_jitter) spec.events.pixel_jitter = *a.pixel_jitter;
  if (a.background) spec.events.background_noise_rate = *a.background;
  if (a.dt) spec.dt = *a.dt;
  if (a.seed) spec.seed = *a.seed;

  const esfo::SimScene scene = esfo::make_scene(spec);
  const auto obs = esfo::gt_observations(scene, spec.dt, spec.sigma_px);
  const auto events = esfo::gt_events_labeled(scene, spec.events);
  fs::create_directories(a.out);
  esfo::save_events(fs::path(a.out) / "events.csv", events.stream);
  esfo::write_json(fs::path(a.out) / "scene.json", esfo::to_json(spec));
  esfo::write_json(fs::path(a.out) / "gt.json", esfo::gt_sidecar(scene, spec, obs, events.labels));
  print_json({{"events", events.stream.size()},
              {"landmarks", scene.landmarks.size()},
              {"observations", obs.observations.size()},
              {"out", a.out}});
  return 0;
}

int cmd_track(const std::string& events_path, const std::string& out, TrackerArgs& t) {
  const auto stream = esfo::load_events(events_path, esfo::EventFormat::csv, {t.width, t.height});
  const auto result = esfo::run_tracker(stream, t.cfg);
  esfo::save_tracks_csv(out, result.tracks, t.cfg.dt);
  print_json({{"events", stream.size()},
              {"corners", result.corner_count},
              {"filtered", result.filtered_count},
              {"clusters", result.cluster_count},
              {"merged", result.merged_count},
              {"tracks", result.tracks.size()}});
  return 0;
}

struct InitArgs {
  std::string events, tracks, gt, colmap, out = "init.json";
  std::string source = "perturbed_gt";
  double dt = 0.030;
  double dt_f = 0.020;
  std::uint64_t seed = 1;
};

int cmd_init(const InitArgs& a) {
  const esfo::InitSource source = esfo::init_source_from_string(a.source);
  std::optional<esfo::GroundTruth> gt;
  if (!a.gt.empty()) gt = esfo::load_ground_truth(a.gt);
  std::optional<esfo::ColmapModel> colmap;
  if (!a.colmap.empty()) colmap = esfo::read_colmap_text(a.colmap);

  esfo::Reconstruction rec;
  rec.dt = a.dt;
  if (colmap && !colmap->cameras.empty()) {
    rec.intrinsics = colmap->cameras.begin()->second;
  } else if (gt) {
    rec.intrinsics = gt->scene.intrinsics;
  } else {
    throw esfo::ValidationError("intrinsics need --gt or --colmap");
  }

  double f_fft = 0.0;
  if (!a.events.empty()) {
    const esfo::SensorSize sensor{rec.intrinsics.width > 0 ? rec.intrinsics.width : 346,
                                  rec.intrinsics.height > 0 ? rec.intrinsics.height : 260};
    const auto stream = esfo::load_events(a.events, esfo::EventFormat::csv, sensor);
    const auto est = esfo::estimate_frequency(stream, a.dt_f);
    if (est.has_peak) f_fft = est.f_init;
  }

  switch (source) {
    case esfo::InitSource::colmap_model:
      if (!colmap) throw esfo::ValidationError("--source colmap_model needs --colmap");
      if (!(f_fft > 0)) throw esfo::ValidationError("no dominant frequency; pass --events");
      rec.orbit = esfo::init_orbit(esfo::colmap_poses(*colmap, a.dt), f_fft);
      break;
    case esfo::InitSource::simulator_gt:
    case esfo::InitSource::perturbed_gt:
      if (!gt) throw esfo::ValidationError("ground-truth init needs --gt");
      rec.orbit = source == esfo::InitSource::simulator_gt
                      ? gt->scene.orbit_gt
                      : esfo::perturb_orbit(gt->scene.orbit_gt, 0.05, 5.0, 5.0, a.seed);
      break;
  }

  const auto tracks = esfo::load_tracks_csv(a.tracks);
  const auto obs = esfo::observations_from_tracks(tracks);
  rec.landmarks.assign(tracks.size(), Eigen::Vector3d::Zero());
  const auto points = esfo::triangulate_landmarks(rec, obs);
  rec.landmarks.clear();
  for (std::size_t i = 0; i < tracks.size(); ++i) {
    if (!points[i]) continue;
    rec.landmarks.push_back(*points[i]);
    rec.landmark_ids.push_back(tracks[i].track_id);
  }
  esfo::save_reconstruction(a.out, rec);
  print_json({{"f_fft", f_fft}, {"f_init", rec.orbit.f}, {"landmarks", rec.landmarks.size()},
              {"tracks", tracks.size()}});
  return 0;
}

// Observations of `tracks` against the landmarks of a solution, matched by id.
std::vector<esfo::Observation> observations_for(const std::vector<esfo::FeatureTrack>& tracks,
                                                const std::vector<int>& landmark_ids) {
  std::map<int, int> index;
  for (std::size_t i = 0; i < landmark_ids.size(); ++i) index[landmark_ids[i]] = static_cast<int>(i);
  std::vector<esfo::Observation> obs;
  for (const auto& t : tracks) {
    const auto it = index.find(t.track_id);
    if (it == index.end()) continue;
    for (const auto& s : t.samples) obs.push_back({it->second, s.k, Eigen::Vector2d(s.u, s.v)});
  }
  return obs;
}

int cmd_solve(const std::string& init_path, const std::string& tracks_path, const std::string& out,
              bool continuation) {
  const auto init = esfo::load_reconstruction(init_path);
  const auto tracks = esfo::load_tracks_csv(tracks_path);
  const auto obs = observations_for(tracks, init.landmark_ids);
  esfo::OptimizerOptions opts;
  opts.continuation = continuation;
  const auto rec = esfo::optimize(init, obs, opts);
  fs::create_directories(out);
  esfo::save_reconstruction(fs::path(out) / "reconstruction.json", rec);
  esfo::save_ply(fs::path(out) / "landmarks.ply", rec.landmarks);
  print_json({{"f", rec.orbit.f},
              {"rms_init_px", rec.initial_rms},
              {"rms_px", rec.rms_reprojection},
              {"converged", rec.converged},
              {"iterations", rec.iterations}});
  return 0;
}

int cmd_eval_tracks(const std::string& tracks_path, const std::string& gt_path,
                    const std::string& out) {
  const auto tracks = esfo::load_tracks_csv(tracks_path);
  const auto gt = esfo::load_ground_truth(gt_path);
  const auto evals = esfo::evaluate_tracks(tracks, gt.poses, gt.scene.intrinsics, gt.dt);
  const json report = {{"summary", esfo::to_json(esfo::summarize_tracks(evals))},
                       {"tracks", esfo::to_json(evals)}};
  if (!out.empty()) esfo::write_json(out, report);
  print_json(report["summary"]);
  return 0;
}

esfo::SfmSolution load_solution(const std::string& path) {
  if (fs::is_directory(path)) return esfo::colmap_solution(esfo::read_colmap_text(path));
  return esfo::to_solution(esfo::load_reconstruction(path));
}

int cmd_compare(const std::string& a_path, const std::string& b_path,
                const std::string& tracks_path, const std::string& gt_path,
                const std::string& out) {
  esfo::SfmSolution a = load_solution(a_path);
  const esfo::SfmSolution b_raw = load_solution(b_path);
  // Put b's landmarks in a's id order so one observation set serves both.
  std::map<int, std::size_t> b_index;
  for (std::size_t i = 0; i < b_raw.landmark_ids.size(); ++i) b_index[b_raw.landmark_ids[i]] = i;
  esfo::SfmSolution b = b_raw;
  b.landmarks.clear();
  b.landmark_ids.clear();
  esfo::SfmSolution a_common = a;
  a_common.landmarks.clear();
  a_common.landmark_ids.clear();
  for (std::size_t i = 0; i < a.landmark_ids.size(); ++i) {
    const auto it = b_index.find(a.landmark_ids[i]);
    if (it == b_index.end()) continue;
    a_common.landmarks.push_back(a.landmarks[i]);
    a_common.landmark_ids.push_back(a.landmark_ids[i]);
    b.landmarks.push_back(b_raw.landmarks[it->second]);
    b.landmark_ids.push_back(a.landmark_ids[i]);
  }
  const auto tracks = esfo::load_tracks_csv(tracks_path);
  auto obs = observations_for(tracks, a_common.landmark_ids);
  // Only windows posed in both solutions are comparable.
  std::erase_if(obs, [&](const esfo::Observation& o) {
    return !a_common.poses.contains(o.window) || !b.poses.contains(o.window);
  });

  std::optional<esfo::GroundTruth> gt;
  std::map<int, int> id_to_gt;
  if (!gt_path.empty()) {
    gt = esfo::load_ground_truth(gt_path);
    for (int id : a_common.landmark_ids) {
      if (id >= 0 && static_cast<std::size_t>(id) < gt->scene.landmarks.size()) id_to_gt[id] = id;
    }
  }
  const auto report = esfo::compare_reconstructions(a_common, b, obs, gt ? &gt->scene : nullptr,
                                                    gt ? &id_to_gt : nullptr);
  const json j = esfo::to_json(report);
  if (!out.empty()) esfo::write_json(out, j);
  print_json(j);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Structure from orbit for event cameras"};
  app.require_subcommand(1);

  SimulateArgs sim;
  auto* simulate = app.add_subcommand("simulate", "generate a synthetic spinning-object scene");
  simulate->add_option("--scene", sim.scene, "scene description JSON");
  simulate->add_option("--out", sim.out, "output directory");
  simulate->add_option("--preset", sim.preset, "cube_corners | ring | random_blob");
  simulate->add_option("--landmarks", sim.landmarks, "landmark count");
  simulate->add_option("--frequency", sim.frequency, "spin rate, Hz");
  simulate->add_option("--duration", sim.duration, "seconds");
  simulate->add_option("--sigma-px", sim.sigma_px, "observation noise, pixels");
  simulate->add_option("--rate", sim.rate, "events per landmark per second");
  simulate->add_option("--pixel-jitter", sim.pixel_jitter, "event pixel jitter, pixels");
  simulate->add_option("--background", sim.background, "background events per second");
  simulate->add_option("--dt", sim.dt, "window duration, seconds");
  simulate->add_option("--seed", sim.seed, "random seed");

  std::string track_events, track_out = "tracks.csv";
  TrackerArgs track_args;
  auto* track = app.add_subcommand("track", "detect, cluster and extract feature tracks");
  track->add_option("--events", track_events, "event CSV")->required();
  track->add_option("--out", track_out, "track CSV");
  track_args.add(track);

  InitArgs init_args;
  auto* init = app.add_subcommand("init", "initial orbit and landmarks");
  init->add_option("--events", init_args.events, "event CSV for the frequency estimate");
  init->add_option("--tracks", init_args.tracks, "track CSV")->required();
  init->add_option("--gt", init_args.gt, "ground-truth sidecar");
  init->add_option("--colmap", init_args.colmap, "COLMAP text model directory");
  init->add_option("--source", init_args.source, "colmap_model | simulator_gt | perturbed_gt");
  init->add_option("--dt", init_args.dt, "track window, seconds");
  init->add_option("--dt-f", init_args.dt_f, "frequency sampling window, seconds");
  init->add_option("--seed", init_args.seed, "random seed");
  init->add_option("--out", init_args.out, "output reconstruction JSON");

  std::string solve_init, solve_tracks, solve_out = "solve";
  bool solve_continuation = false;
  auto* solve = app.add_subcommand("solve", "orbit-constrained refinement");
  solve->add_option("--init", solve_init, "initial reconstruction JSON")->required();
  solve->add_option("--tracks", solve_tracks, "track CSV")->required();
  solve->add_option("--out", solve_out, "output directory");
  solve->add_flag("--continuation", solve_continuation, "solve on growing time horizons");

  std::string run_config, run_events, run_gt, run_colmap, run_out, run_init, run_tracks;
  std::optional<std::uint64_t> run_seed;
  auto* run = app.add_subcommand("run", "all stages end to end");
  run->add_option("--config", run_config, "pipeline config JSON");
  run->add_option("--events", run_events, "event CSV");
  run->add_option("--gt", run_gt, "ground-truth sidecar");
  run->add_option("--colmap", run_colmap, "COLMAP text model directory");
  run->add_option("--out", run_out, "output directory");
  run->add_option("--init", run_init, "colmap_model | simulator_gt | perturbed_gt");
  run->add_option("--tracks", run_tracks, "events | simulator_gt");
  run->add_option("--seed", run_seed, "random seed");

  std::string eval_tracks_path, eval_gt, eval_out;
  auto* eval = app.add_subcommand("eval-tracks", "score tracks against ground-truth poses");
  eval->add_option("--tracks", eval_tracks_path, "track CSV")->required();
  eval->add_option("--gt", eval_gt, "ground-truth sidecar")->required();
  eval->add_option("--out", eval_out, "report JSON");

  std::string cmp_a, cmp_b, cmp_tracks, cmp_gt, cmp_out;
  auto* compare = app.add_subcommand("compare", "compare two reconstructions");
  compare->add_option("--a", cmp_a, "reconstruction JSON or COLMAP directory")->required();
  compare->add_option("--b", cmp_b, "reconstruction JSON or COLMAP directory")->required();
  compare->add_option("--tracks", cmp_tracks, "track CSV")->required();
  compare->add_option("--gt", cmp_gt, "ground-truth sidecar");
  compare->add_option("--out", cmp_out, "report JSON");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitValidation;
  }

  try {
    if (*simulate) return cmd_simulate(sim);
    if (*track) return cmd_track(track_events, track_out, track_args);
    if (*init) return cmd_init(init_args);
    if (*solve) return cmd_solve(solve_init, solve_tracks, solve_out, solve_continuation);
    if (*run) {
      esfo::PipelineConfig cfg;
      if (!run_config.empty()) {
        cfg = esfo::pipeline_config_from_json(esfo::read_json(run_config), cfg,
                                              fs::path(run_config).parent_path());
      }
      if (!run_events.empty()) cfg.events_path = run_events;
      if (!run_gt.empty()) cfg.ground_truth_path = run_gt;
      if (!run_colmap.empty()) cfg.colmap_dir = run_colmap;
      if (!run_out.empty()) cfg.output_dir = run_out;
      if (!run_init.empty()) cfg.init = esfo::init_source_from_string(run_init);
      if (!run_tracks.empty()) cfg.tracks = esfo::track_source_from_string(run_tracks);
      if (run_seed) cfg.seed = *run_seed;
      const auto result = esfo::run_pipeline(cfg);
      print_json(esfo::to_json(result.metrics));
      return 0;
    }
    if (*eval) return cmd_eval_tracks(eval_tracks_path, eval_gt, eval_out);
    if (*compare) return cmd_compare(cmp_a, cmp_b, cmp_tracks, cmp_gt, cmp_out);
  } catch (const esfo::StageError& e) {
    std::cerr << "stage failure: " << e.what() << '\n';
    return kExitStage;
  } catch (const esfo::ValidationError& e) {
    std::cerr << "invalid input: " << e.what() << '\n';
    return kExitValidation;
  } catch (const esfo::ParseError& e) {
    std::cerr << "parse error: " << e.what() << '\n';
    return kExitValidation;
  } catch (const esfo::PreconditionError& e) {
    std::cerr << "invalid input: " << e.what() << '\n';
    return kExitValidation;
  } catch (const std::exception& e) {
    std::cerr << "failure: " << e.what() << '\n';
    return kExitStage;
  }
  return 0;
}
