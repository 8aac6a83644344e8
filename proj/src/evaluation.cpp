#include "esfo/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "esfo/errors.hpp"
#include "esfo/geometry.hpp"
#include "esfo/optimizer.hpp"
#include "esfo/orbit_init.hpp"
#include "esfo/triangulation.hpp"

namespace esfo {

using nlohmann::json;

namespace {

constexpr double kDefaultThresholds[] = {3.0, 5.0, 7.0};

double median(std::vector<double> v) {
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end());
  const std::size_t h = v.size() / 2;
  return v.size() % 2 ? v[h] : 0.5 * (v[h - 1] + v[h]);
}

}  // namespace

std::vector<TrackEvaluation> evaluate_tracks(std::span<const FeatureTrack> tracks,
                                             const PoseSet& gt_poses, const CameraIntrinsics& K,
                                             double dt, std::span<const double> thresholds) {
  if (!(dt > 0)) throw ValidationError("window duration must be positive");
  if (thresholds.empty()) thresholds = kDefaultThresholds;
  std::map<int, const CameraPose*> by_window;
  for (const auto& p : gt_poses) by_window[static_cast<int>(std::lround(p.time / dt))] = &p;

  std::vector<TrackEvaluation> out;
  out.reserve(tracks.size());
  for (const auto& track : tracks) {
    TrackEvaluation ev;
    ev.track_id = track.track_id;
    PoseSet poses;
    std::vector<Eigen::Vector2d> pixels;
    std::vector<double> times;
    for (const auto& s : track.samples) {
      const auto it = by_window.find(s.k);
      if (it == by_window.end()) continue;
      poses.push_back(*it->second);
      pixels.emplace_back(s.u, s.v);
      times.push_back(s.k * dt);
    }
    if (poses.size() < 2) {
      ev.reason = "fewer than 2 samples with a pose";
      out.push_back(std::move(ev));
      continue;
    }
    try {
      ev.point = triangulate_dlt(poses, pixels, K);
    } catch (const DegenerateGeometry& e) {
      ev.reason = e.what();
      out.push_back(std::move(ev));
      continue;
    }
    std::vector<double> errors(poses.size(), std::numeric_limits<double>::infinity());
    for (std::size_t i = 0; i < poses.size(); ++i) {
      const Eigen::Vector3d Xc = poses[i].apply(ev.point);
      if (Xc.z() > kMinDepth) errors[i] = (project(Xc, K) - pixels[i]).norm();
    }
    ev.valid = true;
    for (double thr : thresholds) {
      ThresholdResult tr;
      tr.threshold = thr;
      double sq = 0.0;
      double first = 0.0, last = 0.0;
      for (std::size_t i = 0; i < errors.size(); ++i) {
        if (!(errors[i] <= thr)) continue;
        if (tr.inliers == 0) first = times[i];
        last = times[i];
        sq += errors[i] * errors[i];
        ++tr.inliers;
      }
      if (tr.inliers > 0) {
        tr.valid = true;
        tr.rmse = std::sqrt(sq / tr.inliers);
        tr.feature_age = last - first;
      }
      ev.thresholds.push_back(tr);
    }
    out.push_back(std::move(ev));
  }
  return out;
}

std::vector<ThresholdSummary> summarize_tracks(std::span<const TrackEvaluation> evaluations) {
  std::map<double, std::vector<const ThresholdResult*>> groups;
  for (const auto& ev : evaluations) {
    if (!ev.valid) continue;
    for (const auto& tr : ev.thresholds) {
      if (tr.valid) groups[tr.threshold].push_back(&tr);
    }
  }
  std::vector<ThresholdSummary> out;
  for (const auto& [thr, rows] : groups) {
    ThresholdSummary s;
    s.threshold = thr;
    s.tracks = static_cast<int>(rows.size());
    std::vector<double> rmse;
    double age = 0.0;
    for (const auto* r : rows) {
      rmse.push_back(r->rmse);
      age += r->feature_age;
    }
    const double n = static_cast<double>(rows.size());
    double mean = 0.0;
    for (double v : rmse) mean += v;
    mean /= n;
    double var = 0.0;
    for (double v : rmse) var += (v - mean) * (v - mean);
    s.mean_rmse = mean;
    s.std_rmse = std::sqrt(var / n);
    s.median_rmse = median(rmse);
    s.mean_feature_age = age / n;
    out.push_back(s);
  }
  return out;
}

json to_json(std::span<const TrackEvaluation> evaluations) {
  json arr = json::array();
  for (const auto& ev : evaluations) {
    json j = {{"track_id", ev.track_id}, {"valid", ev.valid}};
    if (!ev.valid) j["reason"] = ev.reason;
    json thr = json::array();
    for (const auto& t : ev.thresholds) {
      thr.push_back({{"threshold", t.threshold},
                     {"valid", t.valid},
                     {"inliers", t.inliers},
                     {"rmse", t.rmse},
                     {"feature_age", t.feature_age}});
    }
    j["thresholds"] = thr;
    arr.push_back(j);
  }
  return arr;
}

json to_json(std::span<const ThresholdSummary> summaries) {
  json arr = json::array();
  for (const auto& s : summaries) {
    arr.push_back({{"threshold", s.threshold},
                   {"tracks", s.tracks},
                   {"mean_rmse", s.mean_rmse},
                   {"std_rmse", s.std_rmse},
                   {"median_rmse", s.median_rmse},
                   {"mean_feature_age", s.mean_feature_age}});
  }
  return arr;
}

Purity track_purity(const FeatureTrack& track, std::span<const int> event_labels) {
  std::map<int, std::size_t> counts;
  for (std::size_t idx : track.event_indices) {
    if (idx >= event_labels.size()) throw PreconditionError("event index outside label table");
    ++counts[event_labels[idx]];
  }
  Purity p;
  if (track.event_indices.empty()) return p;
  std::size_t best = 0;
  for (const auto& [label, n] : counts) {
    if (n > best) {
      best = n;
      p.label = label;
    }
  }
  p.purity = static_cast<double>(best) / static_cast<double>(track.event_indices.size());
  return p;
}

double pure_track_fraction(std::span<const FeatureTrack> tracks, std::span<const int> event_labels,
                           double min_purity) {
  if (tracks.empty()) return 0.0;
  std::size_t pure = 0;
  for (const auto& t : tracks) {
    const Purity p = track_purity(t, event_labels);
    if (p.label >= 0 && p.purity >= min_purity) ++pure;
  }
  return static_cast<double>(pure) / static_cast<double>(tracks.size());
}

std::optional<double> structure_rmse(const SfmSolution& solution, const SimScene& gt,
                                     const std::map<int, int>& id_to_gt) {
  std::map<int, int> corr;
  for (std::size_t i = 0; i < solution.landmarks.size(); ++i) {
    const int id = i < solution.landmark_ids.size() ? solution.landmark_ids[i]
                                                    : static_cast<int>(i);
    const auto it = id_to_gt.find(id);
    if (it != id_to_gt.end()) corr[static_cast<int>(i)] = it->second;
  }
  if (corr.size() < 3) return std::nullopt;
  try {
    return align_similarity(solution.landmarks, gt.landmarks, corr).rmse;
  } catch (const DegenerateGeometry&) {
    return std::nullopt;
  }
}

ComparisonReport compare_reconstructions(const SfmSolution& a, const SfmSolution& b,
                                         std::span<const Observation> observations,
                                         const SimScene* gt, const std::map<int, int>* id_to_gt) {
  const auto deviation = [](const SfmSolution& s) {
    std::vector<Eigen::Vector3d> centers;
    for (const auto& [k, pose] : s.poses) centers.push_back(pose.center());
    try {
      return circle_deviation(centers);
    } catch (const DegenerateGeometry&) {
      return std::numeric_limits<double>::quiet_NaN();
    }
  };
  ComparisonReport r;
  r.rms_a = rms_reprojection(a, observations);
  r.rms_b = rms_reprojection(b, observations);
  r.circle_deviation_a = deviation(a);
  r.circle_deviation_b = deviation(b);
  if (gt && id_to_gt) {
    r.structure_rmse_a = structure_rmse(a, *gt, *id_to_gt);
    r.structure_rmse_b = structure_rmse(b, *gt, *id_to_gt);
  }
  return r;
}

json to_json(const ComparisonReport& r) {
  json j = {{"rms_reprojection_a", r.rms_a},
            {"rms_reprojection_b", r.rms_b},
            {"circle_deviation_a", r.circle_deviation_a},
            {"circle_deviation_b", r.circle_deviation_b}};
  if (r.structure_rmse_a) j["structure_rmse_a"] = *r.structure_rmse_a;
  if (r.structure_rmse_b) j["structure_rmse_b"] = *r.structure_rmse_b;
  return j;
}

double axis_error_deg(const Eigen::Vector3d& a_cam, const Eigen::Vector3d& b_cam) {
  const double ang = angle_between(a_cam, b_cam);
  return std::min(ang, std::numbers::pi - ang) * 180.0 / std::numbers::pi;
}

}  // namespace esfo
