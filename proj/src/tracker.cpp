#include "esfo/tracker.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>
#include <string>

#include "esfo/efast.hpp"
#include "esfo/errors.hpp"
#include "esfo/hdbscan.hpp"

namespace esfo {

void TrackerConfig::validate() const {
  if (!(lambda > 0 && min_pts > 0 && epsilon > 0 && phi > 0 && n_sigma > 0 && dt > 0 &&
        time_scale > 0)) {
    throw ValidationError("tracker parameters must all be positive");
  }
}

int window_count(double duration, double dt) {
  return static_cast<int>(std::floor(duration / dt)) - 1;
}

int window_index(double t, double dt) {
  return static_cast<int>(std::ceil(t / dt)) - 1;
}

std::vector<std::size_t> detect_corner_indices(const EventStream& stream) {
  std::vector<std::size_t> out;
  if (stream.empty()) return out;
  Sae sae(stream.sensor);
  for (std::size_t i = 0; i < stream.events.size(); ++i) {
    const auto& e = stream.events[i];
    sae.update(e);
    if (is_efast_corner(sae, e)) out.push_back(i);
  }
  return out;
}

std::vector<CornerEvent> corner_densities(std::span<const std::size_t> corner_indices,
                                          const EventStream& stream,
                                          const TrackerConfig& cfg) {
  // Per-polarity time-ordered index lists.
  std::vector<std::size_t> pos_idx, neg_idx;
  for (std::size_t i = 0; i < stream.events.size(); ++i) {
    (stream.events[i].p > 0 ? pos_idx : neg_idx).push_back(i);
  }
  const double radius_sq = cfg.lambda * cfg.lambda;
  const double half_window = cfg.lambda / cfg.time_scale;

  std::vector<CornerEvent> out;
  out.reserve(corner_indices.size());
  for (const auto ci : corner_indices) {
    const auto& c = stream.events.at(ci);
    const auto& list = c.p > 0 ? pos_idx : neg_idx;
    auto it = std::lower_bound(list.begin(), list.end(), c.t - half_window,
                               [&](std::size_t i, double t) { return stream.events[i].t < t; });
    std::size_t count = 0;
    for (; it != list.end(); ++it) {
      const auto& q = stream.events[*it];
      if (q.t > c.t + half_window) break;
      if (*it == ci) continue;
      const double dx = q.x - c.x;
      const double dy = q.y - c.y;
      const double dt = (q.t - c.t) * cfg.time_scale;
      if (dx * dx + dy * dy + dt * dt <= radius_sq) ++count;
    }
    out.push_back({c, static_cast<double>(count) / cfg.lambda, ci});
  }
  return out;
}

std::vector<CornerEvent> threshold_by_polarity_mean(std::vector<CornerEvent> corners) {
  double sum[2] = {0.0, 0.0};
  std::size_t n[2] = {0, 0};
  for (const auto& c : corners) {
    const int k = c.event.p > 0 ? 1 : 0;
    sum[k] += c.density;
    ++n[k];
  }
  const double mean[2] = {n[0] ? sum[0] / n[0] : 0.0, n[1] ? sum[1] / n[1] : 0.0};
  std::erase_if(corners, [&](const CornerEvent& c) {
    return c.density < mean[c.event.p > 0 ? 1 : 0];
  });
  return corners;
}

std::vector<CornerEvent> density_filter(std::span<const std::size_t> corner_indices,
                                        const EventStream& stream,
                                        const TrackerConfig& cfg) {
  if (!(cfg.lambda > 0)) throw ValidationError("lambda must be positive");
  return threshold_by_polarity_mean(corner_densities(corner_indices, stream, cfg));
}

void Cluster::refresh(int n_sigma) {
  std::stable_sort(members.begin(), members.end(), [](const CornerEvent& a, const CornerEvent& b) {
    return a.event.t < b.event.t;
  });
  const std::size_t m = std::min<std::size_t>(members.size(), std::max(n_sigma, 1));
  const auto mean_of = [&](auto first) {
    Descriptor d;
    for (std::size_t i = 0; i < m; ++i) {
      const auto& e = first[i].event;
      d.t += e.t;
      d.x += e.x;
      d.y += e.y;
    }
    d.t /= m;
    d.x /= m;
    d.y /= m;
    return d;
  };
  if (m == 0) return;
  head = mean_of(members.begin());
  tail = mean_of(members.end() - m);
}

std::vector<Cluster> cluster_corners(std::span<const CornerEvent> corners,
                                     const TrackerConfig& cfg) {
  std::vector<Eigen::Vector3d> points;
  points.reserve(corners.size());
  for (const auto& c : corners) {
    points.emplace_back(c.event.x, c.event.y, c.event.t * cfg.time_scale);
  }
  HdbscanParams params;
  params.min_cluster_size = cfg.min_pts;
  params.cluster_selection_epsilon = cfg.epsilon;
  const auto labels = hdbscan(points, params);

  const int count = labels.empty() ? 0 : *std::max_element(labels.begin(), labels.end()) + 1;
  std::vector<Cluster> clusters(count);
  for (int i = 0; i < count; ++i) clusters[i].id = i;
  for (std::size_t i = 0; i < corners.size(); ++i) {
    if (labels[i] >= 0) clusters[labels[i]].members.push_back(corners[i]);
  }
  for (auto& c : clusters) c.refresh(cfg.n_sigma);
  return clusters;
}

std::vector<Cluster> merge_clusters(std::vector<Cluster> clusters, const TrackerConfig& cfg) {
  const double phi_sq = cfg.phi * cfg.phi;
  struct Candidate {
    double dist_sq;
    std::size_t tail;
    std::size_t head;
  };

  while (clusters.size() > 1) {
    std::vector<Candidate> candidates;
    for (std::size_t i = 0; i < clusters.size(); ++i) {
      const auto& tail = clusters[i].tail;
      for (std::size_t j = 0; j < clusters.size(); ++j) {
        if (i == j) continue;
        const auto& head = clusters[j].head;
        if (!(head.t > tail.t)) continue;
        const double dx = head.x - tail.x;
        const double dy = head.y - tail.y;
        const double dt = (head.t - tail.t) * cfg.time_scale;
        const double d2 = dx * dx + dy * dy + dt * dt;
        if (d2 < phi_sq) candidates.push_back({d2, i, j});
      }
    }
    if (candidates.empty()) break;
    std::sort(candidates.begin(), candidates.end(), [](const Candidate& a, const Candidate& b) {
      if (a.dist_sq != b.dist_sq) return a.dist_sq < b.dist_sq;
      if (a.tail != b.tail) return a.tail < b.tail;
      return a.head < b.head;
    });

    std::vector<std::size_t> parent(clusters.size());
    std::iota(parent.begin(), parent.end(), 0);
    const auto find = [&](std::size_t x) {
      while (parent[x] != x) x = parent[x] = parent[parent[x]];
      return x;
    };
    std::vector<char> tail_used(clusters.size(), 0), head_used(clusters.size(), 0);
    for (const auto& c : candidates) {
      if (tail_used[c.tail] || head_used[c.head]) continue;
      const auto a = find(c.tail);
      const auto b = find(c.head);
      if (a == b) continue;
      tail_used[c.tail] = head_used[c.head] = 1;
      parent[std::max(a, b)] = std::min(a, b);
    }

    std::map<std::size_t, Cluster> groups;
    for (std::size_t i = 0; i < clusters.size(); ++i) {
      const auto root = find(i);
      auto [it, fresh] = groups.try_emplace(root);
      if (fresh) it->second.id = clusters[root].id;
      auto& dst = it->second.members;
      dst.insert(dst.end(), clusters[i].members.begin(), clusters[i].members.end());
    }
    std::vector<Cluster> next;
    next.reserve(groups.size());
    for (auto& [root, c] : groups) {
      c.refresh(cfg.n_sigma);
      next.push_back(std::move(c));
    }
    clusters = std::move(next);
  }
  return clusters;
}

std::vector<FeatureTrack> extract_tracks(std::span<const Cluster> clusters, double dt,
                                         double duration) {
  if (!(dt > 0)) throw ValidationError("track window must be positive");
  const int windows = window_count(duration, dt);
  std::vector<FeatureTrack> tracks;
  if (windows < 1) return tracks;

  for (const auto& cluster : clusters) {
    std::map<int, TrackSample> by_window;
    std::vector<std::size_t> used;
    for (const auto& m : cluster.members) {
      const int k = window_index(m.event.t, dt);
      if (k < 1 || k > windows) continue;
      auto& s = by_window[k];
      s.k = k;
      s.u += m.event.x;
      s.v += m.event.y;
      ++s.count;
      used.push_back(m.index);
    }
    if (by_window.size() < 2) continue;
    FeatureTrack track;
    track.track_id = static_cast<int>(tracks.size());
    track.source_cluster = cluster.id;
    for (auto& [k, s] : by_window) {
      s.u /= s.count;
      s.v /= s.count;
      track.samples.push_back(s);
    }
    track.event_indices = std::move(used);
    tracks.push_back(std::move(track));
  }
  return tracks;
}

TrackerResult run_tracker(const EventStream& stream, const TrackerConfig& cfg) {
  cfg.validate();
  TrackerResult result;
  const auto corner_idx = detect_corner_indices(stream);
  result.corner_count = corner_idx.size();
  const auto filtered = density_filter(corner_idx, stream, cfg);
  result.filtered_count = filtered.size();
  auto clusters = cluster_corners(filtered, cfg);
  result.cluster_count = clusters.size();
  result.clusters = merge_clusters(std::move(clusters), cfg);
  result.merged_count = result.clusters.size();
  result.tracks = extract_tracks(result.clusters, cfg.dt, stream.end_time());
  return result;
}

void save_tracks_csv(const std::filesystem::path& path, std::span<const FeatureTrack> tracks,
                     double dt) {
  std::ofstream file(path);
  if (!file) throw Error("cannot write track file " + path.string());
  file.precision(17);
  file << "track_id,k,t,u,v\n";
  for (const auto& track : tracks) {
    for (const auto& s : track.samples) {
      file << track.track_id << ',' << s.k << ',' << s.k * dt << ',' << s.u << ',' << s.v
           << '\n';
    }
  }
}

std::vector<FeatureTrack> load_tracks_csv(const std::filesystem::path& path) {
  std::ifstream file(path);
  if (!file) throw Error("cannot open track file " + path.string());
  std::map<int, FeatureTrack> by_id;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(file, line)) {
    ++line_no;
    if (line.empty() || (line_no == 1 && line.rfind("track_id", 0) == 0)) continue;
    std::replace(line.begin(), line.end(), ',', ' ');
    std::istringstream in(line);
    int id = 0;
    TrackSample s;
    double t = 0.0;
    if (!(in >> id >> s.k >> t >> s.u >> s.v)) throw ParseError(line_no, "bad track row");
    s.count = 1;
    auto& track = by_id[id];
    track.track_id = id;
    track.source_cluster = id;
    if (!track.samples.empty() && track.samples.back().k >= s.k) {
      throw ParseError(line_no, "window indices must increase within a track");
    }
    track.samples.push_back(s);
  }
  std::vector<FeatureTrack> tracks;
  for (auto& [id, t] : by_id) tracks.push_back(std::move(t));
  return tracks;
}

}  // namespace esfo
