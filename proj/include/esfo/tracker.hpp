#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <vector>

#include "esfo/events.hpp"

namespace esfo {

struct TrackerConfig {
  double lambda = 7.0;        // density neighbourhood radius (scaled units)
  int min_pts = 10;           // HDBSCAN minimum cluster size
  double epsilon = 5.0;       // HDBSCAN cluster selection epsilon
  double phi = 30.0;          // head/tail merge radius
  int n_sigma = 5;            // events averaged into a head/tail descriptor
  double dt = 0.030;          // track window, seconds
  double time_scale = 1000.0; // scaled units per second (1 unit = 1 ms)

  void validate() const;
};

struct CornerEvent {
  Event event;
  double density = 0.0;
  std::size_t index = 0;  // position in the source stream
};

// Spatio-temporal descriptor; t in seconds.
struct Descriptor {
  double t = 0.0;
  double x = 0.0;
  double y = 0.0;
};

struct Cluster {
  int id = 0;
  std::vector<CornerEvent> members;  // ordered by t
  Descriptor head;
  Descriptor tail;

  // Sorts members and recomputes head/tail from the first/last n_sigma.
  void refresh(int n_sigma);
};

struct TrackSample {
  int k = 0;
  double u = 0.0;
  double v = 0.0;
  int count = 0;  // events averaged
};

struct FeatureTrack {
  int track_id = 0;
  int source_cluster = 0;
  std::vector<TrackSample> samples;       // strictly increasing k
  std::vector<std::size_t> event_indices; // stream events behind the samples
};

// Number of usable windows, floor(T / dt) - 1.
int window_count(double duration, double dt);
// Index k of the window (k dt, (k+1) dt] holding time t.
int window_index(double t, double dt);

// Stream indices of eFAST corner events.
std::vector<std::size_t> detect_corner_indices(const EventStream& stream);

// Neighbour-count density of each corner: same-polarity stream events
// (excluding the corner itself) within `lambda` in (x, y, t * time_scale),
// divided by lambda.
std::vector<CornerEvent> corner_densities(std::span<const std::size_t> corner_indices,
                                          const EventStream& stream,
                                          const TrackerConfig& cfg);

// Keeps corners whose density reaches the mean density of their polarity.
std::vector<CornerEvent> threshold_by_polarity_mean(std::vector<CornerEvent> corners);

std::vector<CornerEvent> density_filter(std::span<const std::size_t> corner_indices,
                                        const EventStream& stream,
                                        const TrackerConfig& cfg);

std::vector<Cluster> cluster_corners(std::span<const CornerEvent> corners,
                                     const TrackerConfig& cfg);

// Joins cluster tails to later cluster heads within radius phi until no
// pair qualifies.
std::vector<Cluster> merge_clusters(std::vector<Cluster> clusters, const TrackerConfig& cfg);

std::vector<FeatureTrack> extract_tracks(std::span<const Cluster> clusters, double dt,
                                         double duration);

struct TrackerResult {
  std::size_t corner_count = 0;
  std::size_t filtered_count = 0;
  std::size_t cluster_count = 0;
  std::size_t merged_count = 0;
  std::vector<Cluster> clusters;  // after merging
  std::vector<FeatureTrack> tracks;
};

// Full front end: corners, density filter, clustering, merging, extraction.
TrackerResult run_tracker(const EventStream& stream, const TrackerConfig& cfg);

void save_tracks_csv(const std::filesystem::path& path, std::span<const FeatureTrack> tracks,
                     double dt);
std::vector<FeatureTrack> load_tracks_csv(const std::filesystem::path& path);

}  // namespace esfo
