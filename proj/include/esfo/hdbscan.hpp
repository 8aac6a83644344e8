#pragma once

#include <span>
#include <vector>

#include <Eigen/Core>

namespace esfo {

struct HdbscanParams {
  int min_cluster_size = 10;
  int min_samples = 0;  // 0 means min_cluster_size
  double cluster_selection_epsilon = 0.0;
  // Lets the root of the condensed tree be selected, so a single dense
  // group yields one cluster rather than all noise.
  bool allow_single_cluster = true;
};

// Hierarchical density-based clustering (excess-of-mass selection, with the
// epsilon hybrid rule when cluster_selection_epsilon > 0).
// Returns one label per point: 0..k-1, or -1 for noise. Labels are ordered
// by the smallest point index in each cluster.
std::vector<int> hdbscan(std::span<const Eigen::Vector3d> points,
                         const HdbscanParams& params);

}  // namespace esfo
