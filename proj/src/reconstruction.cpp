#include "esfo/reconstruction.hpp"

#include <algorithm>

namespace esfo {

CameraPose Reconstruction::pose(int window) const { return orbit_pose(window * dt, orbit); }

PoseSet Reconstruction::poses() const {
  PoseSet out;
  out.reserve(windows.size());
  for (int k : windows) out.push_back(pose(k));
  return out;
}

SfmSolution to_solution(const Reconstruction& rec) {
  SfmSolution s;
  for (int k : rec.windows) s.poses[k] = rec.pose(k);
  s.landmarks = rec.landmarks;
  s.landmark_ids = rec.landmark_ids;
  s.intrinsics = rec.intrinsics;
  return s;
}

std::vector<int> observed_windows(const std::vector<Observation>& observations) {
  std::vector<int> ks;
  ks.reserve(observations.size());
  for (const auto& o : observations) ks.push_back(o.window);
  std::sort(ks.begin(), ks.end());
  ks.erase(std::unique(ks.begin(), ks.end()), ks.end());
  return ks;
}

}  // namespace esfo
