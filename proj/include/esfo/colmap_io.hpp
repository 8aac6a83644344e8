#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "esfo/camera.hpp"
#include "esfo/reconstruction.hpp"

namespace esfo {

// Subset of a COLMAP text model: cameras.txt, images.txt, points3D.txt.
struct ColmapModel {
  struct Image {
    int id = 0;
    int camera_id = 0;
    std::string name;
    int window = 0;  // parsed from names like win_000123
    CameraPose pose;
    std::vector<std::pair<Eigen::Vector2d, long>> points2d;  // (pixel, point3D id or -1)
  };
  struct Point {
    long id = 0;
    Eigen::Vector3d xyz = Eigen::Vector3d::Zero();
    std::vector<std::pair<int, int>> track;  // (image id, point2D index)
  };

  std::map<int, CameraIntrinsics> cameras;
  std::vector<Image> images;  // ordered by window
  std::vector<Point> points;
};

// Window index encoded in an image name ("win_000123.png" -> 123). Throws
// ValidationError when the name carries no index.
int window_from_image_name(const std::string& name);
std::string image_name_for_window(int window);

ColmapModel read_colmap_text(const std::filesystem::path& dir);
void write_colmap_text(const std::filesystem::path& dir, const ColmapModel& model);

// Pose set with t_k = window * dt.
PoseSet colmap_poses(const ColmapModel& model, double dt);

// Free-pose solution plus the observations stored in images.txt.
SfmSolution colmap_solution(const ColmapModel& model);
std::vector<Observation> colmap_observations(const ColmapModel& model);

// Builds a model (single PINHOLE camera) from a solution and observations.
ColmapModel make_colmap_model(const SfmSolution& solution,
                              const std::vector<Observation>& observations);

}  // namespace esfo
