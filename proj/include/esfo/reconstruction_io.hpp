#pragma once

#include <filesystem>
#include <span>
#include <vector>

#include <Eigen/Core>
#include <json.hpp>

#include "esfo/camera.hpp"
#include "esfo/orbit_model.hpp"
#include "esfo/reconstruction.hpp"

namespace esfo {

nlohmann::json to_json(const Eigen::Vector3d& v);
Eigen::Vector3d vector3_from_json(const nlohmann::json& j);

// R0 is stored as a unit quaternion [w, x, y, z].
nlohmann::json to_json(const OrbitParams& orbit);
OrbitParams orbit_from_json(const nlohmann::json& j);

nlohmann::json to_json(const CameraIntrinsics& K);
CameraIntrinsics intrinsics_from_json(const nlohmann::json& j);

nlohmann::json to_json(const CameraPose& pose);
CameraPose pose_from_json(const nlohmann::json& j);

nlohmann::json to_json(const Reconstruction& rec);
Reconstruction reconstruction_from_json(const nlohmann::json& j);

void save_reconstruction(const std::filesystem::path& path, const Reconstruction& rec);
Reconstruction load_reconstruction(const std::filesystem::path& path);

// ASCII PLY with one "x y z" vertex per landmark.
void save_ply(const std::filesystem::path& path, std::span<const Eigen::Vector3d> points);
std::vector<Eigen::Vector3d> load_ply(const std::filesystem::path& path);

// Reads a JSON file; throws ParseError on malformed input.
nlohmann::json read_json(const std::filesystem::path& path);
void write_json(const std::filesystem::path& path, const nlohmann::json& j);

}  // namespace esfo
