#include "esfo/reconstruction_io.hpp"

#include <fstream>
#include <sstream>
#include <string>

#include <Eigen/Geometry>

#include "esfo/errors.hpp"

namespace esfo {

using nlohmann::json;

json to_json(const Eigen::Vector3d& v) { return json::array({v.x(), v.y(), v.z()}); }

Eigen::Vector3d vector3_from_json(const json& j) {
  if (!j.is_array() || j.size() != 3) throw ValidationError("expected a 3-vector");
  return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

json to_json(const OrbitParams& o) {
  const Eigen::Quaterniond q(o.R0);
  return {{"r", o.r},
          {"f", o.f},
          {"R0", json::array({q.w(), q.x(), q.y(), q.z()})},
          {"n", to_json(o.n)},
          {"u", to_json(o.u)},
          {"c", to_json(o.c)}};
}

OrbitParams orbit_from_json(const json& j) {
  OrbitParams o;
  o.r = j.at("r").get<double>();
  o.f = j.at("f").get<double>();
  const auto& q = j.at("R0");
  if (!q.is_array() || q.size() != 4) throw ValidationError("R0 must be a quaternion [w, x, y, z]");
  o.R0 = Eigen::Quaterniond(q[0].get<double>(), q[1].get<double>(), q[2].get<double>(),
                            q[3].get<double>())
             .normalized()
             .toRotationMatrix();
  o.n = vector3_from_json(j.at("n"));
  o.u = vector3_from_json(j.at("u"));
  o.c = vector3_from_json(j.at("c"));
  return o;
}

json to_json(const CameraIntrinsics& K) {
  return {{"fx", K.fx}, {"fy", K.fy}, {"cx", K.cx}, {"cy", K.cy},
          {"width", K.width}, {"height", K.height}};
}

CameraIntrinsics intrinsics_from_json(const json& j) {
  CameraIntrinsics K;
  K.fx = j.at("fx").get<double>();
  K.fy = j.at("fy").get<double>();
  K.cx = j.at("cx").get<double>();
  K.cy = j.at("cy").get<double>();
  K.width = j.value("width", 0);
  K.height = j.value("height", 0);
  K.validate();
  return K;
}

json to_json(const CameraPose& pose) {
  const Eigen::Quaterniond q(pose.R);
  return {{"time", pose.time},
          {"q", json::array({q.w(), q.x(), q.y(), q.z()})},
          {"t", to_json(pose.t)}};
}

CameraPose pose_from_json(const json& j) {
  CameraPose p;
  p.time = j.at("time").get<double>();
  const auto& q = j.at("q");
  p.R = Eigen::Quaterniond(q[0].get<double>(), q[1].get<double>(), q[2].get<double>(),
                           q[3].get<double>())
            .normalized()
            .toRotationMatrix();
  p.t = vector3_from_json(j.at("t"));
  return p;
}

json to_json(const Reconstruction& rec) {
  json landmarks = json::array();
  for (std::size_t i = 0; i < rec.landmarks.size(); ++i) {
    const int id = i < rec.landmark_ids.size() ? rec.landmark_ids[i] : static_cast<int>(i);
    landmarks.push_back({{"id", id}, {"xyz", to_json(rec.landmarks[i])}});
  }
  return {{"orbit", to_json(rec.orbit)},
          {"intrinsics", to_json(rec.intrinsics)},
          {"dt", rec.dt},
          {"windows", rec.windows},
          {"initial_rms", rec.initial_rms},
          {"rms_reprojection", rec.rms_reprojection},
          {"converged", rec.converged},
          {"iterations", rec.iterations},
          {"cost_history", rec.cost_history},
          {"landmarks", landmarks}};
}

Reconstruction reconstruction_from_json(const json& j) {
  try {
    Reconstruction rec;
    rec.orbit = orbit_from_json(j.at("orbit"));
    rec.intrinsics = intrinsics_from_json(j.at("intrinsics"));
    rec.dt = j.at("dt").get<double>();
    rec.windows = j.value("windows", std::vector<int>{});
    rec.initial_rms = j.value("initial_rms", 0.0);
    rec.rms_reprojection = j.value("rms_reprojection", 0.0);
    rec.converged = j.value("converged", false);
    rec.iterations = j.value("iterations", 0);
    rec.cost_history = j.value("cost_history", std::vector<double>{});
    for (const auto& l : j.at("landmarks")) {
      rec.landmark_ids.push_back(l.at("id").get<int>());
      rec.landmarks.push_back(vector3_from_json(l.at("xyz")));
    }
    return rec;
  } catch (const json::exception& e) {
    throw ValidationError(std::string("reconstruction JSON: ") + e.what());
  }
}

void save_reconstruction(const std::filesystem::path& path, const Reconstruction& rec) {
  write_json(path, to_json(rec));
}

Reconstruction load_reconstruction(const std::filesystem::path& path) {
  return reconstruction_from_json(read_json(path));
}

void save_ply(const std::filesystem::path& path, std::span<const Eigen::Vector3d> points) {
  std::ofstream out(path);
  if (!out) throw ValidationError("cannot write " + path.string());
  out << "ply\nformat ascii 1.0\nelement vertex " << points.size()
      << "\nproperty double x\nproperty double y\nproperty double z\nend_header\n";
  out.precision(17);
  for (const auto& p : points) out << p.x() << ' ' << p.y() << ' ' << p.z() << '\n';
}

std::vector<Eigen::Vector3d> load_ply(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot read " + path.string());
  std::string line;
  std::size_t lineno = 0;
  std::size_t count = 0;
  bool header_done = false;
  while (std::getline(in, line)) {
    ++lineno;
    if (lineno == 1 && line != "ply") throw ParseError(lineno, "missing ply magic");
    if (line.rfind("format", 0) == 0 && line.find("ascii") == std::string::npos) {
      throw ParseError(lineno, "only ASCII PLY is supported");
    }
    if (line.rfind("element vertex", 0) == 0) count = std::stoul(line.substr(15));
    if (line == "end_header") {
      header_done = true;
      break;
    }
  }
  if (!header_done) throw ParseError(lineno, "missing end_header");
  std::vector<Eigen::Vector3d> pts;
  pts.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    if (!std::getline(in, line)) throw ParseError(lineno + 1, "truncated vertex list");
    ++lineno;
    std::istringstream ss(line);
    Eigen::Vector3d p;
    if (!(ss >> p.x() >> p.y() >> p.z())) throw ParseError(lineno, "malformed vertex");
    pts.push_back(p);
  }
  return pts;
}

json read_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot read " + path.string());
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw ParseError(0, path.string() + ": " + e.what());
  }
}

void write_json(const std::filesystem::path& path, const json& j) {
  std::ofstream out(path);
  if (!out) throw ValidationError("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

}  // namespace esfo
