#include "esfo/colmap_io.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <regex>
#include <sstream>

#include <Eigen/Geometry>

#include "esfo/errors.hpp"

namespace esfo {

namespace {

// Non-comment, non-empty lines with their 1-based line numbers.
std::vector<std::pair<std::size_t, std::string>> data_lines(const std::filesystem::path& path,
                                                            bool keep_empty) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot read " + path.string());
  std::vector<std::pair<std::size_t, std::string>> out;
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!line.empty() && line[0] == '#') continue;
    if (line.find_first_not_of(" \t") == std::string::npos && !keep_empty) continue;
    out.emplace_back(n, line);
  }
  return out;
}

CameraPose pose_from_qt(const Eigen::Vector4d& q, const Eigen::Vector3d& t) {
  CameraPose p;
  p.R = Eigen::Quaterniond(q(0), q(1), q(2), q(3)).normalized().toRotationMatrix();
  p.t = t;
  return p;
}

}  // namespace

int window_from_image_name(const std::string& name) {
  static const std::regex pattern(R"(win_(\d+))");
  std::smatch m;
  if (!std::regex_search(name, m, pattern)) {
    throw ValidationError("image name carries no window index: " + name);
  }
  return std::stoi(m[1].str());
}

std::string image_name_for_window(int window) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "win_%06d.png", window);
  return buf;
}

ColmapModel read_colmap_text(const std::filesystem::path& dir) {
  ColmapModel model;

  for (const auto& [ln, line] : data_lines(dir / "cameras.txt", false)) {
    std::istringstream ss(line);
    int id = 0, w = 0, h = 0;
    std::string kind;
    if (!(ss >> id >> kind >> w >> h)) throw ParseError(ln, "malformed camera line");
    CameraIntrinsics K;
    K.width = w;
    K.height = h;
    if (kind == "PINHOLE") {
      if (!(ss >> K.fx >> K.fy >> K.cx >> K.cy)) throw ParseError(ln, "PINHOLE needs 4 params");
    } else if (kind == "SIMPLE_PINHOLE") {
      if (!(ss >> K.fx >> K.cx >> K.cy)) throw ParseError(ln, "SIMPLE_PINHOLE needs 3 params");
      K.fy = K.fx;
    } else {
      throw ParseError(ln, "unsupported camera model " + kind);
    }
    K.validate();
    model.cameras[id] = K;
  }

  // Images come in pairs of lines; the second (points) line may be empty.
  const auto lines = data_lines(dir / "images.txt", true);
  std::size_t i = 0;
  while (i < lines.size()) {
    const auto& [ln, header] = lines[i];
    if (header.find_first_not_of(" \t") == std::string::npos) {
      ++i;
      continue;
    }
    std::istringstream ss(header);
    ColmapModel::Image img;
    Eigen::Vector4d q;
    Eigen::Vector3d t;
    if (!(ss >> img.id >> q(0) >> q(1) >> q(2) >> q(3) >> t(0) >> t(1) >> t(2) >> img.camera_id >>
          img.name)) {
      throw ParseError(ln, "malformed image line");
    }
    img.pose = pose_from_qt(q, t);
    img.window = window_from_image_name(img.name);
    if (i + 1 < lines.size()) {
      std::istringstream ps(lines[i + 1].second);
      double x = 0, y = 0;
      long pid = 0;
      while (ps >> x >> y >> pid) img.points2d.emplace_back(Eigen::Vector2d(x, y), pid);
    }
    model.images.push_back(std::move(img));
    i += 2;
  }
  std::stable_sort(model.images.begin(), model.images.end(),
                   [](const auto& a, const auto& b) { return a.window < b.window; });

  const auto points_file = dir / "points3D.txt";
  if (std::filesystem::exists(points_file)) {
    for (const auto& [ln, line] : data_lines(points_file, false)) {
      std::istringstream ss(line);
      ColmapModel::Point p;
      int r = 0, g = 0, b = 0;
      double err = 0;
      if (!(ss >> p.id >> p.xyz.x() >> p.xyz.y() >> p.xyz.z() >> r >> g >> b >> err)) {
        throw ParseError(ln, "malformed point line");
      }
      int image_id = 0, idx = 0;
      while (ss >> image_id >> idx) p.track.emplace_back(image_id, idx);
      model.points.push_back(std::move(p));
    }
  }
  return model;
}

void write_colmap_text(const std::filesystem::path& dir, const ColmapModel& model) {
  std::filesystem::create_directories(dir);
  {
    std::ofstream out(dir / "cameras.txt");
    out.precision(17);
    out << "# CAMERA_ID, MODEL, WIDTH, HEIGHT, PARAMS[]\n";
    for (const auto& [id, K] : model.cameras) {
      out << id << " PINHOLE " << K.width << ' ' << K.height << ' ' << K.fx << ' ' << K.fy << ' '
          << K.cx << ' ' << K.cy << '\n';
    }
  }
  {
    std::ofstream out(dir / "images.txt");
    out.precision(17);
    out << "# IMAGE_ID, QW, QX, QY, QZ, TX, TY, TZ, CAMERA_ID, NAME\n"
        << "# POINTS2D[] as (X, Y, POINT3D_ID)\n";
    for (const auto& img : model.images) {
      const Eigen::Quaterniond q(img.pose.R);
      out << img.id << ' ' << q.w() << ' ' << q.x() << ' ' << q.y() << ' ' << q.z() << ' '
          << img.pose.t.x() << ' ' << img.pose.t.y() << ' ' << img.pose.t.z() << ' '
          << img.camera_id << ' ' << img.name << '\n';
      for (std::size_t k = 0; k < img.points2d.size(); ++k) {
        if (k) out << ' ';
        out << img.points2d[k].first.x() << ' ' << img.points2d[k].first.y() << ' '
            << img.points2d[k].second;
      }
      out << '\n';
    }
  }
  {
    std::ofstream out(dir / "points3D.txt");
    out.precision(17);
    out << "# POINT3D_ID, X, Y, Z, R, G, B, ERROR, TRACK[] as (IMAGE_ID, POINT2D_IDX)\n";
    for (const auto& p : model.points) {
      out << p.id << ' ' << p.xyz.x() << ' ' << p.xyz.y() << ' ' << p.xyz.z() << " 128 128 128 0";
      for (const auto& [img, idx] : p.track) out << ' ' << img << ' ' << idx;
      out << '\n';
    }
  }
}

PoseSet colmap_poses(const ColmapModel& model, double dt) {
  PoseSet poses;
  poses.reserve(model.images.size());
  for (const auto& img : model.images) {
    CameraPose p = img.pose;
    p.time = img.window * dt;
    poses.push_back(p);
  }
  return poses;
}

SfmSolution colmap_solution(const ColmapModel& model) {
  SfmSolution s;
  if (!model.cameras.empty()) s.intrinsics = model.cameras.begin()->second;
  for (const auto& img : model.images) s.poses[img.window] = img.pose;
  for (const auto& p : model.points) {
    s.landmarks.push_back(p.xyz);
    s.landmark_ids.push_back(static_cast<int>(p.id));
  }
  return s;
}

std::vector<Observation> colmap_observations(const ColmapModel& model) {
  std::map<long, int> index;
  for (std::size_t i = 0; i < model.points.size(); ++i) {
    index[model.points[i].id] = static_cast<int>(i);
  }
  std::vector<Observation> obs;
  for (const auto& img : model.images) {
    for (const auto& [px, pid] : img.points2d) {
      const auto it = index.find(pid);
      if (pid < 0 || it == index.end()) continue;
      obs.push_back({it->second, img.window, px});
    }
  }
  return obs;
}

ColmapModel make_colmap_model(const SfmSolution& solution,
                              const std::vector<Observation>& observations) {
  ColmapModel model;
  model.cameras[1] = solution.intrinsics;
  std::map<int, int> image_of_window;
  int next_id = 1;
  for (const auto& [k, pose] : solution.poses) {
    ColmapModel::Image img;
    img.id = next_id++;
    img.camera_id = 1;
    img.window = k;
    img.name = image_name_for_window(k);
    img.pose = pose;
    image_of_window[k] = static_cast<int>(model.images.size());
    model.images.push_back(std::move(img));
  }
  for (std::size_t i = 0; i < solution.landmarks.size(); ++i) {
    ColmapModel::Point p;
    p.id = i < solution.landmark_ids.size() ? solution.landmark_ids[i] : static_cast<long>(i);
    p.xyz = solution.landmarks[i];
    model.points.push_back(std::move(p));
  }
  for (const auto& o : observations) {
    const auto it = image_of_window.find(o.window);
    if (it == image_of_window.end()) continue;
    auto& img = model.images[it->second];
    auto& pt = model.points.at(o.landmark);
    pt.track.emplace_back(img.id, static_cast<int>(img.points2d.size()));
    img.points2d.emplace_back(o.px, pt.id);
  }
  return model;
}

}  // namespace esfo
