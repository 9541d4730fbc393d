#include "gr/camera.hpp"

#include <fstream>
#include <numbers>

#include <json.hpp>

#include "gr/error.hpp"

namespace gr {

using nlohmann::json;

Eigen::Matrix4d CameraView::world_to_camera() const {
  Eigen::Matrix4d m = Eigen::Matrix4d::Identity();
  m.topLeftCorner<3, 3>() = rotation;
  m.topRightCorner<3, 1>() = translation;
  return m;
}

CameraView::Projection CameraView::project(const Vec3& p) const {
  const Vec3 c = to_camera(p);
  Projection out;
  out.depth = c.z();
  out.in_front = c.z() > 0.0;
  if (c.z() != 0.0) {
    out.pixel = Vec2(fx * c.x() / c.z() + cx, fy * c.y() / c.z() + cy);
  } else {
    out.pixel = Vec2(cx, cy);
  }
  return out;
}

void CameraView::validate() const {
  if (width <= 0 || height <= 0) throw ValidationError("camera resolution must be positive");
  if (!(fx > 0.0) || !(fy > 0.0)) throw ValidationError("camera focal lengths must be positive");
  const double err = (rotation.transpose() * rotation - Mat3::Identity()).cwiseAbs().maxCoeff();
  if (!(err <= 1e-6)) throw ValidationError("camera rotation is not orthonormal (error " + std::to_string(err) + ")");
  if (rotation.determinant() < 0.0) throw ValidationError("camera rotation is a reflection");
}

CameraView CameraView::from_matrix(int width, int height, double fx, double fy, double cx, double cy,
                                   const Eigen::Matrix4d& w2c) {
  CameraView v;
  v.width = width;
  v.height = height;
  v.fx = fx;
  v.fy = fy;
  v.cx = cx;
  v.cy = cy;
  v.rotation = w2c.topLeftCorner<3, 3>();
  v.translation = w2c.topRightCorner<3, 1>();
  return v;
}

CameraView CameraView::look_at(const Vec3& eye, const Vec3& target, int width, int height, double fov_y_degrees,
                               const Vec3& up) {
  const Vec3 forward = (target - eye).normalized();
  Vec3 right = forward.cross(up);
  if (right.norm() < 1e-12) right = forward.cross(Vec3::UnitZ());
  right.normalize();
  const Vec3 down = forward.cross(right);
  CameraView v;
  v.width = width;
  v.height = height;
  v.rotation.row(0) = right.transpose();
  v.rotation.row(1) = down.transpose();
  v.rotation.row(2) = forward.transpose();
  v.translation = -v.rotation * eye;
  const double half = fov_y_degrees * std::numbers::pi / 360.0;
  v.fy = 0.5 * height / std::tan(half);
  v.fx = v.fy;
  v.cx = 0.5 * width;
  v.cy = 0.5 * height;
  return v;
}

std::vector<CameraView> make_view_ring(const ViewRingOptions& o) {
  if (o.count < 1) throw ValidationError("view ring needs at least one view");
  if (!(o.radius > 0.0)) throw ValidationError("view ring radius must be positive");
  std::vector<double> elevations = o.elevations_degrees;
  if (elevations.empty()) elevations.push_back(0.0);
  std::vector<CameraView> views;
  views.reserve(o.count);
  const double deg = std::numbers::pi / 180.0;
  for (int i = 0; i < o.count; ++i) {
    const double az = (o.azimuth_offset_degrees + 360.0 * i / o.count) * deg;
    const double el = elevations[i % elevations.size()] * deg;
    const Vec3 dir(std::cos(el) * std::sin(az), std::sin(el), std::cos(el) * std::cos(az));
    views.push_back(CameraView::look_at(o.target + o.radius * dir, o.target, o.width, o.height, o.fov_y_degrees));
  }
  return views;
}

ViewRingOptions default_ring_for(const Aabb& bounds, int count, int resolution) {
  ViewRingOptions o;
  o.count = count;
  o.target = bounds.center();
  o.radius = 1.5 * bounds.diagonal();
  o.width = resolution;
  o.height = resolution;
  return o;
}

std::vector<CameraView> load_cameras_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open camera file " + path.string());
  json doc;
  try {
    in >> doc;
  } catch (const json::exception& e) {
    throw ValidationError(path.string() + ": " + e.what());
  }
  if (!doc.is_array()) throw ValidationError(path.string() + ": expected an array of cameras");
  std::vector<CameraView> views;
  for (std::size_t i = 0; i < doc.size(); ++i) {
    const auto& c = doc[i];
    try {
      const auto m = c.at("world_to_camera").get<std::vector<double>>();
      if (m.size() != 16) throw ValidationError("world_to_camera must have 16 entries");
      Eigen::Matrix4d w2c;
      for (int r = 0; r < 4; ++r)
        for (int k = 0; k < 4; ++k) w2c(r, k) = m[4 * r + k];
      auto v = CameraView::from_matrix(c.at("width").get<int>(), c.at("height").get<int>(), c.at("fx").get<double>(),
                                       c.at("fy").get<double>(), c.at("cx").get<double>(), c.at("cy").get<double>(), w2c);
      v.validate();
      views.push_back(v);
    } catch (const json::exception& e) {
      throw ValidationError(path.string() + ": camera " + std::to_string(i) + ": " + e.what());
    } catch (const ValidationError& e) {
      throw ValidationError(path.string() + ": camera " + std::to_string(i) + ": " + e.what());
    }
  }
  return views;
}

void save_cameras_json(const std::vector<CameraView>& views, const std::filesystem::path& path) {
  json doc = json::array();
  for (const auto& v : views) {
    const Eigen::Matrix4d m = v.world_to_camera();
    std::vector<double> flat;
    for (int r = 0; r < 4; ++r)
      for (int k = 0; k < 4; ++k) flat.push_back(m(r, k));
    doc.push_back({{"width", v.width}, {"height", v.height}, {"fx", v.fx}, {"fy", v.fy}, {"cx", v.cx}, {"cy", v.cy},
                   {"world_to_camera", flat}});
  }
  std::ofstream out(path);
  if (!out) throw IoError("cannot write camera file " + path.string());
  out << doc.dump(2) << "\n";
}

}  // namespace gr
