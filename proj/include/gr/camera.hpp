#pragma once

#include <filesystem>
#include <vector>

#include "gr/vecmath.hpp"

namespace gr {

/// Pinhole camera. Camera frame: x right, y down, z forward (depth > 0 in front).
/// Pixel (col, row) has its center at (col + 0.5, row + 0.5).
struct CameraView {
  int width = 800;
  int height = 800;
  double fx = 0, fy = 0, cx = 0, cy = 0;
  Mat3 rotation = Mat3::Identity();  // world -> camera
  Vec3 translation = Vec3::Zero();

  Vec3 center() const { return -rotation.transpose() * translation; }
  Vec3 to_camera(const Vec3& p) const { return rotation * p + translation; }
  Eigen::Matrix4d world_to_camera() const;

  struct Projection {
    Vec2 pixel;
    double depth = 0;
    bool in_front = false;  // false when depth <= 0; the caller decides how to clip
  };
  Projection project(const Vec3& p) const;

  std::size_t pixel_count() const { return static_cast<std::size_t>(width) * static_cast<std::size_t>(height); }

  /// Throws ValidationError unless the rotation is orthonormal and focal lengths are positive.
  void validate() const;

  static CameraView from_matrix(int width, int height, double fx, double fy, double cx, double cy,
                                const Eigen::Matrix4d& world_to_camera);
  static CameraView look_at(const Vec3& eye, const Vec3& target, int width, int height, double fov_y_degrees,
                            const Vec3& up = Vec3::UnitY());
};

struct ViewRingOptions {
  int count = 24;
  Vec3 target = Vec3::Zero();
  double radius = 3.0;
  std::vector<double> elevations_degrees = {-10.0, 15.0};
  int width = 800;
  int height = 800;
  double fov_y_degrees = 45.0;
  double azimuth_offset_degrees = 0.0;
};

/// View i sits at azimuth offset + 360 i / count and elevation elevations[i % E], looking at target.
std::vector<CameraView> make_view_ring(const ViewRingOptions& options);

/// Ring defaults derived from a mesh bounding box: radius 1.5 x diagonal, centered on the box.
ViewRingOptions default_ring_for(const Aabb& bounds, int count = 24, int resolution = 800);

std::vector<CameraView> load_cameras_json(const std::filesystem::path& path);
void save_cameras_json(const std::vector<CameraView>& views, const std::filesystem::path& path);

}  // namespace gr
