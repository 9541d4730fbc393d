#pragma once

#include <array>
#include <filesystem>
#include <span>
#include <vector>

#include "gr/camera.hpp"
#include "gr/image.hpp"

namespace gr {

constexpr int kShBasisCount = 16;  // real SH up to degree 3

/// Decoded splat kernels. `sh` holds kShBasisCount * 3 coefficients per kernel,
/// laid out [basis][channel].
struct GaussianCloud {
  std::vector<Vec3> means;
  std::vector<double> opacity;  // in [0, 1]
  std::vector<Vec3> scales;     // positive
  std::vector<Eigen::Quaterniond> rotations;
  std::vector<double> sh;

  std::size_t size() const { return means.size(); }
  std::span<const double> coefficients(std::size_t k) const {
    return {sh.data() + k * kShBasisCount * 3, static_cast<std::size_t>(kShBasisCount * 3)};
  }
  Mat3 covariance(std::size_t k) const;
  void validate() const;
};

/// Binary little-endian PLY in the de facto splat layout (x y z f_dc_* f_rest_0..44 opacity scale_* rot_*).
/// Opacity is stored as a logit, scales as logarithms, rotations as (w, x, y, z).
GaussianCloud load_gaussian_ply(const std::filesystem::path& path);
void save_gaussian_ply(const GaussianCloud& cloud, const std::filesystem::path& path);

/// Real SH color for a unit direction, including the +0.5 offset, clamped to [0, 1].
Vec3 sh_eval(std::span<const double> coeffs, const Vec3& direction, int degree = 3);

/// Value of the 16 real SH basis functions for a unit direction.
std::array<double, kShBasisCount> sh_basis(const Vec3& direction);

struct SplatOptions {
  Vec3 background = Vec3::Zero();
  double low_pass = 0.3;         // px^2 added to the projected covariance diagonal
  double cutoff_sigma = 3.0;     // kernels evaluate to zero beyond this Mahalanobis radius
  double coverage_cutoff = 0.5;  // accumulated alpha above which a mask pixel is foreground
  int sh_degree = 3;
  int tile_size = 16;
};

/// A kernel after EWA projection into one view.
struct ProjectedSplat {
  std::size_t index = 0;
  Vec2 center;
  Eigen::Matrix2d conic;  // inverse of the 2D covariance
  double depth = 0.0;
  double opacity = 0.0;
  Vec3 color;
  double radius = 0.0;  // pixel radius of the cutoff ellipse's bounding circle
};

/// Projects, culls kernels behind the camera and sorts front to back by mean depth (ties by index).
std::vector<ProjectedSplat> project_splats(const GaussianCloud& cloud, const CameraView& view, const SplatOptions& options);

/// alpha = min(1, opacity * exp(-0.5 d^T conic d)) inside the cutoff, else 0.
double splat_alpha(const ProjectedSplat& s, const Vec2& pixel_center, double cutoff_sigma);

struct SplatImage {
  ImageF rgb;    // 3 channels
  ImageF alpha;  // accumulated alpha, 1 channel
};

/// Tile-binned front-to-back alpha blending; residual transmittance multiplies the background.
SplatImage render_splats(const GaussianCloud& cloud, const CameraView& view, const SplatOptions& options = {});

ImageF render_rgb(const GaussianCloud& cloud, const CameraView& view, const SplatOptions& options = {});

/// Foreground where the accumulated alpha of kernels with opacity >= threshold exceeds the coverage cutoff.
ImageF render_mask(const GaussianCloud& cloud, const CameraView& view, double threshold, const SplatOptions& options = {});

}  // namespace gr
