#pragma once

#include <span>
#include <vector>

#include "gr/camera.hpp"
#include "gr/mesh.hpp"

namespace gr {

/// Per-pixel visibility of a hard z-buffered rasterization. `bary` holds
/// perspective-correct barycentric weights of the owning face.
struct Visibility {
  int width = 0;
  int height = 0;
  std::vector<int> face;  // -1 where no face covers the pixel center
  std::vector<Vec3> bary;
  std::vector<double> depth;

  std::size_t pixel_count() const { return face.size(); }
  bool covered(std::size_t p) const { return face[p] >= 0; }
};

struct RasterOutput : Visibility {
  int channels = 0;
  std::vector<double> attributes;  // pixel_count * channels, zero on background
};

/// Hard rasterization; nearest face wins, ties go to the lower face index.
/// Faces with a vertex at or behind the camera plane are skipped.
Visibility rasterize(const TriMesh& mesh, const CameraView& view);

/// Perspective-correct interpolation of per-vertex attributes (vertex_count * channels).
std::vector<double> interpolate(const Visibility& vis, const TriMesh& mesh, std::span<const double> attributes, int channels);

RasterOutput rasterize_attributes(const TriMesh& mesh, const CameraView& view, std::span<const double> attributes,
                                  int channels);

struct RasterGradients {
  std::vector<double> attributes;  // vertex_count * channels
  std::vector<Vec3> positions;     // vertex_count
};

/// Reverse pass of rasterize_attributes. Gradients flow through the interpolation weights
/// and the projection of the owning faces; coverage changes are not differentiated here.
RasterGradients rasterize_backward(const Visibility& vis, const TriMesh& mesh, const CameraView& view,
                                   std::span<const double> attributes, int channels, std::span<const double> grad_output);

/// Soft coverage: logistic(signed screen distance to the silhouette / tau), positive inside.
struct SoftSilhouette {
  int width = 0;
  int height = 0;
  double tau = 1.0;
  double band = 12.0;
  std::vector<double> coverage;
  std::vector<double> signed_distance;  // clamped to +-band outside the band
  std::vector<int> edge;                // index into `edges`, -1 where coverage is hard
  std::vector<double> edge_t;           // closest-point parameter along that edge
  std::vector<std::array<int, 2>> edges;  // contour edges (vertex ids) considered
};

SoftSilhouette soft_silhouette(const TriMesh& mesh, const AdjacencyIndex& adjacency, const CameraView& view, double tau,
                               const Visibility* visibility = nullptr, double band_px = 12.0);

/// dL/d(vertex positions) given dL/d(coverage) per pixel.
std::vector<Vec3> soft_silhouette_backward(const SoftSilhouette& sil, const TriMesh& mesh, const CameraView& view,
                                           std::span<const double> grad_coverage);

}  // namespace gr
