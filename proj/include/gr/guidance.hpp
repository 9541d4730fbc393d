#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "gr/camera.hpp"
#include "gr/image.hpp"
#include "gr/mesh.hpp"

namespace gr {

enum class Provenance { GaussianSplat, SyntheticOracle, External };

std::string provenance_name(Provenance p);
Provenance parse_provenance(const std::string& name);

/// Multi-view guidance. Images hold values in [0, 1]: RGB (3 channels), binary masks (1 channel),
/// and normal maps (3 channels) encoded as (n + 1) / 2 in a camera frame with x right, y up, +z toward the camera.
/// `normal` is empty when the bundle carries no normal maps.
struct GuidanceBundle {
  std::vector<CameraView> views;
  std::vector<ImageF> rgb;
  std::vector<ImageF> mask;
  std::vector<ImageF> normal;
  Provenance provenance = Provenance::External;
  nlohmann::json provenance_parameters = nlohmann::json::object();

  std::size_t size() const { return views.size(); }
  bool has_normals() const { return !normal.empty(); }

  /// Throws ValidationError on shape mismatch or non-binary masks.
  void validate() const;
};

/// Layout: cameras.json, view_{i:03}_rgb.png, view_{i:03}_mask.png, view_{i:03}_normal.png, provenance.json.
GuidanceBundle load_bundle(const std::filesystem::path& dir);
void save_bundle(const GuidanceBundle& bundle, const std::filesystem::path& dir);

/// Converts an OpenCV-frame camera-space direction to the normal-map frame and back.
inline Vec3 camera_to_normal_frame(const Vec3& n) { return Vec3(n.x(), -n.y(), -n.z()); }

/// Bilinear lookup with clamped borders; uv (0, 0) is the bottom-left corner of the image.
Vec3 sample_bilinear(const ImageF& texture, const Vec2& uv);

/// Surface color source for synthetic guidance: a UV texture (mesh must carry uvs) or per-vertex colors.
struct SurfaceAppearance {
  ImageF texture;
  std::vector<Vec3> vertex_colors;
  Vec3 uniform_color = Vec3::Constant(0.7);
};

struct SynthOptions {
  bool shading = true;
  double ambient = 0.35;  // headlight: color * (ambient + (1 - ambient) |n . to_camera|)
  Vec3 background = Vec3::Zero();
  bool quantize = true;   // round every channel to 8 bits so in-memory and on-disk bundles agree
};

/// Surface color of pixel p from a visibility pass, before shading.
Vec3 surface_color(const TriMesh& mesh, const SurfaceAppearance& appearance, int face, const Vec3& bary);

/// Renders a known mesh into RGB, mask and normal guidance for every view.
GuidanceBundle synth_guidance(const TriMesh& target, const SurfaceAppearance& appearance,
                              const std::vector<CameraView>& views, const SynthOptions& options = {});

}  // namespace gr
