#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "gr/guidance.hpp"
#include "gr/hash_grid.hpp"
#include "gr/mesh.hpp"

namespace gr {

struct NetfFitOptions {
  int epochs = 8;
  std::size_t batch_size = 8192;
  double grid_lr = 1e-2;
  double head_lr = 1e-3;
  std::uint64_t seed = 0;
  double domain_margin = 0.02;  // fraction of the bbox diagonal added around the field domain
  HashGridOptions grid;
  int head_hidden = 64;
  int head_layers = 2;
};

/// Surface points and target colors of every pixel covered by both the render and the guidance mask.
struct TextureSamples {
  MatrixXd points;  // 3 x N
  MatrixXd colors;  // 3 x N
};
TextureSamples collect_texture_samples(const TriMesh& mesh, const GuidanceBundle& bundle);

struct NetfFitResult {
  NeuralTextureField field;
  std::vector<double> epoch_loss;  // mean L1 over the epoch's batches
};

/// Adam on the field parameters with the mesh frozen. `initial` resumes from a checkpoint.
NetfFitResult fit_netf(const TriMesh& mesh, const GuidanceBundle& bundle, const NetfFitOptions& options,
                       const NeuralTextureField* initial = nullptr);

/// Direct rendering of the field on the rasterized surface.
ImageF render_field(const TriMesh& mesh, const NeuralTextureField& field, const CameraView& view,
                    const Vec3& background = Vec3::Zero());

/// Classic UV-mapped rendering with bilinear texture lookups.
ImageF render_textured(const TriMesh& mesh, const ImageF& texture, const CameraView& view, const Vec3& background = Vec3::Zero());

struct AtlasOptions {
  int resolution = 2048;
  int padding = 10;  // texels kept free around every chart
};

struct Atlas {
  std::vector<Vec2> corner_uvs;
  std::vector<int> face_chart;
  int chart_count = 0;
};

/// Normal-bucketed charts (6 axis directions), grown over shared edges while their planar projections
/// do not overlap, packed with a shelf packer. Throws ValidationError when the charts cannot fit.
Atlas build_atlas(const TriMesh& mesh, const AtlasOptions& options);

struct BakeOptions {
  int resolution = 2048;
  int dilation = 4;
  Vec3 background = Vec3::Zero();
  int retries = 2;  // resolution doublings tried when the atlas does not fit
};

struct BakeResult {
  TriMesh mesh;             // input geometry with uvs
  ImageF texture;           // 3 channels
  std::vector<int> owner;   // face owning each texel before dilation, -1 when empty
  int resolution = 0;
};

/// Keeps existing uvs, otherwise builds an atlas; every covered texel stores the field at its surface point.
BakeResult bake_texture(const TriMesh& mesh, const NeuralTextureField& field, const BakeOptions& options = {});

/// Writes <prefix>.obj (with vt), <prefix>.mtl and <prefix>.png.
void save_textured_mesh(const BakeResult& baked, const std::filesystem::path& prefix);

}  // namespace gr
