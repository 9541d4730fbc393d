#pragma once

#include <cstdint>
#include <vector>

#include "gr/guidance.hpp"
#include "gr/mesh.hpp"
#include "gr/nets.hpp"
#include "gr/raster.hpp"

namespace gr {

/// Per-view hole masks captured once at the start of the fine stage.
using HoleMaskSet = std::vector<ImageF>;

/// Term weights. A zero weight skips the term entirely.
struct TermWeights {
  double mask = 0, rgb = 0, normal = 0, hole = 0;
};

/// Unweighted per-view loss values; terms with zero weight stay 0.
struct ViewTerms {
  double mask = 0, rgb = 0, normal = 0, hole = 0;
  std::size_t rgb_pixels = 0, normal_pixels = 0;
};

/// Inputs of one view's image-space losses.
struct ViewTargets {
  const CameraView* view = nullptr;
  const ImageF* mask = nullptr;
  const ImageF* rgb = nullptr;
  const ImageF* normal = nullptr;
  const ImageF* hole_reference = nullptr;
};

struct ViewLossOptions {
  double tau = 1.0;
  double band_px = 12.0;
  std::size_t rgb_max_pixels = 0;  // 0 uses every covered pixel
  std::uint64_t rgb_sample_seed = 0;
};

/// Gradients of one view. `vertices` holds dL/dv through positions; `normals` holds dL/d(unit vertex normals),
/// which callers sum over views before a single vertex_normals_backward.
struct ViewGradients {
  std::vector<Vec3> vertices;
  std::vector<Vec3> normals;
  VectorXd shader;
};

/// Evaluates the image-space terms of one view from a single rasterization and accumulates
/// weighted gradients (if `grads` is non-null).
ViewTerms evaluate_view(const TriMesh& mesh, const AdjacencyIndex& adjacency, const std::vector<Vec3>& unit_normals,
                        const ViewTargets& targets, const NeuralShader* shader, const TermWeights& weights,
                        const ViewLossOptions& options, ViewGradients* grads);

/// Mean over views of per-pixel MSE between the soft silhouette and the guidance mask.
double loss_mask(const TriMesh& mesh, const AdjacencyIndex& adjacency, const GuidanceBundle& bundle, double tau,
                 std::vector<Vec3>* grad = nullptr);

/// (1/N) sum over adjacent face pairs of (1 - n_a . n_b)^2; pairs with a degenerate face are skipped.
double loss_normal_consistency(const TriMesh& mesh, const AdjacencyIndex& adjacency, std::vector<Vec3>* grad = nullptr);

/// (1/M) sum over edges of w_jk |v_j - v_k|^2.
double loss_laplacian(const TriMesh& mesh, const AdjacencyIndex& adjacency, std::vector<Vec3>* grad = nullptr);

/// Mean over views of the L1 error between shaded rasterized surface points and guidance RGB,
/// taken over pixels covered both by the render and by the guidance mask.
double loss_rgb(const TriMesh& mesh, const NeuralShader& shader, const GuidanceBundle& bundle,
                std::vector<Vec3>* grad_vertices = nullptr, VectorXd* grad_shader = nullptr);

/// Mean over views of the channel-mean L1 error between rasterized camera-space normals and guidance
/// normals (both decoded to [-1, 1]) over pixels covered by render and guidance mask.
double loss_normal(const TriMesh& mesh, const GuidanceBundle& bundle, std::vector<Vec3>* grad = nullptr);

/// True where the visible surface faces away from the camera: n~ . (v~ - c) > 0.
ImageF detect_hole_mask(const TriMesh& mesh, const CameraView& view);
HoleMaskSet capture_hole_masks(const TriMesh& mesh, const std::vector<CameraView>& views);

/// Mean over views of the per-image MSE between current and reference hole masks.
/// The backward pass treats the binarization as identity.
double loss_hole(const TriMesh& mesh, const std::vector<CameraView>& views, const HoleMaskSet& reference,
                 std::vector<Vec3>* grad = nullptr);

/// Mask IoU between a hard render of the mesh and each guidance mask, averaged over views.
double silhouette_iou(const TriMesh& mesh, const GuidanceBundle& bundle);

}  // namespace gr
