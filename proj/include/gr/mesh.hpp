#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "gr/vecmath.hpp"

namespace gr {

/// Indexed triangle mesh. Faces are counter-clockwise when seen from outside.
/// `corner_uvs` is either empty or holds one texture coordinate per face corner.
struct TriMesh {
  std::vector<Vec3> vertices;
  std::vector<Face> faces;
  std::vector<Vec2> corner_uvs;

  std::size_t vertex_count() const { return vertices.size(); }
  std::size_t face_count() const { return faces.size(); }
  bool has_uvs() const { return !corner_uvs.empty(); }

  Aabb bounds() const;
  double bbox_diagonal() const { return bounds().diagonal(); }
};

/// Checks index range, repeated indices, edge manifoldness and consistent orientation.
/// Throws ValidationError naming the first offending face or edge.
void validate_mesh(const TriMesh& mesh);

TriMesh parse_obj(std::istream& in, const std::string& source_name = "<stream>");
TriMesh load_obj(const std::filesystem::path& path);

struct ObjWriteOptions {
  std::string mtllib;
  std::string material;
};
void write_obj(std::ostream& out, const TriMesh& mesh, const ObjWriteOptions& options = {});
void save_obj(const TriMesh& mesh, const std::filesystem::path& path, const ObjWriteOptions& options = {});

enum class LaplacianWeighting { Uniform, Cotangent };

/// Two faces sharing the interior edge (v0, v1). `f0` traverses v0 -> v1, `f1` traverses v1 -> v0;
/// `opp0` / `opp1` are the vertices of f0 / f1 not on the edge.
struct Hinge {
  int v0, v1;
  int opp0, opp1;
  int f0, f1;
};

struct AdjacencyIndex {
  std::vector<std::array<int, 2>> edges;          // unique undirected edges, (lo, hi)
  std::vector<std::vector<int>> edge_faces;       // per edge
  std::vector<std::vector<int>> vertex_neighbors; // sorted
  std::vector<Hinge> hinges;                      // adjacent face pairs (interior edges)
  std::vector<double> edge_weights;               // Laplacian w_jk, one per edge
  std::size_t boundary_edge_count = 0;

  static AdjacencyIndex build(const TriMesh& mesh, LaplacianWeighting weighting = LaplacianWeighting::Uniform);

  std::size_t face_pair_count() const { return hinges.size(); }
  std::size_t vertex_pair_count() const { return edges.size(); }
  int find_edge(int a, int b) const;
};

/// Area below which a face counts as degenerate: 1e-12 * bbox_diagonal^2.
double degenerate_area_threshold(const TriMesh& mesh);

/// Unnormalized face normals (cross product, length = 2 * area).
std::vector<Vec3> face_area_normals(const TriMesh& mesh);
std::vector<Vec3> face_normals(const TriMesh& mesh);

/// Area-weighted vertex normals, normalized. Isolated vertices get a zero normal
/// and are reported through `isolated` when provided.
std::vector<Vec3> vertex_normals(const TriMesh& mesh, std::vector<int>* isolated = nullptr);

/// Given dL/d(unit vertex normals), returns dL/d(vertex positions).
std::vector<Vec3> vertex_normals_backward(const TriMesh& mesh, std::span<const Vec3> grad_normals);

struct BoundaryLoops {
  std::vector<std::vector<int>> loops;
  bool nonmanifold_vertex = false;
};
BoundaryLoops boundary_loops(const TriMesh& mesh);

/// Area-uniform surface samples, deterministic for a given seed.
std::vector<Vec3> sample_surface(const TriMesh& mesh, std::size_t count, std::uint64_t seed);

/// Symmetric mean point-to-surface distance, 0.5 * (mean d(A->B) + mean d(B->A)).
double chamfer_distance(const TriMesh& a, const TriMesh& b, std::size_t samples, std::uint64_t seed = 7);

/// Mean relative edge-length change |l - l0| / l0 over all edges; meshes share connectivity.
double mean_edge_length_drift(const TriMesh& reference, const TriMesh& deformed);

}  // namespace gr
