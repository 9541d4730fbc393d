#pragma once

#include <vector>

#include "gr/mesh.hpp"

namespace gr {

/// Closest point on triangle (a, b, c) to p, with barycentric coordinates of the result.
Vec3 closest_point_on_triangle(const Vec3& p, const Vec3& a, const Vec3& b, const Vec3& c, Vec3* bary = nullptr);

struct ClosestHit {
  Vec3 point;
  int face = -1;
  double squared_distance = 0.0;
};

/// Static AABB tree over the faces of a mesh for closest-point queries.
class TriangleBvh {
 public:
  explicit TriangleBvh(const TriMesh& mesh);

  ClosestHit closest(const Vec3& p) const;
  const TriMesh& mesh() const { return *mesh_; }

 private:
  struct Node {
    Aabb box;
    int left = -1, right = -1;
    int first = 0, count = 0;
  };
  int build(int first, int count, int depth);

  const TriMesh* mesh_;
  std::vector<int> order_;
  std::vector<Aabb> face_boxes_;
  std::vector<Vec3> centroids_;
  std::vector<Node> nodes_;
};

/// Generalized winding number of a closed mesh around p (1 inside, 0 outside).
double winding_number(const TriMesh& mesh, const Vec3& p);

}  // namespace gr
