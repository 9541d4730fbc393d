#include "gr/spatial.hpp"

#include <algorithm>
#include <numbers>

namespace gr {

// Ericson, Real-Time Collision Detection, 5.1.5.
Vec3 closest_point_on_triangle(const Vec3& p, const Vec3& a, const Vec3& b, const Vec3& c, Vec3* bary) {
  auto out = [bary](const Vec3& q, double u, double v, double w) {
    if (bary) *bary = Vec3(u, v, w);
    return q;
  };
  const Vec3 ab = b - a, ac = c - a, ap = p - a;
  const double d1 = ab.dot(ap), d2 = ac.dot(ap);
  if (d1 <= 0.0 && d2 <= 0.0) return out(a, 1, 0, 0);

  const Vec3 bp = p - b;
  const double d3 = ab.dot(bp), d4 = ac.dot(bp);
  if (d3 >= 0.0 && d4 <= d3) return out(b, 0, 1, 0);

  const double vc = d1 * d4 - d3 * d2;
  if (vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0) {
    const double v = d1 / (d1 - d3);
    return out(a + v * ab, 1 - v, v, 0);
  }

  const Vec3 cp = p - c;
  const double d5 = ab.dot(cp), d6 = ac.dot(cp);
  if (d6 >= 0.0 && d5 <= d6) return out(c, 0, 0, 1);

  const double vb = d5 * d2 - d1 * d6;
  if (vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0) {
    const double w = d2 / (d2 - d6);
    return out(a + w * ac, 1 - w, 0, w);
  }

  const double va = d3 * d6 - d5 * d4;
  if (va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0) {
    const double w = (d4 - d3) / ((d4 - d3) + (d5 - d6));
    return out(b + w * (c - b), 0, 1 - w, w);
  }

  const double denom = 1.0 / (va + vb + vc);
  const double v = vb * denom, w = vc * denom;
  return out(a + ab * v + ac * w, 1 - v - w, v, w);
}

TriangleBvh::TriangleBvh(const TriMesh& mesh) : mesh_(&mesh) {
  const std::size_t n = mesh.faces.size();
  order_.resize(n);
  face_boxes_.resize(n);
  centroids_.resize(n);
  for (std::size_t f = 0; f < n; ++f) {
    order_[f] = static_cast<int>(f);
    for (int v : mesh.faces[f]) face_boxes_[f].extend(mesh.vertices[v]);
    centroids_[f] = face_boxes_[f].center();
  }
  nodes_.reserve(2 * n + 1);
  if (n > 0) build(0, static_cast<int>(n), 0);
}

int TriangleBvh::build(int first, int count, int depth) {
  const int id = static_cast<int>(nodes_.size());
  nodes_.emplace_back();
  Aabb box;
  Aabb cbox;
  for (int i = first; i < first + count; ++i) {
    box.extend(face_boxes_[order_[i]]);
    cbox.extend(centroids_[order_[i]]);
  }
  nodes_[id].box = box;
  if (count <= 4 || depth > 48) {
    nodes_[id].first = first;
    nodes_[id].count = count;
    return id;
  }
  int axis = 0;
  (cbox.hi - cbox.lo).maxCoeff(&axis);
  const int mid = first + count / 2;
  std::nth_element(order_.begin() + first, order_.begin() + mid, order_.begin() + first + count, [&](int a, int b) {
    if (centroids_[a][axis] != centroids_[b][axis]) return centroids_[a][axis] < centroids_[b][axis];
    return a < b;
  });
  const int left = build(first, mid - first, depth + 1);
  const int right = build(mid, first + count - mid, depth + 1);
  nodes_[id].left = left;
  nodes_[id].right = right;
  return id;
}

ClosestHit TriangleBvh::closest(const Vec3& p) const {
  ClosestHit best;
  best.squared_distance = std::numeric_limits<double>::infinity();
  if (nodes_.empty()) return best;
  int stack[128];
  int top = 0;
  stack[top++] = 0;
  while (top > 0) {
    const Node& node = nodes_[stack[--top]];
    if (node.box.squared_distance(p) >= best.squared_distance) continue;
    if (node.left < 0) {
      for (int i = node.first; i < node.first + node.count; ++i) {
        const int f = order_[i];
        const Face& t = mesh_->faces[f];
        const Vec3 q = closest_point_on_triangle(p, mesh_->vertices[t[0]], mesh_->vertices[t[1]], mesh_->vertices[t[2]]);
        const double d = (q - p).squaredNorm();
        if (d < best.squared_distance || (d == best.squared_distance && f < best.face)) {
          best = {q, f, d};
        }
      }
      continue;
    }
    const double dl = nodes_[node.left].box.squared_distance(p);
    const double dr = nodes_[node.right].box.squared_distance(p);
    // Push the farther child first so the nearer one is visited next.
    if (dl <= dr) {
      stack[top++] = node.right;
      stack[top++] = node.left;
    } else {
      stack[top++] = node.left;
      stack[top++] = node.right;
    }
  }
  return best;
}

// Van Oosterom & Strackee solid angle per triangle.
double winding_number(const TriMesh& mesh, const Vec3& p) {
  double total = 0.0;
  for (const Face& f : mesh.faces) {
    const Vec3 a = mesh.vertices[f[0]] - p;
    const Vec3 b = mesh.vertices[f[1]] - p;
    const Vec3 c = mesh.vertices[f[2]] - p;
    const double la = a.norm(), lb = b.norm(), lc = c.norm();
    const double num = a.dot(b.cross(c));
    const double den = la * lb * lc + a.dot(b) * lc + b.dot(c) * la + c.dot(a) * lb;
    total += 2.0 * std::atan2(num, den);
  }
  return total / (4.0 * std::numbers::pi);
}

}  // namespace gr
