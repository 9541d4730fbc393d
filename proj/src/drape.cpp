#include "gr/drape.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "gr/error.hpp"
#include "gr/smoother.hpp"
#include "gr/spatial.hpp"

namespace gr {
namespace {

/// Greedy coloring so that no two constraints of one color share a vertex.
template <std::size_t K>
std::vector<std::vector<int>> color_constraints(const std::vector<std::array<int, K>>& verts, std::size_t vertex_count) {
  std::vector<std::vector<int>> used(vertex_count);
  std::vector<std::vector<int>> colors;
  for (std::size_t c = 0; c < verts.size(); ++c) {
    int color = 0;
    for (;; ++color) {
      bool clash = false;
      for (int v : verts[c]) {
        for (int u : used[v]) clash |= u == color;
      }
      if (!clash) break;
    }
    if (color >= static_cast<int>(colors.size())) colors.resize(color + 1);
    colors[color].push_back(static_cast<int>(c));
    for (int v : verts[c]) used[v].push_back(color);
  }
  return colors;
}

double wrap_angle(double a) {
  while (a > std::numbers::pi) a -= 2.0 * std::numbers::pi;
  while (a <= -std::numbers::pi) a += 2.0 * std::numbers::pi;
  return a;
}

}  // namespace

void PbdConfig::validate() const {
  if (iterations < 0 || substeps < 1) throw ValidationError("PBD iterations must be >= 0 and substeps >= 1");
  if (!(stretch_stiffness >= 0.0 && stretch_stiffness <= 1.0) || !(bending_stiffness >= 0.0 && bending_stiffness <= 1.0)) {
    throw ValidationError("PBD stiffnesses must lie in [0, 1]");
  }
  if (!(collision_offset >= 0.0)) throw ValidationError("collision offset must be non-negative");
}

void require_watertight(const TriMesh& body) {
  if (body.face_count() == 0) throw ValidationError("body mesh is empty");
  validate_mesh(body);
  const AdjacencyIndex adj = AdjacencyIndex::build(body);
  if (adj.boundary_edge_count > 0) {
    throw ValidationError("body mesh is not watertight: " + std::to_string(adj.boundary_edge_count) + " boundary edges");
  }
}

PenetrationReport penetration_check(const TriMesh& garment, const TriMesh& body, double tolerance) {
  require_watertight(body);
  PenetrationReport r;
  const Aabb box = body.bounds();
  const TriangleBvh bvh(body);
  for (std::size_t v = 0; v < garment.vertex_count(); ++v) {
    const Vec3& p = garment.vertices[v];
    if (box.squared_distance(p) > 0.0) continue;
    if (winding_number(body, p) <= 0.5) continue;
    const double depth = std::sqrt(bvh.closest(p).squared_distance);
    if (depth <= tolerance) continue;
    ++r.count;
    if (depth > r.worst_depth) {
      r.worst_depth = depth;
      r.worst_vertex = static_cast<int>(v);
    }
  }
  return r;
}

DrapeResult pbd_push_out(const TriMesh& garment, const TriMesh& body, const PbdConfig& cfg) {
  cfg.validate();
  validate_mesh(garment);
  require_watertight(body);
  const double tol = cfg.tolerance > 0.0 ? cfg.tolerance : 1e-4 * body.bbox_diagonal();
  DrapeResult res;
  res.mesh = garment;
  res.before = penetration_check(garment, body, tol);
  TriMesh& m = res.mesh;
  const std::size_t V = m.vertex_count();

  const AdjacencyIndex adj = AdjacencyIndex::build(garment);
  std::vector<double> rest_len(adj.edges.size());
  for (std::size_t e = 0; e < adj.edges.size(); ++e) {
    rest_len[e] = (garment.vertices[adj.edges[e][0]] - garment.vertices[adj.edges[e][1]]).norm();
  }
  std::vector<std::array<int, 4>> hinge_verts;
  std::vector<double> rest_angle;
  const double eps = 2.0 * degenerate_area_threshold(garment);
  const auto area_n = face_area_normals(garment);
  std::vector<int> hinge_ids;
  for (std::size_t h = 0; h < adj.hinges.size(); ++h) {
    const Hinge& hg = adj.hinges[h];
    if (area_n[hg.f0].norm() <= eps || area_n[hg.f1].norm() <= eps) continue;
    hinge_ids.push_back(static_cast<int>(h));
    hinge_verts.push_back({hg.v0, hg.v1, hg.opp0, hg.opp1});
    rest_angle.push_back(hinge_angle(garment, hg));
  }
  const auto edge_colors = color_constraints<2>(adj.edges, V);
  const auto hinge_colors = color_constraints<4>(hinge_verts, V);

  const Aabb box = body.bounds();
  const TriangleBvh bvh(body);
  const auto body_normals = face_normals(body);

  // Returns the largest displacement applied.
  auto collide = [&]() {
    double moved = 0.0;
    for (std::size_t v = 0; v < V; ++v) {
      Vec3& p = m.vertices[v];
      if (box.squared_distance(p) > 0.0) continue;
      if (winding_number(body, p) <= 0.5) continue;
      const ClosestHit hit = bvh.closest(p);
      const Vec3 target = hit.point + cfg.collision_offset * body_normals[hit.face];
      moved = std::max(moved, (target - p).norm());
      p = target;
    }
    return moved;
  };

  for (int it = 0; it < cfg.iterations; ++it) {
    for (int sub = 0; sub < cfg.substeps; ++sub) {
      for (const auto& batch : edge_colors) {
        for (int e : batch) {
          const int i = adj.edges[e][0], j = adj.edges[e][1];
          const Vec3 d = m.vertices[i] - m.vertices[j];
          const double len = d.norm();
          const double c = len - rest_len[e];
          if (len <= 0.0 || std::abs(c) < 1e-15) continue;
          const Vec3 corr = (0.5 * cfg.stretch_stiffness * c / len) * d;
          m.vertices[i] -= corr;
          m.vertices[j] += corr;
        }
      }
      if (cfg.bending_stiffness > 0.0) {
        std::array<Vec3, 4> g;
        for (const auto& batch : hinge_colors) {
          for (int k : batch) {
            const Hinge& hg = adj.hinges[hinge_ids[k]];
            const Vec3 a0 = (m.vertices[m.faces[hg.f0][1]] - m.vertices[m.faces[hg.f0][0]])
                                .cross(m.vertices[m.faces[hg.f0][2]] - m.vertices[m.faces[hg.f0][0]]);
            const Vec3 a1 = (m.vertices[m.faces[hg.f1][1]] - m.vertices[m.faces[hg.f1][0]])
                                .cross(m.vertices[m.faces[hg.f1][2]] - m.vertices[m.faces[hg.f1][0]]);
            if (a0.norm() <= eps || a1.norm() <= eps) continue;
            const double c = wrap_angle(hinge_angle_gradient(m, hg, g) - rest_angle[k]);
            if (std::abs(c) < 1e-15) continue;
            double denom = 0.0;
            for (const auto& gi : g) denom += gi.squaredNorm();
            if (denom <= 0.0) continue;
            const double s = cfg.bending_stiffness * c / denom;
            for (int q = 0; q < 4; ++q) m.vertices[hinge_verts[k][q]] -= s * g[q];
          }
        }
      }
    }
    res.iterations = it + 1;
    if (collide() <= tol) break;
  }
  res.after = penetration_check(m, body, tol);
  return res;
}

TriMesh apply_similarity(const TriMesh& mesh, const Similarity& t) {
  if (!(t.scale > 0.0)) throw ValidationError("similarity scale must be positive");
  TriMesh out = mesh;
  for (auto& v : out.vertices) v = t.scale * v + t.translation;
  return out;
}

}  // namespace gr
