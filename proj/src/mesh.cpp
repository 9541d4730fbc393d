#include "gr/mesh.hpp"

#include <algorithm>
#include <map>
#include <random>
#include <unordered_map>

#include "gr/error.hpp"
#include "gr/spatial.hpp"

namespace gr {
namespace {

std::uint64_t edge_key(int a, int b) {
  const auto lo = static_cast<std::uint32_t>(std::min(a, b));
  const auto hi = static_cast<std::uint32_t>(std::max(a, b));
  return (static_cast<std::uint64_t>(lo) << 32) | hi;
}

std::uint64_t directed_key(int a, int b) {
  return (static_cast<std::uint64_t>(static_cast<std::uint32_t>(a)) << 32) | static_cast<std::uint32_t>(b);
}

double cotangent(const Vec3& a, const Vec3& b) {
  const double s = a.cross(b).norm();
  return s > 0.0 ? a.dot(b) / s : 0.0;
}

}  // namespace

Aabb TriMesh::bounds() const {
  Aabb box;
  for (const auto& v : vertices) box.extend(v);
  return box;
}

void validate_mesh(const TriMesh& mesh) {
  const int n = static_cast<int>(mesh.vertices.size());
  if (!mesh.corner_uvs.empty() && mesh.corner_uvs.size() != 3 * mesh.faces.size()) {
    throw ValidationError("uv corner count does not match face count");
  }
  std::unordered_map<std::uint64_t, int> directed;
  std::unordered_map<std::uint64_t, int> undirected;
  directed.reserve(mesh.faces.size() * 3);
  undirected.reserve(mesh.faces.size() * 3);
  for (std::size_t f = 0; f < mesh.faces.size(); ++f) {
    const Face& face = mesh.faces[f];
    for (int k = 0; k < 3; ++k) {
      if (face[k] < 0 || face[k] >= n) {
        throw ValidationError("face " + std::to_string(f) + " references vertex " + std::to_string(face[k]) +
                              " out of range (vertex count " + std::to_string(n) + ")");
      }
    }
    if (face[0] == face[1] || face[1] == face[2] || face[0] == face[2]) {
      throw ValidationError("face " + std::to_string(f) + " has repeated vertex indices");
    }
    for (int k = 0; k < 3; ++k) {
      const int a = face[k], b = face[(k + 1) % 3];
      const int count = ++undirected[edge_key(a, b)];
      if (count > 2) {
        throw ValidationError("non-manifold edge (" + std::to_string(std::min(a, b)) + ", " +
                              std::to_string(std::max(a, b)) + ") has more than two incident faces");
      }
      if (++directed[directed_key(a, b)] > 1) {
        throw ValidationError("inconsistent orientation at edge (" + std::to_string(a) + ", " + std::to_string(b) +
                              "), face " + std::to_string(f));
      }
    }
  }
}

AdjacencyIndex AdjacencyIndex::build(const TriMesh& mesh, LaplacianWeighting weighting) {
  AdjacencyIndex adj;
  std::map<std::uint64_t, int> index;
  for (std::size_t f = 0; f < mesh.faces.size(); ++f) {
    const Face& face = mesh.faces[f];
    for (int k = 0; k < 3; ++k) {
      const int a = face[k], b = face[(k + 1) % 3];
      auto [it, inserted] = index.emplace(edge_key(a, b), 0);
      if (inserted) it->second = 0;
    }
  }
  adj.edges.reserve(index.size());
  for (auto& [key, id] : index) {
    id = static_cast<int>(adj.edges.size());
    adj.edges.push_back({static_cast<int>(key >> 32), static_cast<int>(key & 0xffffffffu)});
  }
  adj.edge_faces.assign(adj.edges.size(), {});
  for (std::size_t f = 0; f < mesh.faces.size(); ++f) {
    const Face& face = mesh.faces[f];
    for (int k = 0; k < 3; ++k) {
      adj.edge_faces[index[edge_key(face[k], face[(k + 1) % 3])]].push_back(static_cast<int>(f));
    }
  }

  adj.vertex_neighbors.assign(mesh.vertices.size(), {});
  for (const auto& e : adj.edges) {
    adj.vertex_neighbors[e[0]].push_back(e[1]);
    adj.vertex_neighbors[e[1]].push_back(e[0]);
  }
  for (auto& nb : adj.vertex_neighbors) std::sort(nb.begin(), nb.end());

  for (std::size_t e = 0; e < adj.edges.size(); ++e) {
    const auto& faces = adj.edge_faces[e];
    if (faces.size() == 1) ++adj.boundary_edge_count;
    if (faces.size() != 2) continue;
    // Orient the hinge along the traversal direction of the first face.
    const Face& fa = mesh.faces[faces[0]];
    int v0 = -1, v1 = -1, opp0 = -1;
    for (int k = 0; k < 3; ++k) {
      const int a = fa[k], b = fa[(k + 1) % 3];
      if (edge_key(a, b) == edge_key(adj.edges[e][0], adj.edges[e][1])) {
        v0 = a;
        v1 = b;
        opp0 = fa[(k + 2) % 3];
      }
    }
    const Face& fb = mesh.faces[faces[1]];
    int opp1 = -1;
    for (int k = 0; k < 3; ++k) {
      if (fb[k] != v0 && fb[k] != v1) opp1 = fb[k];
    }
    adj.hinges.push_back({v0, v1, opp0, opp1, faces[0], faces[1]});
  }

  adj.edge_weights.assign(adj.edges.size(), 1.0);
  if (weighting == LaplacianWeighting::Cotangent) {
    for (std::size_t e = 0; e < adj.edges.size(); ++e) {
      double w = 0.0;
      for (int f : adj.edge_faces[e]) {
        const Face& face = mesh.faces[f];
        int opp = -1;
        for (int k = 0; k < 3; ++k) {
          if (face[k] != adj.edges[e][0] && face[k] != adj.edges[e][1]) opp = face[k];
        }
        const Vec3& o = mesh.vertices[opp];
        w += 0.5 * cotangent(mesh.vertices[adj.edges[e][0]] - o, mesh.vertices[adj.edges[e][1]] - o);
      }
      adj.edge_weights[e] = std::max(w, 0.0);
    }
  }
  return adj;
}

int AdjacencyIndex::find_edge(int a, int b) const {
  const std::array<int, 2> key{std::min(a, b), std::max(a, b)};
  auto it = std::lower_bound(edges.begin(), edges.end(), key);
  if (it == edges.end() || *it != key) return -1;
  return static_cast<int>(it - edges.begin());
}

double degenerate_area_threshold(const TriMesh& mesh) {
  const double d = mesh.bbox_diagonal();
  return 1e-12 * d * d;
}

std::vector<Vec3> face_area_normals(const TriMesh& mesh) {
  std::vector<Vec3> normals(mesh.faces.size());
  for (std::size_t f = 0; f < mesh.faces.size(); ++f) {
    const Face& t = mesh.faces[f];
    const Vec3& a = mesh.vertices[t[0]];
    normals[f] = (mesh.vertices[t[1]] - a).cross(mesh.vertices[t[2]] - a);
  }
  return normals;
}

std::vector<Vec3> face_normals(const TriMesh& mesh) {
  auto normals = face_area_normals(mesh);
  for (auto& n : normals) {
    const double len = n.norm();
    n = len > 0.0 ? Vec3(n / len) : Vec3::Zero();
  }
  return normals;
}

std::vector<Vec3> vertex_normals(const TriMesh& mesh, std::vector<int>* isolated) {
  std::vector<Vec3> acc(mesh.vertices.size(), Vec3::Zero());
  const auto fn = face_area_normals(mesh);
  for (std::size_t f = 0; f < mesh.faces.size(); ++f) {
    for (int v : mesh.faces[f]) acc[v] += fn[f];
  }
  if (isolated) isolated->clear();
  for (std::size_t v = 0; v < acc.size(); ++v) {
    const double len = acc[v].norm();
    if (len > 0.0) {
      acc[v] /= len;
    } else {
      acc[v].setZero();
      if (isolated) isolated->push_back(static_cast<int>(v));
    }
  }
  return acc;
}

std::vector<Vec3> vertex_normals_backward(const TriMesh& mesh, std::span<const Vec3> grad_normals) {
  std::vector<Vec3> acc(mesh.vertices.size(), Vec3::Zero());
  const auto fn = face_area_normals(mesh);
  for (std::size_t f = 0; f < mesh.faces.size(); ++f) {
    for (int v : mesh.faces[f]) acc[v] += fn[f];
  }
  std::vector<Vec3> grad_acc(acc.size());
  for (std::size_t v = 0; v < acc.size(); ++v) grad_acc[v] = normalize_backward(acc[v], grad_normals[v]);

  std::vector<Vec3> grad(mesh.vertices.size(), Vec3::Zero());
  for (std::size_t f = 0; f < mesh.faces.size(); ++f) {
    const Face& t = mesh.faces[f];
    const Vec3 gn = grad_acc[t[0]] + grad_acc[t[1]] + grad_acc[t[2]];
    const Vec3& a = mesh.vertices[t[0]];
    const Vec3 e1 = mesh.vertices[t[1]] - a;
    const Vec3 e2 = mesh.vertices[t[2]] - a;
    Vec3 g1 = Vec3::Zero(), g2 = Vec3::Zero();
    cross_backward(e1, e2, gn, g1, g2);
    grad[t[1]] += g1;
    grad[t[2]] += g2;
    grad[t[0]] -= g1 + g2;
  }
  return grad;
}

BoundaryLoops boundary_loops(const TriMesh& mesh) {
  std::unordered_map<std::uint64_t, int> directed;
  for (const Face& f : mesh.faces) {
    for (int k = 0; k < 3; ++k) ++directed[directed_key(f[k], f[(k + 1) % 3])];
  }
  // Boundary half-edges are those without a twin, kept in face traversal direction.
  std::vector<std::array<int, 2>> half;
  for (const Face& f : mesh.faces) {
    for (int k = 0; k < 3; ++k) {
      const int a = f[k], b = f[(k + 1) % 3];
      if (!directed.count(directed_key(b, a))) half.push_back({a, b});
    }
  }
  std::sort(half.begin(), half.end());

  BoundaryLoops result;
  std::multimap<int, int> outgoing;
  for (std::size_t i = 0; i < half.size(); ++i) outgoing.emplace(half[i][0], static_cast<int>(i));
  for (const auto& [v, unused] : outgoing) {
    (void)unused;
    if (outgoing.count(v) > 1) result.nonmanifold_vertex = true;
  }

  std::vector<char> used(half.size(), 0);
  for (std::size_t start = 0; start < half.size(); ++start) {
    if (used[start]) continue;
    std::vector<int> loop;
    int cur = static_cast<int>(start);
    while (cur >= 0 && !used[cur]) {
      used[cur] = 1;
      loop.push_back(half[cur][0]);
      const int next_vertex = half[cur][1];
      int next = -1;
      auto [lo, hi] = outgoing.equal_range(next_vertex);
      for (auto it = lo; it != hi; ++it) {
        if (!used[it->second]) {
          next = it->second;
          break;
        }
      }
      cur = next;
    }
    result.loops.push_back(std::move(loop));
  }
  return result;
}

std::vector<Vec3> sample_surface(const TriMesh& mesh, std::size_t count, std::uint64_t seed) {
  std::vector<double> cdf(mesh.faces.size());
  double total = 0.0;
  const auto fn = face_area_normals(mesh);
  for (std::size_t f = 0; f < mesh.faces.size(); ++f) {
    total += 0.5 * fn[f].norm();
    cdf[f] = total;
  }
  std::vector<Vec3> points;
  if (mesh.faces.empty() || total <= 0.0) return points;
  points.reserve(count);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  for (std::size_t i = 0; i < count; ++i) {
    const double r = uni(rng) * total;
    auto it = std::upper_bound(cdf.begin(), cdf.end(), r);
    const std::size_t f = std::min<std::size_t>(it - cdf.begin(), cdf.size() - 1);
    double s = uni(rng), t = uni(rng);
    if (s + t > 1.0) {
      s = 1.0 - s;
      t = 1.0 - t;
    }
    const Face& face = mesh.faces[f];
    const Vec3& a = mesh.vertices[face[0]];
    points.push_back(a + s * (mesh.vertices[face[1]] - a) + t * (mesh.vertices[face[2]] - a));
  }
  return points;
}

double chamfer_distance(const TriMesh& a, const TriMesh& b, std::size_t samples, std::uint64_t seed) {
  if (samples == 0) throw ValidationError("chamfer_distance: samples must be >= 1");
  if (a.faces.empty() || b.faces.empty()) throw ValidationError("chamfer_distance: empty mesh");
  auto one_way = [samples](const TriMesh& from, const TriMesh& to, std::uint64_t s) {
    const TriangleBvh bvh(to);
    const auto pts = sample_surface(from, samples, s);
    double sum = 0.0;
    for (const auto& p : pts) sum += std::sqrt(bvh.closest(p).squared_distance);
    return sum / static_cast<double>(pts.size());
  };
  return 0.5 * (one_way(a, b, seed) + one_way(b, a, seed + 1));
}

double mean_edge_length_drift(const TriMesh& reference, const TriMesh& deformed) {
  const auto adj = AdjacencyIndex::build(reference);
  double sum = 0.0;
  for (const auto& e : adj.edges) {
    const double l0 = (reference.vertices[e[0]] - reference.vertices[e[1]]).norm();
    const double l = (deformed.vertices[e[0]] - deformed.vertices[e[1]]).norm();
    sum += l0 > 0.0 ? std::abs(l - l0) / l0 : 0.0;
  }
  return adj.edges.empty() ? 0.0 : sum / static_cast<double>(adj.edges.size());
}

}  // namespace gr
