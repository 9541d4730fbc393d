#include "gr/primitives.hpp"

#include <cmath>
#include <map>
#include <numbers>

namespace gr::primitives {

using std::numbers::pi;

TriMesh grid(int nx, int ny, double width, double height) {
  TriMesh m;
  for (int j = 0; j <= ny; ++j) {
    for (int i = 0; i <= nx; ++i) {
      m.vertices.emplace_back(width * (static_cast<double>(i) / nx - 0.5), height * (static_cast<double>(j) / ny - 0.5), 0.0);
    }
  }
  auto id = [nx](int i, int j) { return j * (nx + 1) + i; };
  for (int j = 0; j < ny; ++j) {
    for (int i = 0; i < nx; ++i) {
      // Alternate the diagonal so the sheet has no preferred shear direction.
      if ((i + j) % 2 == 0) {
        m.faces.push_back({id(i, j), id(i + 1, j), id(i + 1, j + 1)});
        m.faces.push_back({id(i, j), id(i + 1, j + 1), id(i, j + 1)});
      } else {
        m.faces.push_back({id(i, j), id(i + 1, j), id(i, j + 1)});
        m.faces.push_back({id(i + 1, j), id(i + 1, j + 1), id(i, j + 1)});
      }
    }
  }
  return m;
}

TriMesh uv_sphere(int segments, int rings, double radius, const Vec3& center) {
  TriMesh m;
  // Poles are single vertices; interior rings have `segments` vertices each.
  m.vertices.push_back(center + Vec3(0, radius, 0));
  for (int r = 1; r < rings; ++r) {
    const double phi = pi * r / rings;
    for (int s = 0; s < segments; ++s) {
      const double theta = 2 * pi * s / segments;
      m.vertices.push_back(center + radius * Vec3(std::sin(phi) * std::sin(theta), std::cos(phi), std::sin(phi) * std::cos(theta)));
    }
  }
  m.vertices.push_back(center + Vec3(0, -radius, 0));
  const int south = static_cast<int>(m.vertices.size()) - 1;
  auto ring_id = [segments](int r, int s) { return 1 + (r - 1) * segments + (s % segments); };
  auto uv = [segments, rings](int s, int r) { return Vec2(static_cast<double>(s) / segments, 1.0 - static_cast<double>(r) / rings); };
  auto add = [&m](int a, int b, int c, Vec2 ua, Vec2 ub, Vec2 uc) {
    m.faces.push_back({a, b, c});
    m.corner_uvs.push_back(ua);
    m.corner_uvs.push_back(ub);
    m.corner_uvs.push_back(uc);
  };
  for (int s = 0; s < segments; ++s) {
    add(0, ring_id(1, s), ring_id(1, s + 1), Vec2((s + 0.5) / segments, 1.0), uv(s, 1), uv(s + 1, 1));
  }
  for (int r = 1; r < rings - 1; ++r) {
    for (int s = 0; s < segments; ++s) {
      add(ring_id(r, s), ring_id(r + 1, s), ring_id(r + 1, s + 1), uv(s, r), uv(s, r + 1), uv(s + 1, r + 1));
      add(ring_id(r, s), ring_id(r + 1, s + 1), ring_id(r, s + 1), uv(s, r), uv(s + 1, r + 1), uv(s + 1, r));
    }
  }
  for (int s = 0; s < segments; ++s) {
    add(south, ring_id(rings - 1, s + 1), ring_id(rings - 1, s), Vec2((s + 0.5) / segments, 0.0), uv(s + 1, rings - 1),
        uv(s, rings - 1));
  }
  return m;
}

TriMesh icosphere(int subdivisions, double radius, const Vec3& center) {
  const double t = (1.0 + std::sqrt(5.0)) / 2.0;
  std::vector<Vec3> v = {{-1, t, 0}, {1, t, 0}, {-1, -t, 0}, {1, -t, 0}, {0, -1, t}, {0, 1, t},
                         {0, -1, -t}, {0, 1, -t}, {t, 0, -1}, {t, 0, 1}, {-t, 0, -1}, {-t, 0, 1}};
  std::vector<Face> f = {{0, 11, 5}, {0, 5, 1},  {0, 1, 7},   {0, 7, 10}, {0, 10, 11}, {1, 5, 9}, {5, 11, 4},
                         {11, 10, 2}, {10, 7, 6}, {7, 1, 8},   {3, 9, 4},  {3, 4, 2},   {3, 2, 6}, {3, 6, 8},
                         {3, 8, 9},  {4, 9, 5},  {2, 4, 11},  {6, 2, 10}, {8, 6, 7},   {9, 8, 1}};
  for (auto& p : v) p.normalize();
  for (int s = 0; s < subdivisions; ++s) {
    std::map<std::pair<int, int>, int> mid;
    auto midpoint = [&](int a, int b) {
      const auto key = std::make_pair(std::min(a, b), std::max(a, b));
      auto it = mid.find(key);
      if (it != mid.end()) return it->second;
      v.push_back((v[a] + v[b]).normalized());
      const int id = static_cast<int>(v.size()) - 1;
      mid.emplace(key, id);
      return id;
    };
    std::vector<Face> next;
    for (const auto& tri : f) {
      const int a = midpoint(tri[0], tri[1]), b = midpoint(tri[1], tri[2]), c = midpoint(tri[2], tri[0]);
      next.push_back({tri[0], a, c});
      next.push_back({tri[1], b, a});
      next.push_back({tri[2], c, b});
      next.push_back({a, b, c});
    }
    f = std::move(next);
  }
  TriMesh m;
  for (const auto& p : v) m.vertices.push_back(center + radius * p);
  m.faces = std::move(f);
  return m;
}

TriMesh box(const Vec3& lo, const Vec3& hi, int n) {
  TriMesh m;
  std::map<std::array<long, 3>, int> index;
  auto vertex = [&](const Vec3& unit) {
    // unit in [0,1]^3 on the lattice with spacing 1/n.
    const std::array<long, 3> key{std::lround(unit.x() * n), std::lround(unit.y() * n), std::lround(unit.z() * n)};
    auto it = index.find(key);
    if (it != index.end()) return it->second;
    m.vertices.push_back(lo + (hi - lo).cwiseProduct(unit));
    const int id = static_cast<int>(m.vertices.size()) - 1;
    index.emplace(key, id);
    return id;
  };
  // Each side: origin corner, u axis, v axis with u x v pointing outward.
  const std::array<std::array<Vec3, 3>, 6> sides = {{
      {Vec3(1, 0, 0), Vec3(0, 1, 0), Vec3(0, 0, 1)},
      {Vec3(0, 0, 0), Vec3(0, 0, 1), Vec3(0, 1, 0)},
      {Vec3(0, 1, 0), Vec3(0, 0, 1), Vec3(1, 0, 0)},
      {Vec3(0, 0, 0), Vec3(1, 0, 0), Vec3(0, 0, 1)},
      {Vec3(0, 0, 1), Vec3(1, 0, 0), Vec3(0, 1, 0)},
      {Vec3(0, 0, 0), Vec3(0, 1, 0), Vec3(1, 0, 0)},
  }};
  for (const auto& side : sides) {
    for (int j = 0; j < n; ++j) {
      for (int i = 0; i < n; ++i) {
        auto p = [&](int a, int b) { return vertex(side[0] + side[1] * (static_cast<double>(a) / n) + side[2] * (static_cast<double>(b) / n)); };
        const int a = p(i, j), b = p(i + 1, j), c = p(i + 1, j + 1), d = p(i, j + 1);
        m.faces.push_back({a, b, c});
        m.faces.push_back({a, c, d});
      }
    }
  }
  return m;
}

TriMesh tube(int segments, int rows, double radius, double y0, double y1) {
  SkirtShape s;
  s.segments = segments;
  s.rows = rows;
  s.top_radius = radius;
  s.hem_radius = radius;
  s.top_y = y1;
  s.hem_y = y0;
  s.amplitude = 0.0;
  return skirt(s);
}

TriMesh disk(int segments, int rings, double radius) {
  TriMesh m;
  m.vertices.emplace_back(0, 0, 0);
  for (int r = 1; r <= rings; ++r) {
    for (int s = 0; s < segments; ++s) {
      const double a = 2 * pi * s / segments;
      m.vertices.emplace_back(radius * r / rings * std::cos(a), radius * r / rings * std::sin(a), 0.0);
    }
  }
  auto id = [segments](int r, int s) { return 1 + (r - 1) * segments + (s % segments); };
  for (int s = 0; s < segments; ++s) m.faces.push_back({0, id(1, s), id(1, s + 1)});
  for (int r = 1; r < rings; ++r) {
    for (int s = 0; s < segments; ++s) {
      m.faces.push_back({id(r, s), id(r + 1, s), id(r + 1, s + 1)});
      m.faces.push_back({id(r, s), id(r + 1, s + 1), id(r, s + 1)});
    }
  }
  return m;
}

TriMesh skirt(const SkirtShape& shape) {
  TriMesh m;
  for (int r = 0; r <= shape.rows; ++r) {
    const double t = static_cast<double>(r) / shape.rows;  // 0 at the top, 1 at the hem
    const double y = shape.top_y + t * (shape.hem_y - shape.top_y);
    const double base = shape.top_radius + t * (shape.hem_radius - shape.top_radius);
    const double amp = shape.amplitude * (shape.top_amplitude_fraction + (1.0 - shape.top_amplitude_fraction) * t);
    for (int s = 0; s < shape.segments; ++s) {
      const double a = 2 * pi * s / shape.segments;
      const double radius = base + amp * std::sin(shape.pleats * a);
      m.vertices.emplace_back(radius * std::sin(a), y, radius * std::cos(a));
    }
  }
  auto id = [&shape](int r, int s) { return r * shape.segments + (s % shape.segments); };
  for (int r = 0; r < shape.rows; ++r) {
    for (int s = 0; s < shape.segments; ++s) {
      // Row r is above row r + 1; winding gives outward normals.
      m.faces.push_back({id(r, s), id(r + 1, s), id(r + 1, s + 1)});
      m.faces.push_back({id(r, s), id(r + 1, s + 1), id(r, s + 1)});
    }
  }
  return m;
}

}  // namespace gr::primitives
