#include <doctest.h>

#include <cmath>
#include <random>

#include "gr/primitives.hpp"
#include "gr/raster.hpp"
#include "oracles.hpp"

using namespace gr;

namespace {

CameraView square_camera(int n = 64) {
  CameraView v;
  v.width = v.height = n;
  v.fx = v.fy = 100.0;
  v.cx = v.cy = n / 2.0;
  return v;
}

Vec3 unproject(const CameraView& v, double u, double w, double z) { return Vec3((u - v.cx) / v.fx * z, (w - v.cy) / v.fy * z, z); }

/// Small bumpy sheet facing a camera at the origin: 12 vertices, depth around 3.
TriMesh random_sheet(std::uint64_t seed) {
  TriMesh m = primitives::grid(3, 2, 1.0, 0.7);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-0.06, 0.06);
  for (auto& p : m.vertices) {
    // grid is CCW from +z; flip so it faces a camera looking down +z
    p = Vec3(p.x() + u(rng), -p.y() + u(rng), 3.0 + 0.3 * p.x() + 4.0 * u(rng));
  }
  return m;
}

/// Pixels whose 3x3 neighbourhood is owned by a single face.
std::vector<double> interior_weights(const Visibility& vis, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::vector<double> w(vis.pixel_count(), 0.0);
  for (int y = 1; y + 1 < vis.height; ++y) {
    for (int x = 1; x + 1 < vis.width; ++x) {
      const int f = vis.face[y * vis.width + x];
      if (f < 0) continue;
      bool same = true;
      for (int dy = -1; dy <= 1; ++dy) {
        for (int dx = -1; dx <= 1; ++dx) same &= vis.face[(y + dy) * vis.width + x + dx] == f;
      }
      if (same) w[y * vis.width + x] = u(rng);
    }
  }
  return w;
}

}  // namespace

TEST_CASE("hard rasterization matches per-pixel ray casting") {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const TriMesh m = random_sheet(seed);
    const CameraView v = square_camera();
    const Visibility vis = rasterize(m, v);
    int mismatches = 0, covered = 0;
    for (int y = 0; y < v.height; ++y) {
      for (int x = 0; x < v.width; ++x) {
        const std::size_t p = static_cast<std::size_t>(y) * v.width + x;
        const auto hit = oracle::cast_pixel(m, v, x, y);
        if (hit.face != vis.face[p]) {
          ++mismatches;
          continue;
        }
        if (hit.face < 0) continue;
        ++covered;
        CHECK((vis.bary[p] - hit.bary).norm() < 1e-9);
        CHECK(vis.depth[p] == doctest::Approx(hit.t).epsilon(1e-9));
        CHECK(vis.bary[p].minCoeff() >= 0.0);
        CHECK(vis.bary[p].sum() == doctest::Approx(1.0).epsilon(1e-12));
      }
    }
    CHECK(covered > 500);
    CHECK(mismatches == 0);
  }
}

TEST_CASE("attribute interpolation is perspective correct") {
  const CameraView v = square_camera();
  TriMesh m;
  m.vertices = {unproject(v, -20, -20, 1.0), unproject(v, 200, -10, 6.0), unproject(v, 10, 200, 2.5)};
  m.faces = {{0, 2, 1}};
  if (rasterize(m, v).face[0] < 0) m.faces = {{0, 1, 2}};
  const std::vector<double> attr = {1.0, -2.0, 0.25, 4.0, 7.0, -1.5};
  const auto out = rasterize_attributes(m, v, attr, 2);
  for (int y = 0; y < v.height; y += 7) {
    for (int x = 0; x < v.width; x += 5) {
      const auto hit = oracle::cast_pixel(m, v, x, y);
      const std::size_t p = static_cast<std::size_t>(y) * v.width + x;
      REQUIRE(hit.face == out.face[p]);
      if (hit.face < 0) continue;
      for (int c = 0; c < 2; ++c) {
        double expected = 0.0;
        for (int k = 0; k < 3; ++k) expected += hit.bary[k] * attr[2 * m.faces[hit.face][k] + c];
        CHECK(out.attributes[p * 2 + c] == doctest::Approx(expected).epsilon(1e-9));
      }
    }
  }
}

TEST_CASE("background and z-buffer") {
  const CameraView v = square_camera();
  TriMesh m;
  for (double z : {4.0, 2.0}) {
    m.vertices.push_back(unproject(v, 5, 5, z));
    m.vertices.push_back(unproject(v, 60, 5, z));
    m.vertices.push_back(unproject(v, 5, 60, z));
  }
  m.faces = {{0, 1, 2}, {3, 4, 5}};
  if (rasterize(m, v).face[10 * 64 + 10] < 0) m.faces = {{0, 2, 1}, {3, 5, 4}};
  const auto vis = rasterize(m, v);
  CHECK(vis.face[10 * 64 + 10] == 1);
  CHECK(vis.depth[10 * 64 + 10] == doctest::Approx(2.0));
  CHECK(vis.face[63 * 64 + 63] == -1);
}

TEST_CASE("raster backward: attribute gradients") {
  const CameraView v = square_camera();
  const TriMesh m = random_sheet(3);
  const std::vector<double> attr(m.vertex_count() * 3, 0.5);
  const auto out = rasterize_attributes(m, v, attr, 3);
  SUBCASE("uniform output gradient gives summed barycentric weights") {
    const std::vector<double> g(out.pixel_count() * 3, 1.0);
    const auto grads = rasterize_backward(out, m, v, attr, 3, g);
    std::vector<double> expected(m.vertex_count(), 0.0);
    for (int y = 0; y < v.height; ++y) {
      for (int x = 0; x < v.width; ++x) {
        const auto hit = oracle::cast_pixel(m, v, x, y);
        if (hit.face < 0) continue;
        for (int k = 0; k < 3; ++k) expected[m.faces[hit.face][k]] += hit.bary[k];
      }
    }
    for (std::size_t i = 0; i < m.vertex_count(); ++i) {
      for (int c = 0; c < 3; ++c) CHECK(grads.attributes[i * 3 + c] == doctest::Approx(expected[i]).epsilon(1e-9));
    }
  }
  SUBCASE("zero output gradient") {
    const std::vector<double> g(out.pixel_count() * 3, 0.0);
    const auto grads = rasterize_backward(out, m, v, attr, 3, g);
    for (double a : grads.attributes) CHECK(a == 0.0);
    for (const auto& p : grads.positions) CHECK(p.norm() == 0.0);
  }
}

TEST_CASE("raster backward: vertex gradients match finite differences") {
  const CameraView v = square_camera();
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const TriMesh m = random_sheet(seed);
    std::mt19937_64 rng(seed + 100);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::vector<double> attr(m.vertex_count() * 2);
    for (auto& a : attr) a = u(rng);
    const auto out = rasterize_attributes(m, v, attr, 2);
    const auto w = interior_weights(out, seed);
    std::vector<double> g(out.pixel_count() * 2);
    for (std::size_t p = 0; p < w.size(); ++p) g[2 * p] = w[p], g[2 * p + 1] = -0.5 * w[p];
    const auto grads = rasterize_backward(out, m, v, attr, 2, g);
    auto loss = [&](const std::vector<double>& x) {
      const auto o = rasterize_attributes(oracle::with_vertices(m, x), v, attr, 2);
      double s = 0.0;
      for (std::size_t i = 0; i < g.size(); ++i) s += g[i] * o.attributes[i];
      return s;
    };
    const auto x0 = oracle::flatten(m.vertices);
    const double h = 1e-4 * m.bbox_diagonal();
    std::vector<double> fd(x0.size());
    for (std::size_t i = 0; i < x0.size(); ++i) fd[i] = oracle::central_difference(loss, x0, i, h);
    CHECK(oracle::relative_error(oracle::flatten(grads.positions), fd) < 1e-3);
  }
}

TEST_CASE("soft silhouette values") {
  const CameraView v = square_camera();
  TriMesh m;
  m.vertices = {unproject(v, 10.5, 5, 2.0), unproject(v, 10.5, 60, 2.0), unproject(v, 50, 30, 2.0)};
  m.faces = {{0, 1, 2}};
  if (rasterize(m, v).face[30 * 64 + 30] < 0) m.faces = {{0, 2, 1}};
  const auto adj = AdjacencyIndex::build(m);
  const auto sil = soft_silhouette(m, adj, v, 1.0);
  CHECK(sil.coverage[30 * 64 + 10] == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(sil.coverage[30 * 64 + 22] > 0.9999);
  CHECK(sil.coverage[30 * 64 + 0] < 1e-4);
  SUBCASE("coverage is monotone in signed distance") {
    for (std::size_t p = 0; p < sil.coverage.size(); ++p) {
      for (std::size_t q = 0; q < sil.coverage.size(); q += 97) {
        if (sil.signed_distance[p] < sil.signed_distance[q]) CHECK(sil.coverage[p] <= sil.coverage[q]);
      }
    }
  }
  SUBCASE("screen translation shifts the field") {
    TriMesh moved = m;
    for (auto& p : moved.vertices) p.x() += 3.0 / v.fx * 2.0;
    const auto s2 = soft_silhouette(moved, adj, v, 1.0);
    for (int y = 0; y < 64; ++y) {
      for (int x = 0; x + 3 < 64; ++x) CHECK(s2.coverage[y * 64 + x + 3] == doctest::Approx(sil.coverage[y * 64 + x]).epsilon(1e-9));
    }
  }
}

TEST_CASE("hard coverage equals thresholded soft coverage up to one pixel") {
  const CameraView v = square_camera();
  for (std::uint64_t seed = 1; seed <= 3; ++seed) {
    const TriMesh m = random_sheet(seed);
    const auto vis = rasterize(m, v);
    const auto sil = soft_silhouette(m, AdjacencyIndex::build(m), v, 1.0, &vis);
    for (std::size_t p = 0; p < vis.pixel_count(); ++p) {
      if (vis.covered(p) != (sil.coverage[p] >= 0.5)) CHECK(std::abs(sil.signed_distance[p]) <= 1.0);
    }
  }
}

TEST_CASE("soft silhouette backward matches finite differences") {
  const CameraView v = square_camera();
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const TriMesh m = random_sheet(seed);
    const auto adj = AdjacencyIndex::build(m);
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    std::vector<double> w(v.pixel_count());
    for (auto& x : w) x = u(rng);
    for (double tau : {1.0, 0.5}) {
      const auto sil = soft_silhouette(m, adj, v, tau);
      const auto grad = soft_silhouette_backward(sil, m, v, w);
      auto loss = [&](const std::vector<double>& x) {
        const auto s = soft_silhouette(oracle::with_vertices(m, x), adj, v, tau);
        double acc = 0.0;
        for (std::size_t p = 0; p < w.size(); ++p) acc += w[p] * s.coverage[p];
        return acc;
      };
      const auto x0 = oracle::flatten(m.vertices);
      const double h = 1e-4 * m.bbox_diagonal();
      std::vector<double> fd(x0.size());
      for (std::size_t i = 0; i < x0.size(); ++i) fd[i] = oracle::central_difference(loss, x0, i, h);
      CHECK(oracle::relative_error(oracle::flatten(grad), fd) < 1e-3);
    }
  }
}

TEST_CASE("rasterization is deterministic") {
  const TriMesh m = primitives::icosphere(3, 1.0);
  const auto views = make_view_ring(ViewRingOptions{.count = 2, .radius = 3.0, .width = 96, .height = 96});
  std::vector<double> attr(m.vertex_count() * 3);
  for (std::size_t i = 0; i < attr.size(); ++i) attr[i] = std::sin(0.37 * i);
  for (const auto& v : views) {
    const auto a = rasterize_attributes(m, v, attr, 3), b = rasterize_attributes(m, v, attr, 3);
    CHECK(a.face == b.face);
    CHECK(a.attributes == b.attributes);
    CHECK(a.depth == b.depth);
    std::vector<double> g(a.pixel_count() * 3);
    for (std::size_t i = 0; i < g.size(); ++i) g[i] = std::cos(0.11 * i);
    const auto ga = rasterize_backward(a, m, v, attr, 3, g), gb = rasterize_backward(b, m, v, attr, 3, g);
    CHECK(ga.attributes == gb.attributes);
    CHECK(oracle::flatten(ga.positions) == oracle::flatten(gb.positions));
  }
}

TEST_CASE("faces touching the camera plane are skipped") {
  const CameraView v = square_camera();
  TriMesh m;
  m.vertices = {Vec3(-1, -1, -0.5), Vec3(1, -1, 2), Vec3(0, 1, 2)};
  m.faces = {{0, 1, 2}};
  const auto vis = rasterize(m, v);
  for (int f : vis.face) CHECK(f == -1);
}

TEST_CASE("pixel centers on shared edges belong to exactly one face") {
  // Diagonals pass through pixel centers for this framing.
  for (int n : {1, 4, 8}) {
    const TriMesh quad = primitives::grid(n, n, 2.0, 2.0);
    const CameraView v = CameraView::look_at(Vec3(0, 0, 2), Vec3::Zero(), 32, 32, 40.0);
    const auto vis = rasterize(quad, v);
    for (int f : vis.face) CHECK(f >= 0);
  }
}
