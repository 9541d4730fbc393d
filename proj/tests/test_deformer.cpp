#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>

#include "gr/deformer.hpp"
#include "gr/error.hpp"
#include "gr/primitives.hpp"

using namespace gr;

namespace {

std::vector<CameraView> ring(int count, int res) {
  ViewRingOptions o;
  o.count = count;
  o.radius = 3.0;
  o.elevations_degrees = {-20.0, 25.0};
  o.width = o.height = res;
  return make_view_ring(o);
}

/// Contour fitting only: mask and normal consistency, no edge-length shrinkage.
DeformConfig contour_config(int iterations) {
  DeformConfig c = DeformConfig::defaults();
  c.coarse.iterations = iterations;
  c.coarse.weights.laplacian = 0.0;
  c.fine.iterations = 0;
  return c;
}

Vec3 extent(const TriMesh& m) {
  const Aabb b = m.bounds();
  return b.hi - b.lo;
}

}  // namespace

TEST_CASE("zero iterations return the inputs bit-exactly") {
  const TriMesh t = primitives::tube(16, 4, 0.4, -0.5, 0.5);
  const auto views = ring(4, 32);
  const auto b = synth_guidance(primitives::tube(16, 4, 0.45, -0.5, 0.5), SurfaceAppearance{}, views);
  DeformConfig c = DeformConfig::defaults();
  c.coarse.iterations = 0;
  c.fine.iterations = 0;
  const auto r = deform(t, b, c);
  CHECK(r.coarse.vertices == t.vertices);
  CHECK(r.fine.vertices == t.vertices);
  CHECK(r.fine.faces == t.faces);
  const NeuralShader fresh = NeuralShader::create(Aabb{Vec3(-1, -1, -1), Vec3(1, 1, 1)}, 3, 16, 1, 2);
  const auto f = fine_stage(t, b, r.holes, fresh, c, 1.0);
  CHECK(f.mesh.vertices == t.vertices);
  CHECK(f.shader.mlp.params == fresh.mlp.params);
}

TEST_CASE("coarse stage recovers contours") {
  const TriMesh t = primitives::icosphere(2, 0.6);
  const auto views = ring(8, 256);
  SUBCASE("guidance from the template itself") {
    const auto b = synth_guidance(t, SurfaceAppearance{}, views);
    const TriMesh out = coarse_stage(t, b, contour_config(200));
    const double c = chamfer_distance(out, t, 4000);
    MESSAGE("fixed-point chamfer / diagonal " << c / t.bbox_diagonal());
    CHECK(c < 1e-3 * t.bbox_diagonal());
  }
  SUBCASE("uniformly scaled target") {
    TriMesh target = t;
    for (auto& v : target.vertices) v *= 1.2;
    const auto b = synth_guidance(target, SurfaceAppearance{}, views);
    const TriMesh out = coarse_stage(t, b, contour_config(200));
    const double scale = extent(out).norm() / extent(target).norm();
    MESSAGE("bbox diagonal ratio " << scale << ", per axis " << extent(out).cwiseQuotient(extent(target)).transpose());
    CHECK(std::abs(scale - 1.0) < 0.02);
  }
  SUBCASE("sphere template against cube silhouettes") {
    const auto b = synth_guidance(primitives::box(Vec3(-0.5, -0.5, -0.5), Vec3(0.5, 0.5, 0.5), 6), SurfaceAppearance{}, views);
    const TriMesh out = coarse_stage(t, b, contour_config(200));
    const double iou = silhouette_iou(out, b);
    MESSAGE("cube silhouette IoU " << iou);
    CHECK(iou >= 0.95);
  }
}

TEST_CASE("edge-length laplacian shrinks a sphere toward a smaller equilibrium") {
  const TriMesh t = primitives::icosphere(2, 0.6);
  const auto views = ring(8, 64);
  const auto b = synth_guidance(t, SurfaceAppearance{}, views);
  DeformConfig with = contour_config(100), without = contour_config(100);
  with.coarse.weights.laplacian = 40.0;
  const double shrunk = extent(coarse_stage(t, b, with)).norm() / extent(t).norm();
  const double kept = extent(coarse_stage(t, b, without)).norm() / extent(t).norm();
  CHECK(shrunk < kept);
  CHECK(shrunk < 0.9);
  CHECK(std::abs(kept - 1.0) < 0.02);
}

TEST_CASE("connectivity and openings are invariant through both stages") {
  const TriMesh t = primitives::tube(24, 6, 0.4, -0.5, 0.5);
  ViewRingOptions o;
  o.count = 6;
  o.radius = 1.8;
  o.elevations_degrees = {50.0, 70.0};
  o.width = o.height = 48;
  const auto b = synth_guidance(primitives::tube(24, 6, 0.45, -0.55, 0.5), SurfaceAppearance{}, make_view_ring(o));
  DeformConfig c = DeformConfig::defaults();
  c.coarse.iterations = 30;
  c.fine.iterations = 15;
  c.shader_hidden = 16;
  c.shader_octaves = 2;
  c.fine.rgb_pixels_per_view = 256;
  const auto r = deform(t, b, c);
  CHECK(r.fine.faces == t.faces);
  CHECK(r.coarse.faces == t.faces);
  CHECK(r.coarse_report.loops_before == 2);
  CHECK(r.coarse_report.loops_after == 2);
  CHECK(r.fine_report.loops_after == 2);
  CHECK(boundary_loops(r.fine).loops.size() == 2);
  CHECK(r.fine.vertices != t.vertices);
  REQUIRE(r.coarse_report.rows.size() == 30);
  REQUIRE(r.fine_report.rows.size() == 15);
  for (const auto& row : r.fine_report.rows) {
    CHECK(row.rgb > 0.0);
    CHECK(row.normal > 0.0);
    CHECK(row.hole >= 0.0);
    CHECK(row.tau == r.coarse_report.final_tau);
  }
  CHECK(r.coarse_report.final_tau == doctest::Approx(0.25));
}

TEST_CASE("same seed and config give bit-identical meshes") {
  const TriMesh t = primitives::icosphere(2, 0.6);
  const auto b = synth_guidance(primitives::box(Vec3(-0.5, -0.4, -0.5), Vec3(0.5, 0.4, 0.5), 4), SurfaceAppearance{}, ring(6, 48));
  DeformConfig c = DeformConfig::defaults();
  c.coarse.iterations = 25;
  c.coarse.views_per_iteration = 2;
  c.fine.iterations = 5;
  c.fine.views_per_iteration = 3;
  c.fine.rgb_pixels_per_view = 128;
  c.shader_hidden = 16;
  c.seed = 4;
  const auto a = deform(t, b, c), d = deform(t, b, c);
  CHECK(a.fine.vertices == d.fine.vertices);
  CHECK(a.shader.mlp.params == d.shader.mlp.params);
  c.seed = 5;
  CHECK(deform(t, b, c).fine.vertices != a.fine.vertices);
}

TEST_CASE("non-finite loss aborts with the iteration index") {
  const TriMesh t = primitives::icosphere(1, 0.6);
  const auto b = synth_guidance(t, SurfaceAppearance{}, ring(2, 32));
  DeformConfig c = DeformConfig::defaults();
  c.fine.iterations = 3;
  NeuralShader s = NeuralShader::create(t.bounds(), 1, 8, 1, 1);
  s.mlp.params[0] = std::nan("");
  try {
    fine_stage(t, b, capture_hole_masks(t, b.views), s, c, 1.0);
    FAIL("NaN shader accepted");
  } catch (const NumericalError& e) {
    CHECK(std::string(e.what()).find("iteration 0") != std::string::npos);
  }
}

TEST_CASE("rising window loss halves the learning rate with a warning") {
  const TriMesh t = primitives::icosphere(1, 0.6);
  const auto b = synth_guidance(t, SurfaceAppearance{}, ring(4, 32));
  DeformConfig c = contour_config(40);
  c.coarse.vertex_lr = 0.2;
  c.coarse.anneal_tau = false;
  c.coarse.loss_window = 5;
  StageReport r;
  coarse_stage(t, b, c, &r);
  REQUIRE_FALSE(r.warnings.empty());
  CHECK(r.warnings.front().find("halved") != std::string::npos);
  // The logged rate after a warning is below the cosine schedule alone.
  const auto& last = r.rows.back();
  const double cosine = 0.5 * (1.0 + std::cos(std::numbers::pi * last.iteration / 40.0));
  CHECK(last.lr < 0.2 * t.bbox_diagonal() * cosine * 0.75);
}

TEST_CASE("stage configuration validation") {
  DeformConfig c = DeformConfig::defaults();
  CHECK_NOTHROW(c.validate());
  c.fine.weights.hole = -1.0;
  CHECK_THROWS_AS(c.validate(), ValidationError);
  c = DeformConfig::defaults();
  c.coarse.iterations = -1;
  CHECK_THROWS_AS(c.validate(), ValidationError);
  c = DeformConfig::defaults();
  c.coarse.tau = 0.0;
  CHECK_THROWS_AS(c.validate(), ValidationError);
  const TriMesh t = primitives::icosphere(1, 0.6);
  GuidanceBundle b = synth_guidance(t, SurfaceAppearance{}, ring(2, 16));
  b.normal.clear();
  c = DeformConfig::defaults();
  c.fine.iterations = 1;
  CHECK_THROWS_AS(fine_stage(t, b, capture_hole_masks(t, b.views), NeuralShader::create(t.bounds(), 1, 8, 1, 1), c, 1.0),
                  ValidationError);
}

TEST_CASE("progress csv") {
  StageReport r;
  const TriMesh t = primitives::icosphere(1, 0.6);
  coarse_stage(t, synth_guidance(t, SurfaceAppearance{}, ring(2, 16)), contour_config(4), &r);
  const auto path = std::filesystem::temp_directory_path() / "gr_test_progress.csv";
  write_progress_csv(r.rows, path);
  std::ifstream in(path);
  std::string line;
  std::getline(in, line);
  CHECK(line == "stage,iteration,total,mask,normal_consistency,laplacian,rgb,normal,hole,lr,tau");
  int rows = 0;
  while (std::getline(in, line)) {
    CHECK(line.rfind("coarse,", 0) == 0);
    ++rows;
  }
  CHECK(rows == 4);
  std::filesystem::remove(path);
}
