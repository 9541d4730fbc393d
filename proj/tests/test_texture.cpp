#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "gr/error.hpp"
#include "gr/primitives.hpp"
#include "gr/raster.hpp"
#include "gr/spatial.hpp"
#include "gr/texture.hpp"

using namespace gr;

namespace {

std::vector<CameraView> ring(int count, int res) {
  ViewRingOptions o;
  o.count = count;
  o.radius = 3.0;
  o.width = o.height = res;
  return make_view_ring(o);
}

NetfFitOptions small_fit(int epochs) {
  NetfFitOptions o;
  o.epochs = epochs;
  o.batch_size = 1024;
  o.grid = HashGridOptions{.levels = 6, .max_resolution = 128, .log2_table_size = 12};
  o.head_hidden = 16;
  o.head_layers = 1;
  return o;
}

GuidanceBundle constant_guidance(const TriMesh& m, const Vec3& color, int views, int res) {
  SurfaceAppearance app;
  app.vertex_colors.assign(m.vertex_count(), color);
  SynthOptions so;
  so.shading = false;
  so.quantize = false;
  return synth_guidance(m, app, ring(views, res), so);
}

/// Barycentrics of p in the 2D triangle (a, b, c).
Vec3 bary2(const Vec2& p, const Vec2& a, const Vec2& b, const Vec2& c) {
  const double d = (b - a).x() * (c - a).y() - (b - a).y() * (c - a).x();
  const double l1 = ((p - a).x() * (c - a).y() - (p - a).y() * (c - a).x()) / d;
  const double l2 = ((b - a).x() * (p - a).y() - (b - a).y() * (p - a).x()) / d;
  return Vec3(1.0 - l1 - l2, l1, l2);
}

}  // namespace

TEST_CASE("texture samples lie on the surface and respect the guidance mask") {
  const TriMesh m = primitives::icosphere(2, 0.6);
  GuidanceBundle b = constant_guidance(m, Vec3(0.2, 0.4, 0.6), 3, 32);
  std::fill(b.mask[1].data.begin(), b.mask[1].data.end(), 0.0);
  const auto s = collect_texture_samples(m, b);
  std::size_t expected = 0;
  for (std::size_t i = 0; i < 3; ++i) {
    const auto vis = rasterize(m, b.views[i]);
    for (std::size_t p = 0; p < vis.pixel_count(); ++p) expected += vis.covered(p) && b.mask[i].data[p] > 0.5;
  }
  REQUIRE(static_cast<std::size_t>(s.points.cols()) == expected);
  const TriangleBvh bvh(m);
  for (Eigen::Index k = 0; k < s.points.cols(); ++k) {
    CHECK(bvh.closest(s.points.col(k)).squared_distance < 1e-18);
    CHECK((s.colors.col(k) - Vec3(0.2, 0.4, 0.6)).norm() < 1e-12);
  }
}

TEST_CASE("constant guidance is fitted to a constant field") {
  const TriMesh m = primitives::icosphere(2, 0.6);
  const Vec3 color(0.8, 0.3, 0.55);
  const auto b = constant_guidance(m, color, 4, 48);
  const auto r = fit_netf(m, b, small_fit(30));
  REQUIRE(r.epoch_loss.size() == 30);
  MESSAGE("final texture loss " << r.epoch_loss.back());
  CHECK(r.epoch_loss.back() < 0.005);
  const ImageF img = render_field(m, r.field, b.views[1]);
  for (std::size_t p = 0; p < img.pixel_count(); ++p) {
    if (b.mask[1].data[p] < 0.5) continue;
    for (int c = 0; c < 3; ++c) CHECK(std::abs(img.pixel(p)[c] - color[c]) < 0.03);
  }
}

TEST_CASE("texture loss does not increase across epochs on a smooth target") {
  const TriMesh m = primitives::uv_sphere(32, 16, 0.6);
  SurfaceAppearance app;
  for (const auto& v : m.vertices) app.vertex_colors.push_back(Vec3(0.5 + 0.4 * v.x(), 0.5 + 0.4 * v.y(), 0.5 - 0.4 * v.z()));
  SynthOptions so;
  so.shading = false;
  const auto b = synth_guidance(m, app, ring(4, 48), so);
  const auto r = fit_netf(m, b, small_fit(40));
  for (std::size_t e = 1; e < r.epoch_loss.size(); ++e) CHECK(r.epoch_loss[e] <= r.epoch_loss[e - 1] * (1.0 + 1e-9));
  CHECK(r.epoch_loss.back() < 0.5 * r.epoch_loss.front());
}

TEST_CASE("zero epochs leave parameters unchanged") {
  const TriMesh m = primitives::icosphere(1, 0.6);
  const auto b = constant_guidance(m, Vec3(0.5, 0.5, 0.5), 2, 16);
  const auto fresh = fit_netf(m, b, small_fit(0));
  CHECK(fresh.epoch_loss.empty());
  const auto trained = fit_netf(m, b, small_fit(2));
  const auto resumed = fit_netf(m, b, small_fit(0), &trained.field);
  CHECK(resumed.field.grid.params == trained.field.grid.params);
  CHECK(resumed.field.head.params == trained.field.head.params);
  const auto again = fit_netf(m, b, small_fit(0));
  CHECK(again.field.grid.params == fresh.field.grid.params);
}

TEST_CASE("non-finite field aborts with the epoch") {
  const TriMesh m = primitives::icosphere(1, 0.6);
  const auto b = constant_guidance(m, Vec3(0.5, 0.5, 0.5), 2, 16);
  NeuralTextureField f = fit_netf(m, b, small_fit(0)).field;
  f.head.params[0] = std::nan("");
  try {
    fit_netf(m, b, small_fit(3), &f);
    FAIL("NaN field accepted");
  } catch (const NumericalError& e) {
    CHECK(std::string(e.what()).find("epoch 0") != std::string::npos);
  }
}

TEST_CASE("atlas charts do not overlap and every face has area") {
  for (const TriMesh& m : {primitives::icosphere(2, 0.6), primitives::tube(24, 6, 0.4, -0.5, 0.5),
                           primitives::box(Vec3(-1, -0.5, -0.2), Vec3(1, 0.5, 0.2), 3)}) {
    const int R = 256;
    const Atlas a = build_atlas(m, AtlasOptions{.resolution = R, .padding = 4});
    REQUIRE(a.corner_uvs.size() == 3 * m.face_count());
    CHECK(a.chart_count >= 1);
    std::vector<int> hits(static_cast<std::size_t>(R) * R, 0);
    for (std::size_t f = 0; f < m.face_count(); ++f) {
      const Vec2 p0(a.corner_uvs[3 * f].x() * R, (1.0 - a.corner_uvs[3 * f].y()) * R);
      const Vec2 p1(a.corner_uvs[3 * f + 1].x() * R, (1.0 - a.corner_uvs[3 * f + 1].y()) * R);
      const Vec2 p2(a.corner_uvs[3 * f + 2].x() * R, (1.0 - a.corner_uvs[3 * f + 2].y()) * R);
      const double area = 0.5 * std::abs((p1 - p0).x() * (p2 - p0).y() - (p1 - p0).y() * (p2 - p0).x());
      CHECK(area > 0.0);
      for (const Vec2& p : {p0, p1, p2}) {
        CHECK(p.x() >= 0.0);
        CHECK(p.x() <= R);
        CHECK(p.y() >= 0.0);
        CHECK(p.y() <= R);
      }
      for (int y = 0; y < R; ++y) {
        for (int x = 0; x < R; ++x) {
          const Vec3 b = bary2(Vec2(x + 0.5, y + 0.5), p0, p1, p2);
          if (b.minCoeff() > 1e-9) ++hits[static_cast<std::size_t>(y) * R + x];
        }
      }
    }
    int worst = 0;
    for (int h : hits) worst = std::max(worst, h);
    CHECK(worst == 1);
  }
}

TEST_CASE("baking") {
  const TriMesh m = primitives::icosphere(2, 0.6);
  const auto b = constant_guidance(m, Vec3(0.5, 0.5, 0.5), 2, 16);
  NeuralTextureField f = fit_netf(m, b, small_fit(0)).field;
  SUBCASE("constant field gives a constant texture inside the charts") {
    f.head.params.setZero();
    f.head.bias(f.head.layer_count() - 1) = Eigen::Vector3d(1.0, -0.5, 0.25);
    const BakeResult r = bake_texture(m, f, BakeOptions{.resolution = 128, .background = Vec3(0.1, 0.9, 0.1)});
    std::size_t owned = 0, empty = 0;
    for (std::size_t i = 0; i < r.owner.size(); ++i) {
      if (r.owner[i] >= 0) {
        ++owned;
        CHECK(r.texture.pixel(i)[0] == doctest::Approx(logistic(1.0)));
        CHECK(r.texture.pixel(i)[1] == doctest::Approx(logistic(-0.5)));
        CHECK(r.texture.pixel(i)[2] == doctest::Approx(logistic(0.25)));
      }
    }
    CHECK(owned > 0);
    // Texels farther than the dilation reach from any owned texel keep the background.
    const int R = r.resolution;
    for (int y = 0; y < R; ++y) {
      for (int x = 0; x < R; ++x) {
        bool near = false;
        for (int dy = -5; dy <= 5 && !near; ++dy) {
          for (int dx = -5; dx <= 5 && !near; ++dx) {
            const int xx = x + dx, yy = y + dy;
            near = xx >= 0 && yy >= 0 && xx < R && yy < R && r.owner[static_cast<std::size_t>(yy) * R + xx] >= 0;
          }
        }
        if (near) continue;
        ++empty;
        CHECK(r.texture.at(x, y, 0) == 0.1);
        CHECK(r.texture.at(x, y, 1) == 0.9);
      }
    }
    CHECK(empty > 0);
  }
  SUBCASE("baking is idempotent") {
    const BakeResult a = bake_texture(m, f, BakeOptions{.resolution = 128});
    const BakeResult c = bake_texture(m, f, BakeOptions{.resolution = 128});
    CHECK(a.texture.data == c.texture.data);
    CHECK(a.owner == c.owner);
  }
  SUBCASE("owned texels sample the field at their surface point") {
    const BakeResult r = bake_texture(m, f, BakeOptions{.resolution = 128});
    const int R = r.resolution;
    int checked = 0;
    for (std::size_t i = 0; i < r.owner.size(); i += 17) {
      const int face = r.owner[i];
      if (face < 0) continue;
      const Vec2 t((i % R) + 0.5, (i / R) + 0.5);
      auto texel = [&](int k) {
        const Vec2& uv = r.mesh.corner_uvs[3 * face + k];
        return Vec2(uv.x() * R, (1.0 - uv.y()) * R);
      };
      const Vec3 bc = bary2(t, texel(0), texel(1), texel(2));
      CHECK(bc.minCoeff() > -1e-9);
      const Face& F = m.faces[face];
      const Vec3 p = bc[0] * m.vertices[F[0]] + bc[1] * m.vertices[F[1]] + bc[2] * m.vertices[F[2]];
      const Vec3 want = f.eval(p);
      for (int c = 0; c < 3; ++c) CHECK(r.texture.pixel(i)[c] == doctest::Approx(want[c]).epsilon(1e-9));
      ++checked;
    }
    CHECK(checked > 20);
  }
  SUBCASE("existing uvs are kept") {
    TriMesh withuv = primitives::uv_sphere(16, 8, 0.6);
    REQUIRE(withuv.has_uvs());
    const BakeResult r = bake_texture(withuv, f, BakeOptions{.resolution = 64});
    CHECK(r.mesh.corner_uvs == withuv.corner_uvs);
  }
  SUBCASE("atlas overflow retries at a higher resolution, then fails") {
    // Disjoint triangles: every face is its own chart and needs its own padding.
    TriMesh bare;
    for (int i = 0; i < 300; ++i) {
      const Vec3 o(0.1 * (i % 17), 0.1 * (i / 17), 0.01 * (i % 5));
      const int base = static_cast<int>(bare.vertices.size());
      bare.vertices.insert(bare.vertices.end(), {o, o + Vec3(0.05, 0, 0), o + Vec3(0, 0.05, 0.02)});
      bare.faces.push_back({base, base + 1, base + 2});
    }
    CHECK_THROWS_AS(bake_texture(bare, f, BakeOptions{.resolution = 64, .dilation = 4, .retries = 0}), ValidationError);
    const BakeResult r = bake_texture(bare, f, BakeOptions{.resolution = 64, .dilation = 4, .retries = 4});
    CHECK(r.resolution > 64);
  }
  CHECK_THROWS_AS(bake_texture(m, f, BakeOptions{.resolution = 32}), ValidationError);
}

TEST_CASE("textured round trip against direct field rendering") {
  const TriMesh m = primitives::icosphere(3, 0.6);
  SurfaceAppearance app;
  for (const auto& v : m.vertices) app.vertex_colors.push_back(Vec3(0.5 + 0.5 * v.x(), 0.5 + 0.5 * v.y(), 0.5 + 0.5 * v.z()));
  SynthOptions so;
  so.shading = false;
  const auto views = ring(4, 64);
  const auto b = synth_guidance(m, app, views, so);
  const auto fit = fit_netf(m, b, small_fit(10));
  const BakeResult baked = bake_texture(m, fit.field, BakeOptions{.resolution = 512});
  for (const auto& v : views) {
    const ImageF direct = render_field(m, fit.field, v);
    const ImageF classic = render_textured(baked.mesh, baked.texture, v);
    const auto vis = rasterize(m, v);
    ImageF cov(v.width, v.height, 1);
    for (std::size_t p = 0; p < vis.pixel_count(); ++p) cov.data[p] = vis.covered(p) ? 1.0 : 0.0;
    const double db = psnr(direct, classic, &cov);
    MESSAGE("round-trip PSNR " << db);
    CHECK(db >= 26.0);
  }
}

TEST_CASE("textured mesh files") {
  const TriMesh m = primitives::icosphere(1, 0.6);
  const auto b = constant_guidance(m, Vec3(0.5, 0.5, 0.5), 2, 16);
  const auto r = bake_texture(m, fit_netf(m, b, small_fit(0)).field, BakeOptions{.resolution = 64});
  const auto dir = std::filesystem::temp_directory_path() / "gr_test_texture";
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  save_textured_mesh(r, dir / "garment");
  CHECK(std::filesystem::exists(dir / "garment.mtl"));
  const ImageU8 png = read_png(dir / "garment.png");
  CHECK(png.width == r.resolution);
  const TriMesh back = load_obj(dir / "garment.obj");
  REQUIRE(back.has_uvs());
  CHECK(back.face_count() == m.face_count());
  for (std::size_t i = 0; i < back.corner_uvs.size(); ++i) CHECK((back.corner_uvs[i] - r.mesh.corner_uvs[i]).norm() < 1e-6);
  std::filesystem::remove_all(dir);
}
