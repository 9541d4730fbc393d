#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <numbers>
#include <string>
#include <vector>

#include <json.hpp>

#include "gr/gr.h"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct RawMesh {
  std::vector<double> v;
  std::vector<int32_t> f;
  size_t vertex_count() const { return v.size() / 3; }
  size_t face_count() const { return f.size() / 3; }
};

/// Open cylinder around z: `segments` around, `rings` rows of vertices.
RawMesh tube(int segments, int rings, double radius, double z0, double z1) {
  RawMesh m;
  for (int r = 0; r < rings; ++r) {
    const double z = z0 + (z1 - z0) * r / (rings - 1);
    for (int s = 0; s < segments; ++s) {
      const double a = 2.0 * std::numbers::pi * s / segments;
      m.v.insert(m.v.end(), {radius * std::cos(a), radius * std::sin(a), z});
    }
  }
  for (int r = 0; r + 1 < rings; ++r) {
    for (int s = 0; s < segments; ++s) {
      const int a = r * segments + s, b = r * segments + (s + 1) % segments;
      const int c = a + segments, d = b + segments;
      m.f.insert(m.f.end(), {a, b, d, a, d, c});
    }
  }
  return m;
}

/// Closed latitude-longitude sphere with one vertex per pole.
RawMesh sphere(int stacks, int slices, double radius) {
  RawMesh m;
  m.v.insert(m.v.end(), {0.0, 0.0, radius});
  for (int i = 1; i < stacks; ++i) {
    const double t = std::numbers::pi * i / stacks;
    for (int j = 0; j < slices; ++j) {
      const double p = 2.0 * std::numbers::pi * j / slices;
      m.v.insert(m.v.end(), {radius * std::sin(t) * std::cos(p), radius * std::sin(t) * std::sin(p), radius * std::cos(t)});
    }
  }
  m.v.insert(m.v.end(), {0.0, 0.0, -radius});
  const int south = static_cast<int>(m.vertex_count()) - 1;
  auto ring = [&](int i, int j) { return 1 + (i - 1) * slices + (j % slices); };
  for (int j = 0; j < slices; ++j) m.f.insert(m.f.end(), {0, ring(1, j), ring(1, j + 1)});
  for (int i = 1; i + 1 < stacks; ++i) {
    for (int j = 0; j < slices; ++j) {
      m.f.insert(m.f.end(), {ring(i, j), ring(i + 1, j), ring(i + 1, j + 1), ring(i, j), ring(i + 1, j + 1), ring(i, j + 1)});
    }
  }
  for (int j = 0; j < slices; ++j) m.f.insert(m.f.end(), {south, ring(stacks - 1, j + 1), ring(stacks - 1, j)});
  return m;
}

gr_mesh* make(const RawMesh& r) {
  gr_mesh* m = nullptr;
  REQUIRE(gr_mesh_create(r.v.data(), r.vertex_count(), r.f.data(), r.face_count(), &m) == GR_OK);
  return m;
}

std::vector<double> vertices_of(const gr_mesh* m) {
  std::vector<double> v(3 * gr_mesh_vertex_count(m));
  REQUIRE(gr_mesh_get_vertices(m, v.data()) == GR_OK);
  return v;
}

json take_report(char* s) {
  REQUIRE(s != nullptr);
  const json j = json::parse(s);
  gr_string_free(s);
  return j;
}

fs::path data_dir(const std::string& name) {
  const fs::path p = fs::path(GR_TEST_DATA_DIR) / "capi_data" / name;
  fs::create_directories(p.parent_path());
  return p;
}

}  // namespace

TEST_CASE("status strings and argument checks") {
  CHECK(std::string(gr_version()).size() > 0);
  CHECK(std::string(gr_status_name(GR_OK)) == "ok");
  CHECK(std::string(gr_status_name(GR_ERR_IO)) != std::string(gr_status_name(GR_ERR_NUMERICAL)));
  gr_mesh* m = nullptr;
  CHECK(gr_mesh_load_obj(nullptr, &m) == GR_ERR_INVALID_ARGUMENT);
  CHECK(std::string(gr_last_error()).find("path") != std::string::npos);
  CHECK(gr_mesh_load_obj("/nonexistent/garment.obj", &m) == GR_ERR_IO);
  CHECK(std::string(gr_last_error()).find("garment.obj") != std::string::npos);
  CHECK(m == nullptr);
  size_t n = 0;
  CHECK(gr_mesh_boundary_loop_count(nullptr, &n) == GR_ERR_INVALID_ARGUMENT);
  CHECK(gr_mesh_vertex_count(nullptr) == 0);
  // A face index past the vertex array is a validation failure.
  const double v[9] = {0, 0, 0, 1, 0, 0, 0, 1, 0};
  const int32_t bad[3] = {0, 1, 3};
  CHECK(gr_mesh_create(v, 3, bad, 1, &m) == GR_ERR_VALIDATION);
  CHECK(std::string(gr_last_error()).size() > 0);
  // Success clears the message.
  const int32_t good[3] = {0, 1, 2};
  REQUIRE(gr_mesh_create(v, 3, good, 1, &m) == GR_OK);
  CHECK(std::string(gr_last_error()).empty());
  gr_mesh_free(m);
  gr_mesh_free(nullptr);
}

TEST_CASE("mesh round trip and metrics") {
  const RawMesh r = tube(12, 4, 0.5, -0.5, 0.5);
  gr_mesh* m = make(r);
  CHECK(gr_mesh_vertex_count(m) == r.vertex_count());
  CHECK(gr_mesh_face_count(m) == r.face_count());
  CHECK(vertices_of(m) == r.v);
  std::vector<int32_t> f(r.f.size());
  REQUIRE(gr_mesh_get_faces(m, f.data()) == GR_OK);
  CHECK(f == r.f);
  size_t loops = 0;
  REQUIRE(gr_mesh_boundary_loop_count(m, &loops) == GR_OK);
  CHECK(loops == 2);
  double d = -1.0;
  REQUIRE(gr_chamfer_distance(m, m, 2000, 3, &d) == GR_OK);
  CHECK(d >= 0.0);
  CHECK(d < 0.02);
  CHECK(gr_chamfer_distance(m, m, 0, 3, &d) == GR_ERR_VALIDATION);

  const std::string path = data_dir("tube.obj").string();
  REQUIRE(gr_mesh_save_obj(m, path.c_str()) == GR_OK);
  gr_mesh* back = nullptr;
  REQUIRE(gr_mesh_load_obj(path.c_str(), &back) == GR_OK);
  CHECK(gr_mesh_face_count(back) == r.face_count());
  const auto a = vertices_of(m), b = vertices_of(back);
  REQUIRE(a.size() == b.size());
  for (size_t i = 0; i < a.size(); ++i) CHECK(std::abs(a[i] - b[i]) < 1e-8);
  gr_mesh_free(back);
  gr_mesh_free(m);
}

TEST_CASE("cameras and guidance bundles") {
  gr_mesh* m = make(sphere(10, 16, 0.5));
  gr_cameras* c = nullptr;
  CHECK(gr_cameras_ring(m, 0, 32, &c) == GR_ERR_VALIDATION);
  REQUIRE(gr_cameras_ring(m, 4, 32, &c) == GR_OK);
  CHECK(gr_cameras_count(c) == 4);
  const std::string cam_path = data_dir("cameras.json").string();
  REQUIRE(gr_cameras_save(c, cam_path.c_str()) == GR_OK);
  gr_cameras* c2 = nullptr;
  REQUIRE(gr_cameras_load(cam_path.c_str(), &c2) == GR_OK);
  CHECK(gr_cameras_count(c2) == 4);

  gr_bundle* b = nullptr;
  REQUIRE(gr_synth_guidance(m, c2, nullptr, &b) == GR_OK);
  CHECK(gr_bundle_view_count(b) == 4);
  const std::string dir = data_dir("bundle").string();
  REQUIRE(gr_bundle_save(b, dir.c_str()) == GR_OK);
  gr_bundle* b2 = nullptr;
  REQUIRE(gr_bundle_load(dir.c_str(), &b2) == GR_OK);
  CHECK(gr_bundle_view_count(b2) == 4);
  gr_bundle* b3 = nullptr;
  CHECK(gr_bundle_load(data_dir("no_such_bundle").string().c_str(), &b3) != GR_OK);
  CHECK(gr_synth_guidance(m, c2, data_dir("missing.png").string().c_str(), &b3) != GR_OK);
  CHECK(b3 == nullptr);
  gr_bundle_free(b2);
  gr_bundle_free(b);
  gr_cameras_free(c2);
  gr_cameras_free(c);
  gr_mesh_free(m);
}

TEST_CASE("pipeline stages") {
  gr_mesh* target = make(sphere(10, 16, 0.5));
  gr_cameras* cams = nullptr;
  REQUIRE(gr_cameras_ring(target, 4, 32, &cams) == GR_OK);
  gr_bundle* b = nullptr;
  REQUIRE(gr_synth_guidance(target, cams, nullptr, &b) == GR_OK);

  SUBCASE("deform with zero iterations is the identity") {
    gr_mesh* t = make(sphere(8, 12, 0.45));
    gr_mesh* out = nullptr;
    char* rep = nullptr;
    const std::string artifacts = data_dir("deform_artifacts").string();
    REQUIRE(gr_deform(t, b, R"({"coarse": {"iterations": 0}, "fine": {"iterations": 0}})", artifacts.c_str(), &out, &rep) == GR_OK);
    CHECK(vertices_of(out) == vertices_of(t));
    const json j = take_report(rep);
    CHECK(j["config"]["coarse"]["iterations"] == 0);
    CHECK(j["config"]["fine"]["weights"]["hole"] == 10.0);
    CHECK(j["boundary_loops"] == 0);
    CHECK(fs::exists(fs::path(artifacts) / "progress.csv"));
    CHECK(fs::exists(fs::path(artifacts) / "coarse.obj"));
    gr_mesh_free(out);
    out = nullptr;
    CHECK(gr_deform(t, b, R"({"coarse": {"iteratons": 0}})", nullptr, &out, nullptr) == GR_ERR_VALIDATION);
    CHECK(std::string(gr_last_error()).find("iteratons") != std::string::npos);
    CHECK(gr_deform(t, b, "{not json", nullptr, &out, nullptr) == GR_ERR_VALIDATION);
    CHECK(out == nullptr);
    gr_mesh_free(t);
  }
  SUBCASE("smooth") {
    RawMesh r = tube(16, 5, 0.5, -0.5, 0.5);
    for (size_t i = 0; i < r.v.size(); i += 3) r.v[i] += 0.01 * std::sin(7.0 * static_cast<double>(i));
    gr_mesh* m = make(r);
    gr_mesh* out = nullptr;
    char* rep = nullptr;
    REQUIRE(gr_smooth(m, R"({"max_iterations": 50})", &out, &rep) == GR_OK);
    const json j = take_report(rep);
    CHECK(j["config"]["max_iterations"] == 50);
    CHECK(j["final_energy"].get<double>() <= j["initial_energy"].get<double>());
    CHECK(gr_mesh_face_count(out) == r.face_count());
    gr_mesh_free(out);
    gr_mesh_free(m);
  }
  SUBCASE("drape") {
    gr_mesh* g = make(tube(24, 6, 0.45, -0.6, 0.6));
    gr_mesh* open = make(tube(8, 2, 0.5, -1, 1));
    gr_mesh* out = nullptr;
    char* rep = nullptr;
    CHECK(gr_drape(g, open, 1.0, nullptr, nullptr, &out, nullptr) == GR_ERR_VALIDATION);
    const double t[3] = {0.0, 0.0, 0.0};
    REQUIRE(gr_drape(g, target, 1.0, t, nullptr, &out, &rep) == GR_OK);
    const json j = take_report(rep);
    CHECK(j["before"]["count"].get<int>() > 0);
    CHECK(j["after"]["count"] == 0);
    CHECK(j["mean_edge_length_drift"].get<double>() < 0.03);
    size_t loops = 0;
    REQUIRE(gr_mesh_boundary_loop_count(out, &loops) == GR_OK);
    CHECK(loops == 2);
    gr_mesh_free(out);
    gr_mesh_free(open);
    gr_mesh_free(g);
  }
  SUBCASE("texture") {
    const std::string prefix = data_dir("textured").string();
    char* rep = nullptr;
    const char* cfg = R"({"fit": {"epochs": 2, "batch_size": 512, "head_hidden": 16, "head_layers": 1,
                                   "grid": {"levels": 4, "max_resolution": 64, "log2_table_size": 12}},
                          "bake": {"resolution": 128}})";
    REQUIRE(gr_texture(target, b, cfg, prefix.c_str(), &rep) == GR_OK);
    const json j = take_report(rep);
    CHECK(j["epoch_loss"].size() == 2);
    CHECK(j["texture_resolution"] == 128);
    for (const char* ext : {".obj", ".mtl", ".png", ".netf"}) CHECK(fs::exists(prefix + ext));
    gr_mesh* back = nullptr;
    REQUIRE(gr_mesh_load_obj((prefix + ".obj").c_str(), &back) == GR_OK);
    CHECK(gr_mesh_face_count(back) == gr_mesh_face_count(target));
    gr_mesh_free(back);
    CHECK(gr_texture(target, b, R"({"bake": {"resolution": 16}})", prefix.c_str(), nullptr) == GR_ERR_VALIDATION);
  }
  gr_bundle_free(b);
  gr_cameras_free(cams);
  gr_mesh_free(target);
}
