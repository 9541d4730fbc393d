#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <sys/wait.h>

#include <json.hpp>

#include "gr/gaussians.hpp"
#include "gr/mesh.hpp"
#include "gr/primitives.hpp"
#include "oracles.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace gr;

namespace {

const fs::path& work_dir() {
  static const fs::path dir = [] {
    const fs::path d = fs::temp_directory_path() / "gr_test_cli";
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
  }();
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

struct Run {
  int code = -1;
  std::string out, err;
};

Run run(const std::string& args) {
  const fs::path out = work_dir() / "stdout.txt", err = work_dir() / "stderr.txt";
  const std::string cmd = std::string("\"") + GR_CLI_PATH + "\" --threads 1 " + args + " >" + out.string() + " 2>" + err.string();
  const int status = std::system(cmd.c_str());
  Run r;
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  r.out = slurp(out);
  r.err = slurp(err);
  return r;
}

std::string path(const std::string& name) { return (work_dir() / name).string(); }

std::string write_mesh(const TriMesh& m, const std::string& name) {
  save_obj(m, path(name), ObjWriteOptions{});
  return path(name);
}

void write_file(const std::string& name, const std::string& text) { std::ofstream(path(name)) << text; }

}  // namespace

TEST_CASE("eval subcommands") {
  const std::string tube = write_mesh(primitives::tube(16, 4, 0.5, -0.5, 0.5), "tube.obj");
  Run r = run("eval loops " + tube);
  REQUIRE(r.code == 0);
  CHECK(json::parse(r.out) == json{{"boundary_loops", 2}});
  r = run("eval chamfer " + tube + " " + tube + " --samples 2000");
  REQUIRE(r.code == 0);
  const double d = json::parse(r.out)["chamfer"].get<double>();
  CHECK(d >= 0.0);
  CHECK(d < 0.02);
}

TEST_CASE("argument and input errors exit with status 1") {
  const std::string tube = write_mesh(primitives::tube(16, 4, 0.5, -0.5, 0.5), "tube.obj");
  CHECK(run("").code == 1);
  CHECK(run("no-such-command").code == 1);
  Run r = run("eval loops " + path("missing.obj"));
  CHECK(r.code == 1);
  CHECK(r.err.find("missing.obj") != std::string::npos);
  write_file("broken.obj", "v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 9\n");
  r = run("eval loops " + path("broken.obj"));
  CHECK(r.code == 1);
  CHECK(r.err.find("broken.obj") != std::string::npos);
  write_file("bad_smooth.json", R"({"bending_stifness": 1})");
  r = run("smooth " + tube + " " + path("s.obj") + " --config " + path("bad_smooth.json"));
  CHECK(r.code == 1);
  CHECK(r.err.find("bending_stifness") != std::string::npos);
  write_file("not_json.json", "{oops");
  r = run("smooth " + tube + " " + path("s.obj") + " --config " + path("not_json.json"));
  CHECK(r.code == 1);
  CHECK(r.err.find("not_json.json") != std::string::npos);
  r = run("drape " + tube + " " + tube + " " + path("d.obj"));
  CHECK(r.code == 1);
  CHECK(r.err.find("watertight") != std::string::npos);
  r = run("drape " + tube + " " + tube + " " + path("d.obj") + " --transform 1,2");
  CHECK(r.code == 1);
}

TEST_CASE("guidance, zero-iteration deform, and determinism") {
  const std::string target = write_mesh(primitives::icosphere(2, 0.5), "target.obj");
  const std::string templ = write_mesh(primitives::icosphere(2, 0.45), "template.obj");
  REQUIRE(run("cameras " + target + " " + path("cams/cameras.json") + " --count 4 --resolution 32").code == 0);
  const json cams = json::parse(slurp(path("cams/cameras.json")));
  CHECK(cams.dump().find("32") != std::string::npos);
  REQUIRE(run("synth-guidance " + target + " " + path("cams/cameras.json") + " " + path("bundle")).code == 0);
  CHECK(fs::exists(path("bundle")));

  SUBCASE("zero iterations copy the template") {
    const Run r = run("deform " + templ + " " + path("bundle") + " " + path("zero/out.obj") + " --iterations 0,0");
    REQUIRE(r.code == 0);
    const TriMesh a = load_obj(templ), b = load_obj(path("zero/out.obj"));
    CHECK(a.faces == b.faces);
    CHECK(a.vertices == b.vertices);
    const json cfg = json::parse(slurp(path("zero/out_deform/config.json")));
    CHECK(cfg["coarse"]["iterations"] == 0);
    CHECK(fs::exists(path("zero/out_deform/report.json")));
    CHECK(fs::exists(path("zero/out_deform/progress.csv")));
    CHECK(run("deform " + templ + " " + path("bundle") + " " + path("zero/x.obj") + " --iterations 1,x").code == 1);
  }
  SUBCASE("a short run is reproducible") {
    write_file("deform.json", R"({"coarse": {"views_per_iteration": 2}, "fine": {"views_per_iteration": 2, "rgb_pixels_per_view": 64},
                                   "shader_hidden": 16, "shader_octaves": 2})");
    const std::string common = " --config " + path("deform.json") + " --iterations 8,3 --seed 3";
    REQUIRE(run("deform " + templ + " " + path("bundle") + " " + path("r1/out.obj") + common).code == 0);
    REQUIRE(run("deform " + templ + " " + path("bundle") + " " + path("r2/out.obj") + common).code == 0);
    CHECK(slurp(path("r1/out.obj")) == slurp(path("r2/out.obj")));
    CHECK(slurp(path("r1/out.obj")) != slurp(templ));
  }
}

TEST_CASE("render-gs builds a bundle from a kernel file") {
  save_gaussian_ply(oracle::random_cloud(200, 5), path("cloud.ply"));
  const std::string target = write_mesh(primitives::icosphere(1, 0.5), "ball.obj");
  REQUIRE(run("cameras " + target + " " + path("gs_cams.json") + " --count 3 --resolution 24").code == 0);
  Run r = run("render-gs " + path("cloud.ply") + " " + path("gs_cams.json") + " " + path("gs_bundle"));
  REQUIRE(r.code == 0);
  CHECK(fs::exists(path("gs_bundle")));
  r = run("render-gs " + path("cloud.ply") + " " + path("gs_cams.json") + " " + path("gs_bundle") + " --threshold 2");
  CHECK(r.code == 1);
}

TEST_CASE("smooth and drape write meshes and reports") {
  TriMesh sheet = primitives::grid(6, 6, 1.0, 1.0);
  for (std::size_t i = 0; i < sheet.vertices.size(); ++i) sheet.vertices[i].z() += 0.02 * std::sin(3.0 * static_cast<double>(i));
  const std::string s = write_mesh(sheet, "sheet.obj");
  Run r = run("smooth " + s + " " + path("smooth/out.obj"));
  REQUIRE(r.code == 0);
  CHECK(load_obj(path("smooth/out.obj")).faces == sheet.faces);
  CHECK(json::parse(slurp(path("smooth/out.smooth.json"))).contains("final_energy"));

  const std::string skirt = write_mesh(primitives::tube(24, 6, 0.5, -0.5, 0.5), "skirt.obj");
  const std::string body = write_mesh(primitives::icosphere(3, 0.5), "body.obj");
  r = run("drape " + skirt + " " + body + " " + path("drape/out.obj") + " --transform 0.9,0.02,0,0");
  REQUIRE(r.code == 0);
  const json j = json::parse(r.out);
  CHECK(j["penetrations_before"].get<int>() > 0);
  CHECK(j["penetrations_after"] == 0);
}
