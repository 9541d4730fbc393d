#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "gr/gr.h"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

/// Carries a library status out of a subcommand.
struct Failure {
  gr_status status;
  std::string message;
};

void check(gr_status s, const std::string& context) {
  if (s != GR_OK) throw Failure{s, context + ": " + gr_last_error()};
}

template <class T, void (*Free)(T*)>
struct Handle {
  T* p = nullptr;
  Handle() = default;
  Handle(const Handle&) = delete;
  Handle& operator=(const Handle&) = delete;
  ~Handle() { Free(p); }
  T** out() { return &p; }
  T* get() const { return p; }
};
using Mesh = Handle<gr_mesh, gr_mesh_free>;
using Cameras = Handle<gr_cameras, gr_cameras_free>;
using Bundle = Handle<gr_bundle, gr_bundle_free>;
using Gaussians = Handle<gr_gaussians, gr_gaussians_free>;

/// Owns a report string returned by the library.
struct Report {
  char* s = nullptr;
  ~Report() { gr_string_free(s); }
  json parsed() const { return s ? json::parse(s) : json::object(); }
};

std::string read_text(const std::string& path) {
  if (path.empty()) return "";
  std::ifstream in(path);
  if (!in) throw Failure{GR_ERR_IO, "cannot open " + path};
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

json read_config(const std::string& path) {
  const std::string text = read_text(path);
  if (text.empty()) return json::object();
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw Failure{GR_ERR_VALIDATION, path + ": " + e.what()};
  }
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw Failure{GR_ERR_IO, "cannot write " + path.string()};
  out << text << '\n';
}

void load_mesh(Mesh& m, const std::string& path) { check(gr_mesh_load_obj(path.c_str(), m.out()), path); }

void save_mesh(const Mesh& m, const std::string& path) {
  const fs::path p(path);
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  check(gr_mesh_save_obj(m.get(), path.c_str()), path);
}

fs::path sibling(const std::string& out, const std::string& suffix) {
  const fs::path p(out);
  return p.parent_path() / (p.stem().string() + suffix);
}

std::vector<double> parse_numbers(const std::string& text, const std::string& what) {
  std::vector<double> v;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      v.push_back(std::stod(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw Failure{GR_ERR_VALIDATION, what + ": cannot parse '" + item + "'"};
    }
  }
  return v;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Guidance-driven garment mesh refinement"};
  app.require_subcommand(1);
  int threads = 0;
  app.add_option("--threads", threads, "Cap on worker threads (0 = all cores)")->check(CLI::NonNegativeNumber);

  std::vector<std::function<void()>> actions;

  // smooth
  std::string sm_in, sm_out, sm_cfg;
  auto* smooth = app.add_subcommand("smooth", "Quasi-static wrinkle removal");
  smooth->add_option("input", sm_in, "Input OBJ")->required()->check(CLI::ExistingFile);
  smooth->add_option("output", sm_out, "Output OBJ")->required();
  smooth->add_option("--config", sm_cfg, "Smoother JSON config")->check(CLI::ExistingFile);
  smooth->callback([&] {
    actions.push_back([&] {
      Mesh in, out;
      load_mesh(in, sm_in);
      Report rep;
      check(gr_smooth(in.get(), read_config(sm_cfg).dump().c_str(), out.out(), &rep.s), "smooth");
      save_mesh(out, sm_out);
      write_text(sibling(sm_out, ".smooth.json"), rep.parsed().dump(2));
    });
  });

  // cameras
  std::string cam_mesh, cam_out;
  int cam_count = 24, cam_res = 512;
  auto* cams = app.add_subcommand("cameras", "Write a view ring around a mesh to cameras.json");
  cams->add_option("mesh", cam_mesh, "Mesh whose bounding box sets the ring")->required()->check(CLI::ExistingFile);
  cams->add_option("output", cam_out, "Output cameras.json")->required();
  cams->add_option("--count", cam_count, "Number of views")->check(CLI::PositiveNumber);
  cams->add_option("--resolution", cam_res, "Square image size in pixels")->check(CLI::PositiveNumber);
  cams->callback([&] {
    actions.push_back([&] {
      Mesh m;
      load_mesh(m, cam_mesh);
      Cameras c;
      check(gr_cameras_ring(m.get(), cam_count, cam_res, c.out()), "cameras");
      if (fs::path(cam_out).has_parent_path()) fs::create_directories(fs::path(cam_out).parent_path());
      check(gr_cameras_save(c.get(), cam_out.c_str()), cam_out);
    });
  });

  // render-gs
  std::string gs_ply, gs_cams, gs_out, gs_cfg;
  double gs_threshold = 0.5;
  auto* rgs = app.add_subcommand("render-gs", "Render splat kernels into an RGB + mask guidance bundle");
  rgs->add_option("kernels", gs_ply, "Binary PLY")->required()->check(CLI::ExistingFile);
  rgs->add_option("cameras", gs_cams, "cameras.json")->required()->check(CLI::ExistingFile);
  rgs->add_option("output", gs_out, "Bundle directory")->required();
  rgs->add_option("--threshold", gs_threshold, "Opacity threshold for mask kernels")->check(CLI::Range(0.0, 1.0));
  rgs->add_option("--config", gs_cfg, "Splat renderer JSON options")->check(CLI::ExistingFile);
  rgs->callback([&] {
    actions.push_back([&] {
      Gaussians g;
      check(gr_gaussians_load_ply(gs_ply.c_str(), g.out()), gs_ply);
      Cameras c;
      check(gr_cameras_load(gs_cams.c_str(), c.out()), gs_cams);
      Bundle b;
      check(gr_render_gaussians(g.get(), c.get(), gs_threshold, read_config(gs_cfg).dump().c_str(), b.out()), "render-gs");
      check(gr_bundle_save(b.get(), gs_out.c_str()), gs_out);
    });
  });

  // synth-guidance
  std::string sg_mesh, sg_cams, sg_out, sg_tex;
  auto* sg = app.add_subcommand("synth-guidance", "Render oracle guidance from a known mesh");
  sg->add_option("target", sg_mesh, "Target OBJ")->required()->check(CLI::ExistingFile);
  sg->add_option("cameras", sg_cams, "cameras.json")->required()->check(CLI::ExistingFile);
  sg->add_option("output", sg_out, "Bundle directory")->required();
  sg->add_option("--texture", sg_tex, "PNG texture (target must carry uvs)")->check(CLI::ExistingFile);
  sg->callback([&] {
    actions.push_back([&] {
      Mesh m;
      load_mesh(m, sg_mesh);
      Cameras c;
      check(gr_cameras_load(sg_cams.c_str(), c.out()), sg_cams);
      Bundle b;
      check(gr_synth_guidance(m.get(), c.get(), sg_tex.empty() ? nullptr : sg_tex.c_str(), b.out()), "synth-guidance");
      check(gr_bundle_save(b.get(), sg_out.c_str()), sg_out);
    });
  });

  // deform
  std::string df_mesh, df_bundle, df_out, df_cfg, df_iters;
  std::uint64_t df_seed = 0;
  auto* df = app.add_subcommand("deform", "Coarse and fine deformation toward a guidance bundle");
  df->add_option("template", df_mesh, "Template OBJ")->required()->check(CLI::ExistingFile);
  df->add_option("bundle", df_bundle, "Guidance bundle directory")->required()->check(CLI::ExistingDirectory);
  df->add_option("output", df_out, "Output OBJ")->required();
  df->add_option("--config", df_cfg, "Deformer JSON config")->check(CLI::ExistingFile);
  auto* seed_opt = df->add_option("--seed", df_seed, "Random seed");
  df->add_option("--iterations", df_iters, "Coarse,fine iteration counts");
  df->callback([&] {
    actions.push_back([&] {
      json cfg = read_config(df_cfg);
      if (*seed_opt) cfg["seed"] = df_seed;
      if (!df_iters.empty()) {
        const auto its = parse_numbers(df_iters, "--iterations");
        if (its.size() != 2 || its[0] < 0 || its[1] < 0 || its[0] != static_cast<int>(its[0]) || its[1] != static_cast<int>(its[1])) {
          throw Failure{GR_ERR_VALIDATION, "--iterations expects two non-negative integers 'coarse,fine'"};
        }
        cfg["coarse"]["iterations"] = static_cast<int>(its[0]);
        cfg["fine"]["iterations"] = static_cast<int>(its[1]);
      }
      Mesh m, out;
      load_mesh(m, df_mesh);
      Bundle b;
      check(gr_bundle_load(df_bundle.c_str(), b.out()), df_bundle);
      const fs::path artifacts = sibling(df_out, "_deform");
      fs::create_directories(artifacts);
      Report rep;
      check(gr_deform(m.get(), b.get(), cfg.dump().c_str(), artifacts.string().c_str(), out.out(), &rep.s), "deform");
      save_mesh(out, df_out);
      const json r = rep.parsed();
      write_text(artifacts / "config.json", r["config"].dump(2));
      write_text(artifacts / "report.json", r.dump(2));
      for (const auto& w : r["coarse"]["warnings"]) std::cerr << "warning: " << w.get<std::string>() << '\n';
      for (const auto& w : r["fine"]["warnings"]) std::cerr << "warning: " << w.get<std::string>() << '\n';
    });
  });

  // texture
  std::string tx_mesh, tx_bundle, tx_prefix, tx_cfg;
  auto* tx = app.add_subcommand("texture", "Fit a neural texture field and bake it to a UV texture");
  tx->add_option("mesh", tx_mesh, "Mesh OBJ")->required()->check(CLI::ExistingFile);
  tx->add_option("bundle", tx_bundle, "Guidance bundle directory")->required()->check(CLI::ExistingDirectory);
  tx->add_option("prefix", tx_prefix, "Output prefix for .obj/.mtl/.png")->required();
  tx->add_option("--config", tx_cfg, "Texture JSON config")->check(CLI::ExistingFile);
  tx->callback([&] {
    actions.push_back([&] {
      Mesh m;
      load_mesh(m, tx_mesh);
      Bundle b;
      check(gr_bundle_load(tx_bundle.c_str(), b.out()), tx_bundle);
      Report rep;
      check(gr_texture(m.get(), b.get(), read_config(tx_cfg).dump().c_str(), tx_prefix.c_str(), &rep.s), "texture");
      write_text(tx_prefix + ".texture.json", rep.parsed().dump(2));
    });
  });

  // drape
  std::string dr_garment, dr_body, dr_out, dr_cfg, dr_transform;
  auto* dr = app.add_subcommand("drape", "Push a garment outside a body mesh");
  dr->add_option("garment", dr_garment, "Garment OBJ")->required()->check(CLI::ExistingFile);
  dr->add_option("body", dr_body, "Watertight body OBJ")->required()->check(CLI::ExistingFile);
  dr->add_option("output", dr_out, "Output OBJ")->required();
  dr->add_option("--transform", dr_transform, "Similarity 'scale,tx,ty,tz' applied to the garment first");
  dr->add_option("--config", dr_cfg, "PBD JSON config")->check(CLI::ExistingFile);
  dr->callback([&] {
    actions.push_back([&] {
      double scale = 1.0;
      double t[3] = {0, 0, 0};
      if (!dr_transform.empty()) {
        const auto v = parse_numbers(dr_transform, "--transform");
        if (v.size() != 4) throw Failure{GR_ERR_VALIDATION, "--transform expects 'scale,tx,ty,tz'"};
        scale = v[0];
        t[0] = v[1];
        t[1] = v[2];
        t[2] = v[3];
      }
      Mesh g, body, out;
      load_mesh(g, dr_garment);
      load_mesh(body, dr_body);
      Report rep;
      check(gr_drape(g.get(), body.get(), scale, t, read_config(dr_cfg).dump().c_str(), out.out(), &rep.s), "drape");
      save_mesh(out, dr_out);
      const json r = rep.parsed();
      write_text(sibling(dr_out, ".drape.json"), r.dump(2));
      std::cout << json{{"penetrations_before", r["before"]["count"]}, {"penetrations_after", r["after"]["count"]}}.dump() << '\n';
    });
  });

  // eval
  auto* ev = app.add_subcommand("eval", "Mesh metrics as JSON");
  ev->require_subcommand(1);
  std::string ch_a, ch_b;
  std::size_t ch_samples = 20000;
  std::uint64_t ch_seed = 7;
  auto* ch = ev->add_subcommand("chamfer", "Symmetric Chamfer distance");
  ch->add_option("a", ch_a, "First OBJ")->required()->check(CLI::ExistingFile);
  ch->add_option("b", ch_b, "Second OBJ")->required()->check(CLI::ExistingFile);
  ch->add_option("--samples", ch_samples, "Surface samples per mesh")->check(CLI::PositiveNumber);
  ch->add_option("--seed", ch_seed, "Sampling seed");
  ch->callback([&] {
    actions.push_back([&] {
      Mesh a, b;
      load_mesh(a, ch_a);
      load_mesh(b, ch_b);
      double d = 0.0;
      check(gr_chamfer_distance(a.get(), b.get(), ch_samples, ch_seed, &d), "chamfer");
      std::cout << json{{"chamfer", d}}.dump() << '\n';
    });
  });
  std::string lp_mesh;
  auto* lp = ev->add_subcommand("loops", "Boundary loop count");
  lp->add_option("mesh", lp_mesh, "Mesh OBJ")->required()->check(CLI::ExistingFile);
  lp->callback([&] {
    actions.push_back([&] {
      Mesh m;
      load_mesh(m, lp_mesh);
      std::size_t n = 0;
      check(gr_mesh_boundary_loop_count(m.get(), &n), "loops");
      std::cout << json{{"boundary_loops", n}}.dump() << '\n';
    });
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }
  gr_set_threads(threads);
  try {
    for (auto& a : actions) a();
  } catch (const Failure& f) {
    std::cerr << "error: " << f.message << '\n';
    return f.status == GR_ERR_NUMERICAL ? 2 : 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
