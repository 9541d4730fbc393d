#include "gr/gr.h"

#include <cstdio>
#include <cstring>
#include <string>

#include <json.hpp>

#include "gr/config.hpp"
#include "gr/error.hpp"
#include "gr/parallel.hpp"

struct gr_mesh {
  gr::TriMesh mesh;
};
struct gr_cameras {
  std::vector<gr::CameraView> views;
};
struct gr_bundle {
  gr::GuidanceBundle bundle;
};
struct gr_gaussians {
  gr::GaussianCloud cloud;
};

namespace {

using nlohmann::json;

thread_local std::string g_last_error;

template <class Fn>
gr_status guarded(Fn&& fn) {
  g_last_error.clear();
  try {
    fn();
    return GR_OK;
  } catch (const gr::ValidationError& e) {
    g_last_error = e.what();
    return GR_ERR_VALIDATION;
  } catch (const gr::NumericalError& e) {
    g_last_error = e.what();
    return GR_ERR_NUMERICAL;
  } catch (const gr::IoError& e) {
    g_last_error = e.what();
    return GR_ERR_IO;
  } catch (const json::exception& e) {
    g_last_error = std::string("json: ") + e.what();
    return GR_ERR_VALIDATION;
  } catch (const std::invalid_argument& e) {
    g_last_error = e.what();
    return GR_ERR_INVALID_ARGUMENT;
  } catch (const std::exception& e) {
    g_last_error = std::string("internal error: ") + e.what();
    return GR_ERR_INTERNAL;
  } catch (...) {
    g_last_error = "internal error";
    return GR_ERR_INTERNAL;
  }
}

void require(const void* p, const char* name) {
  if (!p) throw std::invalid_argument(std::string(name) + " must not be NULL");
}

json parse_config(const char* text) {
  if (!text || !*text) return json::object();
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw gr::ValidationError(std::string("config: ") + e.what());
  }
}

char* dup_string(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (!out) throw std::bad_alloc();
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

void emit(char** report_json, const json& j) {
  if (report_json) *report_json = dup_string(j.dump(2));
}

json progress_json(const gr::ProgressRow& r) {
  return {{"iteration", r.iteration}, {"total", r.total},   {"mask", r.mask},
          {"normal_consistency", r.normal_consistency},  {"laplacian", r.laplacian}, {"rgb", r.rgb},
          {"normal", r.normal},         {"hole", r.hole}, {"lr", r.lr}, {"tau", r.tau}};
}

json report_json_of(const gr::StageReport& r) {
  json j = {{"iterations", r.rows.size()},
            {"warnings", r.warnings},
            {"final_tau", r.final_tau},
            {"boundary_loops_before", r.loops_before},
            {"boundary_loops_after", r.loops_after}};
  if (!r.rows.empty()) {
    j["first"] = progress_json(r.rows.front());
    j["last"] = progress_json(r.rows.back());
  }
  return j;
}

json penetration_json(const gr::PenetrationReport& r) {
  return {{"count", r.count}, {"worst_depth", r.worst_depth}, {"worst_vertex", r.worst_vertex}};
}

}  // namespace

extern "C" {

const char* gr_version(void) { return "0.1.0"; }

const char* gr_last_error(void) { return g_last_error.c_str(); }

const char* gr_status_name(gr_status status) {
  switch (status) {
    case GR_OK:
      return "ok";
    case GR_ERR_VALIDATION:
      return "validation error";
    case GR_ERR_NUMERICAL:
      return "numerical error";
    case GR_ERR_IO:
      return "i/o error";
    case GR_ERR_INVALID_ARGUMENT:
      return "invalid argument";
    case GR_ERR_INTERNAL:
      return "internal error";
  }
  return "unknown status";
}

void gr_set_threads(int threads) { gr::set_thread_count(threads < 0 ? 0 : threads); }

void gr_string_free(char* s) { std::free(s); }

gr_status gr_mesh_load_obj(const char* path, gr_mesh** out) {
  return guarded([&] {
    require(path, "path");
    require(out, "out");
    *out = new gr_mesh{gr::load_obj(path)};
  });
}

gr_status gr_mesh_save_obj(const gr_mesh* mesh, const char* path) {
  return guarded([&] {
    require(mesh, "mesh");
    require(path, "path");
    gr::save_obj(mesh->mesh, path);
  });
}

gr_status gr_mesh_create(const double* vertices, size_t vertex_count, const int32_t* faces, size_t face_count, gr_mesh** out) {
  return guarded([&] {
    require(out, "out");
    if (vertex_count > 0) require(vertices, "vertices");
    if (face_count > 0) require(faces, "faces");
    gr::TriMesh m;
    m.vertices.resize(vertex_count);
    for (size_t i = 0; i < vertex_count; ++i) m.vertices[i] = gr::Vec3(vertices[3 * i], vertices[3 * i + 1], vertices[3 * i + 2]);
    m.faces.resize(face_count);
    for (size_t f = 0; f < face_count; ++f) m.faces[f] = {faces[3 * f], faces[3 * f + 1], faces[3 * f + 2]};
    gr::validate_mesh(m);
    *out = new gr_mesh{std::move(m)};
  });
}

void gr_mesh_free(gr_mesh* mesh) { delete mesh; }

size_t gr_mesh_vertex_count(const gr_mesh* mesh) { return mesh ? mesh->mesh.vertex_count() : 0; }

size_t gr_mesh_face_count(const gr_mesh* mesh) { return mesh ? mesh->mesh.face_count() : 0; }

gr_status gr_mesh_get_vertices(const gr_mesh* mesh, double* out) {
  return guarded([&] {
    require(mesh, "mesh");
    require(out, "out");
    for (size_t i = 0; i < mesh->mesh.vertex_count(); ++i) {
      for (int k = 0; k < 3; ++k) out[3 * i + k] = mesh->mesh.vertices[i][k];
    }
  });
}

gr_status gr_mesh_get_faces(const gr_mesh* mesh, int32_t* out) {
  return guarded([&] {
    require(mesh, "mesh");
    require(out, "out");
    for (size_t f = 0; f < mesh->mesh.face_count(); ++f) {
      for (int k = 0; k < 3; ++k) out[3 * f + k] = mesh->mesh.faces[f][k];
    }
  });
}

gr_status gr_mesh_boundary_loop_count(const gr_mesh* mesh, size_t* out) {
  return guarded([&] {
    require(mesh, "mesh");
    require(out, "out");
    *out = gr::boundary_loops(mesh->mesh).loops.size();
  });
}

gr_status gr_chamfer_distance(const gr_mesh* a, const gr_mesh* b, size_t samples, uint64_t seed, double* out) {
  return guarded([&] {
    require(a, "a");
    require(b, "b");
    require(out, "out");
    if (samples == 0) throw gr::ValidationError("chamfer: samples must be >= 1");
    if (a->mesh.face_count() == 0 || b->mesh.face_count() == 0) throw gr::ValidationError("chamfer: empty mesh");
    *out = gr::chamfer_distance(a->mesh, b->mesh, samples, seed);
  });
}

gr_status gr_cameras_load(const char* path, gr_cameras** out) {
  return guarded([&] {
    require(path, "path");
    require(out, "out");
    *out = new gr_cameras{gr::load_cameras_json(path)};
  });
}

gr_status gr_cameras_save(const gr_cameras* cameras, const char* path) {
  return guarded([&] {
    require(cameras, "cameras");
    require(path, "path");
    gr::save_cameras_json(cameras->views, path);
  });
}

gr_status gr_cameras_ring(const gr_mesh* mesh, int count, int resolution, gr_cameras** out) {
  return guarded([&] {
    require(mesh, "mesh");
    require(out, "out");
    if (count < 1 || resolution < 1) throw gr::ValidationError("camera ring needs count >= 1 and resolution >= 1");
    if (mesh->mesh.vertex_count() == 0) throw gr::ValidationError("camera ring: empty mesh");
    *out = new gr_cameras{gr::make_view_ring(gr::default_ring_for(mesh->mesh.bounds(), count, resolution))};
  });
}

void gr_cameras_free(gr_cameras* cameras) { delete cameras; }

size_t gr_cameras_count(const gr_cameras* cameras) { return cameras ? cameras->views.size() : 0; }

gr_status gr_bundle_load(const char* dir, gr_bundle** out) {
  return guarded([&] {
    require(dir, "dir");
    require(out, "out");
    *out = new gr_bundle{gr::load_bundle(dir)};
  });
}

gr_status gr_bundle_save(const gr_bundle* bundle, const char* dir) {
  return guarded([&] {
    require(bundle, "bundle");
    require(dir, "dir");
    gr::save_bundle(bundle->bundle, dir);
  });
}

void gr_bundle_free(gr_bundle* bundle) { delete bundle; }

size_t gr_bundle_view_count(const gr_bundle* bundle) { return bundle ? bundle->bundle.size() : 0; }

gr_status gr_synth_guidance(const gr_mesh* target, const gr_cameras* cameras, const char* texture_png, gr_bundle** out) {
  return guarded([&] {
    require(target, "target");
    require(cameras, "cameras");
    require(out, "out");
    gr::validate_mesh(target->mesh);
    gr::SurfaceAppearance look;
    if (texture_png) {
      if (!target->mesh.has_uvs()) throw gr::ValidationError("synth-guidance: a texture needs a mesh with uvs");
      gr::ImageF tex = gr::to_float(gr::read_png(texture_png));
      if (tex.channels != 3) {
        gr::ImageF rgb(tex.width, tex.height, 3);
        for (size_t p = 0; p < tex.pixel_count(); ++p) {
          for (int c = 0; c < 3; ++c) rgb.pixel(p)[c] = tex.pixel(p)[tex.channels == 1 ? 0 : c];
        }
        tex = std::move(rgb);
      }
      look.texture = std::move(tex);
    }
    gr::GuidanceBundle b = gr::synth_guidance(target->mesh, look, cameras->views);
    if (texture_png) b.provenance_parameters["texture"] = texture_png;
    *out = new gr_bundle{std::move(b)};
  });
}

gr_status gr_gaussians_load_ply(const char* path, gr_gaussians** out) {
  return guarded([&] {
    require(path, "path");
    require(out, "out");
    *out = new gr_gaussians{gr::load_gaussian_ply(path)};
  });
}

void gr_gaussians_free(gr_gaussians* cloud) { delete cloud; }

size_t gr_gaussians_count(const gr_gaussians* cloud) { return cloud ? cloud->cloud.size() : 0; }

gr_status gr_render_gaussians(const gr_gaussians* cloud, const gr_cameras* cameras, double threshold, const char* options_json,
                              gr_bundle** out) {
  return guarded([&] {
    require(cloud, "cloud");
    require(cameras, "cameras");
    require(out, "out");
    if (!(threshold >= 0.0 && threshold <= 1.0)) throw gr::ValidationError("opacity threshold must lie in [0, 1]");
    const gr::SplatOptions opt = gr::splat_options_from_json(parse_config(options_json));
    for (const auto& v : cameras->views) v.validate();
    gr::GuidanceBundle b;
    b.views = cameras->views;
    b.rgb.resize(b.views.size());
    b.mask.resize(b.views.size());
    gr::parallel_for(b.views.size(), [&](size_t i) {
      b.rgb[i] = gr::render_rgb(cloud->cloud, b.views[i], opt);
      b.mask[i] = gr::render_mask(cloud->cloud, b.views[i], threshold, opt);
    });
    b.provenance = gr::Provenance::GaussianSplat;
    b.provenance_parameters = {{"threshold", threshold}, {"kernels", cloud->cloud.size()}, {"options", gr::to_json(opt)}};
    *out = new gr_bundle{std::move(b)};
  });
}

gr_status gr_smooth(const gr_mesh* mesh, const char* config_json, gr_mesh** out, char** report_json) {
  return guarded([&] {
    require(mesh, "mesh");
    require(out, "out");
    const gr::ShellEnergyConfig cfg = gr::shell_config_from_json(parse_config(config_json));
    gr::SmoothResult r = gr::smooth_quasistatic(mesh->mesh, cfg);
    json rep = {{"config", gr::to_json(cfg)},
                {"iterations", r.iterations},
                {"converged", r.converged},
                {"stop_reason", r.stop_reason},
                {"inverted_faces", r.inverted_faces},
                {"initial_energy", r.energies.empty() ? 0.0 : r.energies.front()},
                {"final_energy", r.energies.empty() ? 0.0 : r.energies.back()}};
    *out = new gr_mesh{std::move(r.mesh)};
    emit(report_json, rep);
  });
}

gr_status gr_deform(const gr_mesh* template_mesh, const gr_bundle* bundle, const char* config_json, const char* artifact_dir,
                    gr_mesh** out, char** report_json) {
  return guarded([&] {
    require(template_mesh, "template_mesh");
    require(bundle, "bundle");
    require(out, "out");
    const gr::DeformConfig cfg = gr::deform_config_from_json(parse_config(config_json));
    gr::validate_mesh(template_mesh->mesh);
    bundle->bundle.validate();
    gr::DeformResult r = gr::deform(template_mesh->mesh, bundle->bundle, cfg);
    if (artifact_dir) {
      const std::filesystem::path dir(artifact_dir);
      std::filesystem::create_directories(dir / "hole_masks");
      std::vector<gr::ProgressRow> rows = r.coarse_report.rows;
      rows.insert(rows.end(), r.fine_report.rows.begin(), r.fine_report.rows.end());
      gr::write_progress_csv(rows, dir / "progress.csv");
      gr::save_obj(r.coarse, dir / "coarse.obj");
      for (size_t i = 0; i < r.holes.size(); ++i) {
        char name[32];
        std::snprintf(name, sizeof name, "view_%03zu_hole.png", i);
        gr::write_png(gr::to_u8(r.holes[i]), dir / "hole_masks" / name);
      }
    }
    json rep = {{"config", gr::to_json(cfg)},
                {"coarse", report_json_of(r.coarse_report)},
                {"fine", report_json_of(r.fine_report)},
                {"boundary_loops", gr::boundary_loops(r.fine).loops.size()}};
    *out = new gr_mesh{std::move(r.fine)};
    emit(report_json, rep);
  });
}

gr_status gr_texture(const gr_mesh* mesh, const gr_bundle* bundle, const char* config_json, const char* out_prefix,
                     char** report_json) {
  return guarded([&] {
    require(mesh, "mesh");
    require(bundle, "bundle");
    require(out_prefix, "out_prefix");
    const gr::TextureConfig cfg = gr::texture_config_from_json(parse_config(config_json));
    gr::validate_mesh(mesh->mesh);
    bundle->bundle.validate();
    const gr::NetfFitResult fit = gr::fit_netf(mesh->mesh, bundle->bundle, cfg.fit);
    const gr::BakeResult baked = gr::bake_texture(mesh->mesh, fit.field, cfg.bake);
    gr::save_textured_mesh(baked, out_prefix);
    gr::save_netf(fit.field, std::string(out_prefix) + ".netf");
    emit(report_json, {{"config", gr::to_json(cfg)}, {"epoch_loss", fit.epoch_loss}, {"texture_resolution", baked.resolution}});
  });
}

gr_status gr_drape(const gr_mesh* garment, const gr_mesh* body, double scale, const double* translation, const char* config_json,
                   gr_mesh** out, char** report_json) {
  return guarded([&] {
    require(garment, "garment");
    require(body, "body");
    require(out, "out");
    const gr::PbdConfig cfg = gr::pbd_config_from_json(parse_config(config_json));
    gr::Similarity t;
    t.scale = scale;
    if (translation) t.translation = gr::Vec3(translation[0], translation[1], translation[2]);
    gr::require_watertight(body->mesh);
    const gr::TriMesh placed = gr::apply_similarity(garment->mesh, t);
    gr::DrapeResult r = gr::pbd_push_out(placed, body->mesh, cfg);
    json rep = {{"config", gr::to_json(cfg)},
                {"transform", {{"scale", t.scale}, {"translation", {t.translation.x(), t.translation.y(), t.translation.z()}}}},
                {"iterations", r.iterations},
                {"before", penetration_json(r.before)},
                {"after", penetration_json(r.after)},
                {"mean_edge_length_drift", gr::mean_edge_length_drift(placed, r.mesh)}};
    *out = new gr_mesh{std::move(r.mesh)};
    emit(report_json, rep);
  });
}

}  // extern "C"
