#include "gr/guidance.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "gr/error.hpp"
#include "gr/parallel.hpp"
#include "gr/raster.hpp"

namespace gr {
namespace {

using nlohmann::json;

std::filesystem::path view_file(const std::filesystem::path& dir, std::size_t i, const char* kind) {
  char name[64];
  std::snprintf(name, sizeof(name), "view_%03zu_%s.png", i, kind);
  return dir / name;
}

double quantize(double v) { return std::round(255.0 * std::clamp(v, 0.0, 1.0)) / 255.0; }

ImageF load_channels(const std::filesystem::path& path, int channels, const CameraView& view) {
  const ImageU8 raw = read_png(path);
  if (raw.width != view.width || raw.height != view.height) {
    throw ValidationError(path.string() + ": image is " + std::to_string(raw.width) + "x" + std::to_string(raw.height) +
                          " but its camera is " + std::to_string(view.width) + "x" + std::to_string(view.height));
  }
  ImageU8 img = raw;
  if (raw.channels != channels) {
    // RGBA is accepted for RGB and RGB for gray; extra channels are dropped.
    img = ImageU8(raw.width, raw.height, channels);
    for (std::size_t p = 0; p < raw.pixel_count(); ++p) {
      if (channels == 3 && raw.channels >= 3) {
        for (int c = 0; c < 3; ++c) img.pixel(p)[c] = raw.pixel(p)[c];
      } else if (channels == 1) {
        img.pixel(p)[0] = raw.pixel(p)[0];
      } else {
        throw ValidationError(path.string() + ": expected " + std::to_string(channels) + " channels");
      }
    }
  }
  return to_float(img);
}

}  // namespace

std::string provenance_name(Provenance p) {
  switch (p) {
    case Provenance::GaussianSplat: return "gaussian-splat";
    case Provenance::SyntheticOracle: return "synthetic-oracle";
    case Provenance::External: return "external";
  }
  return "external";
}

Provenance parse_provenance(const std::string& name) {
  if (name == "gaussian-splat") return Provenance::GaussianSplat;
  if (name == "synthetic-oracle") return Provenance::SyntheticOracle;
  if (name == "external") return Provenance::External;
  throw ValidationError("unknown provenance '" + name + "'");
}

void GuidanceBundle::validate() const {
  if (views.empty()) throw ValidationError("guidance bundle has no views");
  if (rgb.size() != views.size() || mask.size() != views.size()) throw ValidationError("guidance bundle image count does not match view count");
  if (!normal.empty() && normal.size() != views.size()) throw ValidationError("guidance bundle normal count does not match view count");
  for (std::size_t i = 0; i < views.size(); ++i) {
    const auto& v = views[i];
    v.validate();
    auto check = [&](const ImageF& img, int channels, const char* kind) {
      if (img.width != v.width || img.height != v.height || img.channels != channels) {
        throw ValidationError("view " + std::to_string(i) + ": " + kind + " image does not match camera resolution");
      }
    };
    check(rgb[i], 3, "rgb");
    check(mask[i], 1, "mask");
    if (!normal.empty()) check(normal[i], 3, "normal");
    for (double m : mask[i].data) {
      if (m != 0.0 && m != 1.0) throw ValidationError("view " + std::to_string(i) + ": mask is not binary");
    }
  }
}

GuidanceBundle load_bundle(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) throw IoError("guidance directory " + dir.string() + " does not exist");
  GuidanceBundle b;
  b.views = load_cameras_json(dir / "cameras.json");
  if (b.views.empty()) throw ValidationError((dir / "cameras.json").string() + ": no cameras");
  const bool normals = std::filesystem::exists(view_file(dir, 0, "normal"));
  for (std::size_t i = 0; i < b.views.size(); ++i) {
    for (const char* kind : {"rgb", "mask"}) {
      if (!std::filesystem::exists(view_file(dir, i, kind))) throw ValidationError("missing view file " + view_file(dir, i, kind).string());
    }
    b.rgb.push_back(load_channels(view_file(dir, i, "rgb"), 3, b.views[i]));
    const auto mask_path = view_file(dir, i, "mask");
    const ImageF m = load_channels(mask_path, 1, b.views[i]);
    for (double v : m.data) {
      if (v != 0.0 && v != 1.0) throw ValidationError(mask_path.string() + ": mask is not binary (values must be 0 or 255)");
    }
    b.mask.push_back(m);
    if (normals) {
      const auto np = view_file(dir, i, "normal");
      if (!std::filesystem::exists(np)) throw ValidationError("missing view file " + np.string());
      ImageF n = load_channels(np, 3, b.views[i]);
      const double tol = 2.0 * std::sqrt(3.0) / 255.0;
      for (std::size_t p = 0; p < n.pixel_count(); ++p) {
        if (m.data[p] < 0.5) continue;
        const Vec3 d = 2.0 * Vec3(n.pixel(p)[0], n.pixel(p)[1], n.pixel(p)[2]) - Vec3::Ones();
        if (std::abs(d.norm() - 1.0) > tol) {
          throw ValidationError(np.string() + ": pixel " + std::to_string(p) + " does not decode to a unit normal");
        }
      }
      b.normal.push_back(std::move(n));
    }
  }
  const auto prov = dir / "provenance.json";
  if (std::filesystem::exists(prov)) {
    std::ifstream in(prov);
    try {
      const json doc = json::parse(in);
      b.provenance = parse_provenance(doc.value("source", "external"));
      if (doc.contains("parameters")) b.provenance_parameters = doc["parameters"];
    } catch (const json::exception& e) {
      throw ValidationError(prov.string() + ": " + e.what());
    }
  }
  b.validate();
  return b;
}

void save_bundle(const GuidanceBundle& bundle, const std::filesystem::path& dir) {
  bundle.validate();
  std::filesystem::create_directories(dir);
  save_cameras_json(bundle.views, dir / "cameras.json");
  for (std::size_t i = 0; i < bundle.size(); ++i) {
    write_png(to_u8(bundle.rgb[i]), view_file(dir, i, "rgb"));
    write_png(to_u8(bundle.mask[i]), view_file(dir, i, "mask"));
    if (bundle.has_normals()) write_png(to_u8(bundle.normal[i]), view_file(dir, i, "normal"));
  }
  json doc{{"source", provenance_name(bundle.provenance)}, {"parameters", bundle.provenance_parameters}};
  std::ofstream out(dir / "provenance.json");
  out << doc.dump(2) << "\n";
  if (!out) throw IoError("failed writing " + (dir / "provenance.json").string());
}

Vec3 sample_bilinear(const ImageF& tex, const Vec2& uv) {
  const double x = std::clamp(uv.x(), 0.0, 1.0) * tex.width - 0.5;
  const double y = (1.0 - std::clamp(uv.y(), 0.0, 1.0)) * tex.height - 0.5;
  const int x0 = static_cast<int>(std::floor(x)), y0 = static_cast<int>(std::floor(y));
  const double fx = x - x0, fy = y - y0;
  auto texel = [&](int xi, int yi) {
    xi = std::clamp(xi, 0, tex.width - 1);
    yi = std::clamp(yi, 0, tex.height - 1);
    Vec3 c;
    for (int ch = 0; ch < 3; ++ch) c[ch] = tex.at(xi, yi, std::min(ch, tex.channels - 1));
    return c;
  };
  return (1 - fy) * ((1 - fx) * texel(x0, y0) + fx * texel(x0 + 1, y0)) + fy * ((1 - fx) * texel(x0, y0 + 1) + fx * texel(x0 + 1, y0 + 1));
}

Vec3 surface_color(const TriMesh& mesh, const SurfaceAppearance& a, int face, const Vec3& bary) {
  if (a.texture.width > 0 && mesh.has_uvs()) {
    const Vec2 uv = bary[0] * mesh.corner_uvs[3 * face] + bary[1] * mesh.corner_uvs[3 * face + 1] +
                    bary[2] * mesh.corner_uvs[3 * face + 2];
    return sample_bilinear(a.texture, uv);
  }
  if (a.vertex_colors.size() == mesh.vertex_count()) {
    const Face& f = mesh.faces[face];
    return bary[0] * a.vertex_colors[f[0]] + bary[1] * a.vertex_colors[f[1]] + bary[2] * a.vertex_colors[f[2]];
  }
  return a.uniform_color;
}

GuidanceBundle synth_guidance(const TriMesh& target, const SurfaceAppearance& appearance,
                              const std::vector<CameraView>& views, const SynthOptions& options) {
  if (appearance.texture.width > 0 && !target.has_uvs()) throw ValidationError("texture given but the target mesh has no uvs");
  const auto normals = vertex_normals(target);
  GuidanceBundle b;
  b.views = views;
  b.provenance = Provenance::SyntheticOracle;
  b.provenance_parameters = {{"shading", options.shading},
                             {"ambient", options.ambient},
                             {"background", {options.background.x(), options.background.y(), options.background.z()}},
                             {"vertices", target.vertex_count()},
                             {"faces", target.face_count()}};
  b.rgb.resize(views.size());
  b.mask.resize(views.size());
  b.normal.resize(views.size());
  parallel_for(views.size(), [&](std::size_t i) {
    const CameraView& view = views[i];
    const Visibility vis = rasterize(target, view);
    ImageF rgb(view.width, view.height, 3), mask(view.width, view.height, 1), nmap(view.width, view.height, 3);
    const Vec3 eye = view.center();
    for (std::size_t p = 0; p < vis.pixel_count(); ++p) {
      Vec3 color = options.background;
      Vec3 enc(0.5, 0.5, 0.5);
      if (vis.covered(p)) {
        const Face& f = target.faces[vis.face[p]];
        const Vec3& w = vis.bary[p];
        Vec3 n = w[0] * normals[f[0]] + w[1] * normals[f[1]] + w[2] * normals[f[2]];
        if (n.norm() > 0.0) n.normalize();
        const Vec3 x = w[0] * target.vertices[f[0]] + w[1] * target.vertices[f[1]] + w[2] * target.vertices[f[2]];
        color = surface_color(target, appearance, vis.face[p], w);
        if (options.shading) {
          const double lit = std::abs(n.dot((eye - x).normalized()));
          color *= options.ambient + (1.0 - options.ambient) * lit;
        }
        enc = 0.5 * (camera_to_normal_frame(view.rotation * n) + Vec3::Ones());
        mask.data[p] = 1.0;
      }
      for (int c = 0; c < 3; ++c) {
        rgb.pixel(p)[c] = options.quantize ? quantize(color[c]) : std::clamp(color[c], 0.0, 1.0);
        nmap.pixel(p)[c] = options.quantize ? quantize(enc[c]) : enc[c];
      }
    }
    b.rgb[i] = std::move(rgb);
    b.mask[i] = std::move(mask);
    b.normal[i] = std::move(nmap);
  });
  return b;
}

}  // namespace gr
