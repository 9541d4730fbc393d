#include <algorithm>
#include <cmath>
#include <limits>

#include "gr/error.hpp"
#include "gr/raster.hpp"

namespace gr {
namespace {

constexpr double kNearPlane = 1e-9;

struct Projected {
  std::vector<Vec2> screen;
  std::vector<Vec3> cam;
};

Projected project_all(const TriMesh& mesh, const CameraView& view) {
  Projected out;
  out.screen.resize(mesh.vertices.size());
  out.cam.resize(mesh.vertices.size());
  for (std::size_t v = 0; v < mesh.vertices.size(); ++v) {
    const Vec3 c = view.to_camera(mesh.vertices[v]);
    out.cam[v] = c;
    out.screen[v] = c.z() > kNearPlane ? Vec2(view.fx * c.x() / c.z() + view.cx, view.fy * c.y() / c.z() + view.cy)
                                       : Vec2(0, 0);
  }
  return out;
}

// Exactly one of the two traversal directions of an edge owns pixel centers lying on it.
bool owns_edge(const Vec2& a, const Vec2& b) {
  const Vec2 d = b - a;
  return d.y() > 0.0 || (d.y() == 0.0 && d.x() < 0.0);
}

// Edge function of p against a -> b, evaluated in a fixed endpoint order so that the two
// triangles sharing an edge get exactly opposite values.
double edge_function(const Vec2& a, const Vec2& b, const Vec2& p) {
  if (a.x() < b.x() || (a.x() == b.x() && a.y() < b.y())) return cross2(b - a, p - a);
  return -cross2(a - b, p - b);
}

// Screen-space pixel dL/dq and depth dL/dz to world-space dL/dv for one vertex.
Vec3 screen_to_world_grad(const CameraView& view, const Vec3& cam, const Vec2& g_screen, double g_depth) {
  const double z = cam.z();
  const double iz = 1.0 / z;
  const Vec3 g_cam(g_screen.x() * view.fx * iz, g_screen.y() * view.fy * iz,
                   -g_screen.x() * view.fx * cam.x() * iz * iz - g_screen.y() * view.fy * cam.y() * iz * iz + g_depth);
  return view.rotation.transpose() * g_cam;
}

}  // namespace

Visibility rasterize(const TriMesh& mesh, const CameraView& view) {
  Visibility vis;
  vis.width = view.width;
  vis.height = view.height;
  const std::size_t P = view.pixel_count();
  vis.face.assign(P, -1);
  vis.bary.assign(P, Vec3::Zero());
  vis.depth.assign(P, std::numeric_limits<double>::infinity());

  const Projected proj = project_all(mesh, view);
  for (std::size_t f = 0; f < mesh.faces.size(); ++f) {
    const Face& t = mesh.faces[f];
    const Vec3& c0 = proj.cam[t[0]];
    const Vec3& c1 = proj.cam[t[1]];
    const Vec3& c2 = proj.cam[t[2]];
    if (c0.z() <= kNearPlane || c1.z() <= kNearPlane || c2.z() <= kNearPlane) continue;
    std::array<Vec2, 3> q{proj.screen[t[0]], proj.screen[t[1]], proj.screen[t[2]]};
    std::array<double, 3> z{c0.z(), c1.z(), c2.z()};
    std::array<int, 3> slot{0, 1, 2};
    double area = cross2(q[1] - q[0], q[2] - q[0]);
    if (area == 0.0 || !std::isfinite(area)) continue;
    if (area < 0.0) {
      std::swap(q[1], q[2]);
      std::swap(z[1], z[2]);
      std::swap(slot[1], slot[2]);
      area = -area;
    }
    const double xmin = std::min({q[0].x(), q[1].x(), q[2].x()});
    const double xmax = std::max({q[0].x(), q[1].x(), q[2].x()});
    const double ymin = std::min({q[0].y(), q[1].y(), q[2].y()});
    const double ymax = std::max({q[0].y(), q[1].y(), q[2].y()});
    const int x0 = std::max(0, static_cast<int>(std::floor(xmin - 0.5)));
    const int x1 = std::min(view.width - 1, static_cast<int>(std::ceil(xmax - 0.5)));
    const int y0 = std::max(0, static_cast<int>(std::floor(ymin - 0.5)));
    const int y1 = std::min(view.height - 1, static_cast<int>(std::ceil(ymax - 0.5)));
    if (x0 > x1 || y0 > y1) continue;
    const bool own12 = owns_edge(q[1], q[2]);
    const bool own20 = owns_edge(q[2], q[0]);
    const bool own01 = owns_edge(q[0], q[1]);
    for (int y = y0; y <= y1; ++y) {
      for (int x = x0; x <= x1; ++x) {
        const Vec2 p(x + 0.5, y + 0.5);
        const double e0 = edge_function(q[1], q[2], p);
        const double e1 = edge_function(q[2], q[0], p);
        const double e2 = edge_function(q[0], q[1], p);
        if (e0 < 0.0 || e1 < 0.0 || e2 < 0.0) continue;
        if ((e0 == 0.0 && !own12) || (e1 == 0.0 && !own20) || (e2 == 0.0 && !own01)) continue;
        const double sum = e0 + e1 + e2;
        const double b0 = e0 / sum, b1 = e1 / sum, b2 = e2 / sum;
        const double u0 = b0 / z[0], u1 = b1 / z[1], u2 = b2 / z[2];
        const double s = u0 + u1 + u2;
        if (!(s > 0.0)) continue;
        const double depth = 1.0 / s;
        const std::size_t pix = static_cast<std::size_t>(y) * view.width + x;
        if (depth < vis.depth[pix] || (depth == vis.depth[pix] && static_cast<int>(f) < vis.face[pix])) {
          vis.depth[pix] = depth;
          vis.face[pix] = static_cast<int>(f);
          Vec3 w;
          w[slot[0]] = u0 / s;
          w[slot[1]] = u1 / s;
          w[slot[2]] = u2 / s;
          vis.bary[pix] = w;
        }
      }
    }
  }
  for (std::size_t p = 0; p < P; ++p) {
    if (vis.face[p] < 0) vis.depth[p] = 0.0;
  }
  return vis;
}

std::vector<double> interpolate(const Visibility& vis, const TriMesh& mesh, std::span<const double> attributes,
                                int channels) {
  if (attributes.size() != mesh.vertices.size() * static_cast<std::size_t>(channels)) {
    throw ValidationError("interpolate: attribute count does not match vertex count");
  }
  std::vector<double> out(vis.pixel_count() * channels, 0.0);
  for (std::size_t p = 0; p < vis.pixel_count(); ++p) {
    const int f = vis.face[p];
    if (f < 0) continue;
    const Face& t = mesh.faces[f];
    const Vec3& w = vis.bary[p];
    double* dst = out.data() + p * channels;
    for (int k = 0; k < 3; ++k) {
      const double* src = attributes.data() + static_cast<std::size_t>(t[k]) * channels;
      for (int c = 0; c < channels; ++c) dst[c] += w[k] * src[c];
    }
  }
  return out;
}

RasterOutput rasterize_attributes(const TriMesh& mesh, const CameraView& view, std::span<const double> attributes,
                                  int channels) {
  RasterOutput out;
  static_cast<Visibility&>(out) = rasterize(mesh, view);
  out.channels = channels;
  out.attributes = interpolate(out, mesh, attributes, channels);
  return out;
}

RasterGradients rasterize_backward(const Visibility& vis, const TriMesh& mesh, const CameraView& view,
                                   std::span<const double> attributes, int channels,
                                   std::span<const double> grad_output) {
  RasterGradients g;
  g.attributes.assign(mesh.vertices.size() * channels, 0.0);
  g.positions.assign(mesh.vertices.size(), Vec3::Zero());
  if (grad_output.size() != vis.pixel_count() * static_cast<std::size_t>(channels)) {
    throw ValidationError("rasterize_backward: gradient size does not match the forward output");
  }
  const Projected proj = project_all(mesh, view);
  for (std::size_t pix = 0; pix < vis.pixel_count(); ++pix) {
    const int f = vis.face[pix];
    if (f < 0) continue;
    const double* go = grad_output.data() + pix * channels;
    bool nonzero = false;
    for (int c = 0; c < channels; ++c) nonzero |= go[c] != 0.0;
    if (!nonzero) continue;

    const Face& t = mesh.faces[f];
    const Vec3& w = vis.bary[pix];
    Vec3 gw;
    for (int k = 0; k < 3; ++k) {
      const double* a = attributes.data() + static_cast<std::size_t>(t[k]) * channels;
      double* ga = g.attributes.data() + static_cast<std::size_t>(t[k]) * channels;
      double dot = 0.0;
      for (int c = 0; c < channels; ++c) {
        ga[c] += w[k] * go[c];
        dot += go[c] * a[c];
      }
      gw[k] = dot;
    }

    // w_i = u_i / S with u_i = b_i / z_i, S = sum u.
    const std::array<Vec2, 3> q{proj.screen[t[0]], proj.screen[t[1]], proj.screen[t[2]]};
    const std::array<double, 3> z{proj.cam[t[0]].z(), proj.cam[t[1]].z(), proj.cam[t[2]].z()};
    const Vec2 p((pix % vis.width) + 0.5, (pix / vis.width) + 0.5);
    const std::array<Vec2, 3> r{q[0] - p, q[1] - p, q[2] - p};
    const std::array<double, 3> N{cross2(r[1], r[2]), cross2(r[2], r[0]), cross2(r[0], r[1])};
    const double D = N[0] + N[1] + N[2];
    std::array<double, 3> b{N[0] / D, N[1] / D, N[2] / D};
    std::array<double, 3> u{b[0] / z[0], b[1] / z[1], b[2] / z[2]};
    const double S = u[0] + u[1] + u[2];
    const double wdot = gw[0] * w[0] + gw[1] * w[1] + gw[2] * w[2];
    std::array<Vec2, 3> gq{Vec2::Zero(), Vec2::Zero(), Vec2::Zero()};
    std::array<double, 3> gz{0, 0, 0};
    std::array<double, 3> gN{};
    double gD = 0.0;
    for (int k = 0; k < 3; ++k) {
      const double gu = (gw[k] - wdot) / S;
      const double gb = gu / z[k];
      gz[k] -= gu * u[k] / z[k];
      gN[k] = gb / D;
      gD -= gb * b[k] / D;
    }
    // d cross(a, c)/da = (c.y, -c.x); d cross(a, c)/dc = (-a.y, a.x)
    auto acc = [&](int ia, int ib, double gc) {
      gq[ia] += gc * Vec2(r[ib].y(), -r[ib].x());
      gq[ib] += gc * Vec2(-r[ia].y(), r[ia].x());
    };
    acc(1, 2, gN[0]);
    acc(2, 0, gN[1]);
    acc(0, 1, gN[2]);
    {
      const Vec2 ea = q[1] - q[0], eb = q[2] - q[0];
      const Vec2 g1 = gD * Vec2(eb.y(), -eb.x());
      const Vec2 g2 = gD * Vec2(-ea.y(), ea.x());
      gq[1] += g1;
      gq[2] += g2;
      gq[0] -= g1 + g2;
    }
    for (int k = 0; k < 3; ++k) g.positions[t[k]] += screen_to_world_grad(view, proj.cam[t[k]], gq[k], gz[k]);
  }
  return g;
}

SoftSilhouette soft_silhouette(const TriMesh& mesh, const AdjacencyIndex& adj, const CameraView& view, double tau,
                               const Visibility* visibility, double band_px) {
  if (!(tau > 0.0)) throw ValidationError("soft_silhouette: tau must be positive");
  Visibility local;
  if (!visibility) {
    local = rasterize(mesh, view);
    visibility = &local;
  }
  const Visibility& vis = *visibility;
  SoftSilhouette sil;
  sil.width = view.width;
  sil.height = view.height;
  sil.tau = tau;
  sil.band = band_px;
  const std::size_t P = view.pixel_count();
  sil.edge.assign(P, -1);
  sil.edge_t.assign(P, 0.0);
  std::vector<double> best(P, band_px);

  const Projected proj = project_all(mesh, view);
  const Vec3 eye = view.center();
  std::vector<signed char> front(mesh.faces.size());
  for (std::size_t f = 0; f < mesh.faces.size(); ++f) {
    const Face& t = mesh.faces[f];
    const Vec3& a = mesh.vertices[t[0]];
    const Vec3 n = (mesh.vertices[t[1]] - a).cross(mesh.vertices[t[2]] - a);
    front[f] = n.dot(eye - a) > 0.0 ? 1 : 0;
  }
  for (std::size_t e = 0; e < adj.edges.size(); ++e) {
    const auto& faces = adj.edge_faces[e];
    const bool contour = faces.size() == 1 || (faces.size() == 2 && front[faces[0]] != front[faces[1]]);
    if (!contour) continue;
    const int va = adj.edges[e][0], vb = adj.edges[e][1];
    if (proj.cam[va].z() <= kNearPlane || proj.cam[vb].z() <= kNearPlane) continue;
    sil.edges.push_back({va, vb});
  }

  auto covered_at = [&](const Vec2& pt) {
    const int x = static_cast<int>(std::floor(pt.x()));
    const int y = static_cast<int>(std::floor(pt.y()));
    if (x < 0 || y < 0 || x >= vis.width || y >= vis.height) return false;
    return vis.covered(static_cast<std::size_t>(y) * vis.width + x);
  };

  for (std::size_t e = 0; e < sil.edges.size(); ++e) {
    const Vec2 a = proj.screen[sil.edges[e][0]];
    const Vec2 b = proj.screen[sil.edges[e][1]];
    const Vec2 ab = b - a;
    const double len2 = ab.squaredNorm();
    const int x0 = std::max(0, static_cast<int>(std::floor(std::min(a.x(), b.x()) - band_px - 0.5)));
    const int x1 = std::min(view.width - 1, static_cast<int>(std::ceil(std::max(a.x(), b.x()) + band_px - 0.5)));
    const int y0 = std::max(0, static_cast<int>(std::floor(std::min(a.y(), b.y()) - band_px - 0.5)));
    const int y1 = std::min(view.height - 1, static_cast<int>(std::ceil(std::max(a.y(), b.y()) + band_px - 0.5)));
    for (int y = y0; y <= y1; ++y) {
      for (int x = x0; x <= x1; ++x) {
        const Vec2 p(x + 0.5, y + 0.5);
        double t = len2 > 0.0 ? (p - a).dot(ab) / len2 : 0.0;
        t = std::clamp(t, 0.0, 1.0);
        const Vec2 q = a + t * ab;
        const double d = (p - q).norm();
        const std::size_t pix = static_cast<std::size_t>(y) * view.width + x;
        if (!(d < best[pix])) continue;
        // Inside pixels only measure to edges that actually bound the covered region;
        // contour edges seen in front of other surface are skipped.
        if (vis.covered(pix) && d > 0.0 && covered_at(q + (q - p) / d)) continue;
        best[pix] = d;
        sil.edge[pix] = static_cast<int>(e);
        sil.edge_t[pix] = t;
      }
    }
  }

  sil.coverage.resize(P);
  sil.signed_distance.resize(P);
  for (std::size_t p = 0; p < P; ++p) {
    const double sign = vis.covered(p) ? 1.0 : -1.0;
    sil.signed_distance[p] = sign * best[p];
    sil.coverage[p] = sil.edge[p] >= 0 ? logistic(sign * best[p] / tau) : (vis.covered(p) ? 1.0 : 0.0);
  }
  return sil;
}

std::vector<Vec3> soft_silhouette_backward(const SoftSilhouette& sil, const TriMesh& mesh, const CameraView& view,
                                           std::span<const double> grad_coverage) {
  std::vector<Vec3> grad(mesh.vertices.size(), Vec3::Zero());
  if (grad_coverage.size() != sil.coverage.size()) {
    throw ValidationError("soft_silhouette_backward: gradient size does not match the forward output");
  }
  std::vector<Vec3> cam(mesh.vertices.size());
  std::vector<Vec2> screen(mesh.vertices.size());
  for (std::size_t v = 0; v < mesh.vertices.size(); ++v) {
    cam[v] = view.to_camera(mesh.vertices[v]);
    screen[v] = Vec2(view.fx * cam[v].x() / cam[v].z() + view.cx, view.fy * cam[v].y() / cam[v].z() + view.cy);
  }
  std::vector<Vec2> g_screen(mesh.vertices.size(), Vec2::Zero());
  for (std::size_t pix = 0; pix < sil.coverage.size(); ++pix) {
    const int e = sil.edge[pix];
    if (e < 0 || grad_coverage[pix] == 0.0) continue;
    const double c = sil.coverage[pix];
    const double sd = sil.signed_distance[pix];
    const double d = std::abs(sd);
    if (d == 0.0) continue;
    const double sign = sd > 0.0 ? 1.0 : -1.0;
    // c = logistic(sign * d / tau)
    const double gd = grad_coverage[pix] * c * (1.0 - c) / sil.tau * sign;
    const int va = sil.edges[e][0], vb = sil.edges[e][1];
    const double t = sil.edge_t[pix];
    const Vec2 p((pix % sil.width) + 0.5, (pix / sil.width) + 0.5);
    const Vec2 q = screen[va] + t * (screen[vb] - screen[va]);
    const Vec2 u = (p - q) / d;
    g_screen[va] -= gd * (1.0 - t) * u;
    g_screen[vb] -= gd * t * u;
  }
  for (std::size_t v = 0; v < mesh.vertices.size(); ++v) {
    if (g_screen[v].x() == 0.0 && g_screen[v].y() == 0.0) continue;
    const Vec3& cm = cam[v];
    const double iz = 1.0 / cm.z();
    const Vec3 g_cam(g_screen[v].x() * view.fx * iz, g_screen[v].y() * view.fy * iz,
                     -(g_screen[v].x() * view.fx * cm.x() + g_screen[v].y() * view.fy * cm.y()) * iz * iz);
    grad[v] = view.rotation.transpose() * g_cam;
  }
  return grad;
}

}  // namespace gr
