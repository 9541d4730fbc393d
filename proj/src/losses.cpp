#include "gr/losses.hpp"

#include <algorithm>
#include <numeric>
#include <random>

#include "gr/error.hpp"
#include "gr/parallel.hpp"

namespace gr {
namespace {

double sign(double x) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); }

void check_shape(const ImageF* img, const CameraView& view, int channels, const char* kind) {
  if (!img) return;
  if (img->width != view.width || img->height != view.height || img->channels != channels) {
    throw ValidationError(std::string(kind) + " image resolution " + std::to_string(img->width) + "x" +
                          std::to_string(img->height) + " does not match the view (" + std::to_string(view.width) + "x" +
                          std::to_string(view.height) + ")");
  }
}

std::vector<double> surface_attributes(const TriMesh& mesh, const std::vector<Vec3>& normals) {
  std::vector<double> a(mesh.vertex_count() * 6);
  for (std::size_t v = 0; v < mesh.vertex_count(); ++v) {
    for (int c = 0; c < 3; ++c) {
      a[6 * v + c] = mesh.vertices[v][c];
      a[6 * v + 3 + c] = normals[v][c];
    }
  }
  return a;
}

ViewTargets targets_for(const GuidanceBundle& b, std::size_t i) {
  ViewTargets t;
  t.view = &b.views[i];
  t.mask = &b.mask[i];
  t.rgb = &b.rgb[i];
  t.normal = b.has_normals() ? &b.normal[i] : nullptr;
  return t;
}

/// Runs evaluate_view over all views in parallel and reduces in view order.
double average_views(const TriMesh& mesh, const std::vector<ViewTargets>& targets, const NeuralShader* shader,
                     const TermWeights& w, double ViewTerms::*term, std::vector<Vec3>* grad, VectorXd* grad_shader,
                     double tau = 1.0) {
  const AdjacencyIndex adj = AdjacencyIndex::build(mesh);
  const auto normals = vertex_normals(mesh);
  const std::size_t n = targets.size();
  std::vector<ViewTerms> terms(n);
  std::vector<ViewGradients> grads(n);
  ViewLossOptions opt;
  opt.tau = tau;
  const bool want = grad || grad_shader;
  parallel_for(n, [&](std::size_t i) {
    terms[i] = evaluate_view(mesh, adj, normals, targets[i], shader, w, opt, want ? &grads[i] : nullptr);
  });
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) total += terms[i].*term;
  if (grad) {
    grad->assign(mesh.vertex_count(), Vec3::Zero());
    std::vector<Vec3> gn(mesh.vertex_count(), Vec3::Zero());
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t v = 0; v < mesh.vertex_count(); ++v) {
        (*grad)[v] += grads[i].vertices[v] / static_cast<double>(n);
        gn[v] += grads[i].normals[v] / static_cast<double>(n);
      }
    }
    const auto gv = vertex_normals_backward(mesh, gn);
    for (std::size_t v = 0; v < mesh.vertex_count(); ++v) (*grad)[v] += gv[v];
  }
  if (grad_shader && shader) {
    *grad_shader = VectorXd::Zero(shader->mlp.params.size());
    for (std::size_t i = 0; i < n; ++i) {
      if (grads[i].shader.size() > 0) *grad_shader += grads[i].shader / static_cast<double>(n);
    }
  }
  return total / static_cast<double>(n);
}

}  // namespace

ViewTerms evaluate_view(const TriMesh& mesh, const AdjacencyIndex& adj, const std::vector<Vec3>& unit_normals,
                        const ViewTargets& tg, const NeuralShader* shader, const TermWeights& w,
                        const ViewLossOptions& options, ViewGradients* grads) {
  const CameraView& view = *tg.view;
  check_shape(tg.mask, view, 1, "mask");
  check_shape(tg.rgb, view, 3, "rgb");
  check_shape(tg.normal, view, 3, "normal");
  check_shape(tg.hole_reference, view, 1, "hole mask");
  const std::size_t P = view.pixel_count();
  const std::size_t V = mesh.vertex_count();
  ViewTerms terms;
  if (grads) {
    grads->vertices.assign(V, Vec3::Zero());
    grads->normals.assign(V, Vec3::Zero());
    if (shader && w.rgb != 0.0) grads->shader = VectorXd::Zero(shader->mlp.params.size());
  }
  const Visibility vis = rasterize(mesh, view);

  if (w.mask != 0.0) {
    if (!tg.mask) throw ValidationError("mask loss needs a guidance mask");
    const SoftSilhouette sil = soft_silhouette(mesh, adj, view, options.tau, &vis, options.band_px);
    std::vector<double> gc(grads ? P : 0);
    double sum = 0.0;
    for (std::size_t p = 0; p < P; ++p) {
      const double r = sil.coverage[p] - tg.mask->data[p];
      sum += r * r;
      if (grads) gc[p] = w.mask * 2.0 * r / static_cast<double>(P);
    }
    terms.mask = sum / static_cast<double>(P);
    if (grads) {
      const auto g = soft_silhouette_backward(sil, mesh, view, gc);
      for (std::size_t v = 0; v < V; ++v) grads->vertices[v] += g[v];
    }
  }

  const bool surface = w.rgb != 0.0 || w.normal != 0.0 || w.hole != 0.0;
  if (!surface) return terms;
  const auto attrs = surface_attributes(mesh, unit_normals);
  const auto interp = interpolate(vis, mesh, attrs, 6);
  std::vector<double> G(grads ? P * 6 : 0, 0.0);
  const Vec3 eye = view.center();
  bool any_grad = false;

  auto in_guidance = [&](std::size_t p) { return vis.covered(p) && (!tg.mask || tg.mask->data[p] > 0.5); };

  if (w.normal != 0.0) {
    if (!tg.normal) throw ValidationError("normal loss needs guidance normal maps");
    std::vector<std::size_t> pix;
    for (std::size_t p = 0; p < P; ++p) {
      if (in_guidance(p)) pix.push_back(p);
    }
    terms.normal_pixels = pix.size();
    const double K = static_cast<double>(std::max<std::size_t>(1, pix.size()));
    double sum = 0.0;
    for (std::size_t p : pix) {
      const Vec3 nt(interp[6 * p + 3], interp[6 * p + 4], interp[6 * p + 5]);
      const double len = nt.norm();
      if (len <= 0.0) continue;
      const Vec3 e = camera_to_normal_frame(view.rotation * (nt / len));
      const double* gp = tg.normal->pixel(p);
      const Vec3 target(2.0 * gp[0] - 1.0, 2.0 * gp[1] - 1.0, 2.0 * gp[2] - 1.0);
      const Vec3 diff = e - target;
      sum += diff.cwiseAbs().sum() / 3.0;
      if (grads) {
        const Vec3 ge(sign(diff.x()), sign(diff.y()), sign(diff.z()));
        const Vec3 gn = view.rotation.transpose() * camera_to_normal_frame(ge * (w.normal / (3.0 * K)));
        const Vec3 graw = normalize_backward(nt, gn);
        for (int c = 0; c < 3; ++c) G[6 * p + 3 + c] += graw[c];
        any_grad = true;
      }
    }
    terms.normal = sum / K;
  }

  if (w.rgb != 0.0) {
    if (!tg.rgb) throw ValidationError("RGB loss needs guidance images");
    if (!shader) throw ValidationError("RGB loss needs a shader");
    std::vector<std::size_t> pix;
    for (std::size_t p = 0; p < P; ++p) {
      if (in_guidance(p)) pix.push_back(p);
    }
    if (options.rgb_max_pixels > 0 && pix.size() > options.rgb_max_pixels) {
      std::mt19937_64 rng(options.rgb_sample_seed);
      // Partial Fisher-Yates keeps the selection deterministic for a seed.
      for (std::size_t i = 0; i < options.rgb_max_pixels; ++i) {
        std::uniform_int_distribution<std::size_t> pick(i, pix.size() - 1);
        std::swap(pix[i], pix[pick(rng)]);
      }
      pix.resize(options.rgb_max_pixels);
      std::sort(pix.begin(), pix.end());
    }
    terms.rgb_pixels = pix.size();
    if (!pix.empty()) {
      const Eigen::Index B = static_cast<Eigen::Index>(pix.size());
      MatrixXd raw(9, B);
      for (Eigen::Index b = 0; b < B; ++b) {
        const std::size_t p = pix[b];
        const Vec3 x(interp[6 * p], interp[6 * p + 1], interp[6 * p + 2]);
        const Vec3 nt(interp[6 * p + 3], interp[6 * p + 4], interp[6 * p + 5]);
        const Vec3 dv = x - eye;
        raw.col(b) << x, nt.normalized(), dv.normalized();
      }
      NeuralShader::Cache cache;
      const MatrixXd out = shader->forward(raw, grads ? &cache : nullptr);
      MatrixXd gout(3, B);
      double sum = 0.0;
      for (Eigen::Index b = 0; b < B; ++b) {
        const double* target = tg.rgb->pixel(pix[b]);
        for (int c = 0; c < 3; ++c) {
          const double d = out(c, b) - target[c];
          sum += std::abs(d);
          gout(c, b) = sign(d) * w.rgb / (3.0 * static_cast<double>(B));
        }
      }
      terms.rgb = sum / (3.0 * static_cast<double>(B));
      if (grads) {
        MatrixXd graw;
        shader->backward(cache, gout, grads->shader, &graw);
        for (Eigen::Index b = 0; b < B; ++b) {
          const std::size_t p = pix[b];
          const Vec3 x(interp[6 * p], interp[6 * p + 1], interp[6 * p + 2]);
          const Vec3 nt(interp[6 * p + 3], interp[6 * p + 4], interp[6 * p + 5]);
          const Vec3 gx = Vec3(graw.col(b).head<3>()) + normalize_backward(x - eye, graw.col(b).tail<3>());
          const Vec3 gn = normalize_backward(nt, graw.col(b).segment<3>(3));
          for (int c = 0; c < 3; ++c) {
            G[6 * p + c] += gx[c];
            G[6 * p + 3 + c] += gn[c];
          }
        }
        any_grad = true;
      }
    }
  }

  if (w.hole != 0.0) {
    if (!tg.hole_reference) throw ValidationError("hole loss needs reference hole masks");
    double sum = 0.0;
    for (std::size_t p = 0; p < P; ++p) {
      double m = 0.0;
      Vec3 x, nt;
      if (vis.covered(p)) {
        x = Vec3(interp[6 * p], interp[6 * p + 1], interp[6 * p + 2]);
        nt = Vec3(interp[6 * p + 3], interp[6 * p + 4], interp[6 * p + 5]);
        m = nt.dot(x - eye) > 0.0 ? 1.0 : 0.0;
      }
      const double r = m - tg.hole_reference->data[p];
      sum += r * r;
      if (grads && vis.covered(p) && r != 0.0) {
        // Straight-through: dL/ds = dL/dM for s = n~ . (v~ - c) / |v~ - c|, which has the sign of the unnormalized product.
        const double gs = w.hole * 2.0 * r / static_cast<double>(P);
        const Vec3 ray = x - eye;
        const Vec3 gn = gs * ray / ray.norm();
        const Vec3 gx = normalize_backward(ray, gs * nt);
        for (int c = 0; c < 3; ++c) {
          G[6 * p + c] += gx[c];
          G[6 * p + 3 + c] += gn[c];
        }
        any_grad = true;
      }
    }
    terms.hole = sum / static_cast<double>(P);
  }

  if (grads && any_grad) {
    const RasterGradients rg = rasterize_backward(vis, mesh, view, attrs, 6, G);
    for (std::size_t v = 0; v < V; ++v) {
      grads->vertices[v] += rg.positions[v] + Vec3(rg.attributes[6 * v], rg.attributes[6 * v + 1], rg.attributes[6 * v + 2]);
      grads->normals[v] += Vec3(rg.attributes[6 * v + 3], rg.attributes[6 * v + 4], rg.attributes[6 * v + 5]);
    }
  }
  return terms;
}

double loss_mask(const TriMesh& mesh, const AdjacencyIndex&, const GuidanceBundle& bundle, double tau, std::vector<Vec3>* grad) {
  std::vector<ViewTargets> t;
  for (std::size_t i = 0; i < bundle.size(); ++i) t.push_back(targets_for(bundle, i));
  TermWeights w;
  w.mask = 1.0;
  return average_views(mesh, t, nullptr, w, &ViewTerms::mask, grad, nullptr, tau);
}

double loss_rgb(const TriMesh& mesh, const NeuralShader& shader, const GuidanceBundle& bundle, std::vector<Vec3>* grad_vertices,
                VectorXd* grad_shader) {
  std::vector<ViewTargets> t;
  for (std::size_t i = 0; i < bundle.size(); ++i) t.push_back(targets_for(bundle, i));
  TermWeights w;
  w.rgb = 1.0;
  return average_views(mesh, t, &shader, w, &ViewTerms::rgb, grad_vertices, grad_shader);
}

double loss_normal(const TriMesh& mesh, const GuidanceBundle& bundle, std::vector<Vec3>* grad) {
  if (!bundle.has_normals()) throw ValidationError("guidance bundle has no normal maps");
  std::vector<ViewTargets> t;
  for (std::size_t i = 0; i < bundle.size(); ++i) t.push_back(targets_for(bundle, i));
  TermWeights w;
  w.normal = 1.0;
  return average_views(mesh, t, nullptr, w, &ViewTerms::normal, grad, nullptr);
}

double loss_hole(const TriMesh& mesh, const std::vector<CameraView>& views, const HoleMaskSet& reference, std::vector<Vec3>* grad) {
  if (reference.size() != views.size()) throw ValidationError("hole mask count does not match view count");
  std::vector<ViewTargets> t(views.size());
  for (std::size_t i = 0; i < views.size(); ++i) {
    t[i].view = &views[i];
    t[i].hole_reference = &reference[i];
  }
  TermWeights w;
  w.hole = 1.0;
  return average_views(mesh, t, nullptr, w, &ViewTerms::hole, grad, nullptr);
}

double loss_normal_consistency(const TriMesh& mesh, const AdjacencyIndex& adj, std::vector<Vec3>* grad) {
  if (grad) grad->assign(mesh.vertex_count(), Vec3::Zero());
  if (adj.hinges.empty()) return 0.0;
  const auto an = face_area_normals(mesh);
  const double eps = 2.0 * degenerate_area_threshold(mesh);
  const double N = static_cast<double>(adj.hinges.size());
  std::vector<Vec3> gface(grad ? mesh.face_count() : 0, Vec3::Zero());
  double sum = 0.0;
  for (const Hinge& h : adj.hinges) {
    const Vec3& a0 = an[h.f0];
    const Vec3& a1 = an[h.f1];
    if (a0.norm() <= eps || a1.norm() <= eps) continue;
    const Vec3 n0 = a0.normalized(), n1 = a1.normalized();
    const double r = 1.0 - n0.dot(n1);
    sum += r * r;
    if (grad) {
      const double g = -2.0 * r / N;
      gface[h.f0] += normalize_backward(a0, g * n1);
      gface[h.f1] += normalize_backward(a1, g * n0);
    }
  }
  if (grad) {
    for (std::size_t f = 0; f < mesh.face_count(); ++f) {
      if (gface[f].isZero(0.0)) continue;
      const Face& t = mesh.faces[f];
      const Vec3 e1 = mesh.vertices[t[1]] - mesh.vertices[t[0]];
      const Vec3 e2 = mesh.vertices[t[2]] - mesh.vertices[t[0]];
      Vec3 g1 = Vec3::Zero(), g2 = Vec3::Zero();
      cross_backward(e1, e2, gface[f], g1, g2);
      (*grad)[t[1]] += g1;
      (*grad)[t[2]] += g2;
      (*grad)[t[0]] -= g1 + g2;
    }
  }
  return sum / N;
}

double loss_laplacian(const TriMesh& mesh, const AdjacencyIndex& adj, std::vector<Vec3>* grad) {
  if (grad) grad->assign(mesh.vertex_count(), Vec3::Zero());
  if (adj.edges.empty()) return 0.0;
  const double M = static_cast<double>(adj.edges.size());
  double sum = 0.0;
  for (std::size_t e = 0; e < adj.edges.size(); ++e) {
    const int j = adj.edges[e][0], k = adj.edges[e][1];
    const Vec3 d = mesh.vertices[j] - mesh.vertices[k];
    const double w = adj.edge_weights[e];
    sum += w * d.squaredNorm();
    if (grad) {
      (*grad)[j] += (2.0 * w / M) * d;
      (*grad)[k] -= (2.0 * w / M) * d;
    }
  }
  return sum / M;
}

ImageF detect_hole_mask(const TriMesh& mesh, const CameraView& view) {
  const auto normals = vertex_normals(mesh);
  const Visibility vis = rasterize(mesh, view);
  const auto interp = interpolate(vis, mesh, surface_attributes(mesh, normals), 6);
  const Vec3 eye = view.center();
  ImageF mask(view.width, view.height, 1);
  for (std::size_t p = 0; p < vis.pixel_count(); ++p) {
    if (!vis.covered(p)) continue;
    const Vec3 x(interp[6 * p], interp[6 * p + 1], interp[6 * p + 2]);
    const Vec3 nt(interp[6 * p + 3], interp[6 * p + 4], interp[6 * p + 5]);
    mask.data[p] = nt.dot(x - eye) > 0.0 ? 1.0 : 0.0;
  }
  return mask;
}

HoleMaskSet capture_hole_masks(const TriMesh& mesh, const std::vector<CameraView>& views) {
  HoleMaskSet out(views.size());
  parallel_for(views.size(), [&](std::size_t i) { out[i] = detect_hole_mask(mesh, views[i]); });
  return out;
}

double silhouette_iou(const TriMesh& mesh, const GuidanceBundle& bundle) {
  std::vector<double> iou(bundle.size());
  parallel_for(bundle.size(), [&](std::size_t i) {
    const Visibility vis = rasterize(mesh, bundle.views[i]);
    std::size_t inter = 0, uni = 0;
    for (std::size_t p = 0; p < vis.pixel_count(); ++p) {
      const bool a = vis.covered(p), b = bundle.mask[i].data[p] > 0.5;
      inter += a && b;
      uni += a || b;
    }
    iou[i] = uni == 0 ? 1.0 : static_cast<double>(inter) / static_cast<double>(uni);
  });
  return std::accumulate(iou.begin(), iou.end(), 0.0) / static_cast<double>(std::max<std::size_t>(1, bundle.size()));
}

}  // namespace gr
