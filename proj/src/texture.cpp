#include "gr/texture.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>

#include "gr/error.hpp"
#include "gr/parallel.hpp"
#include "gr/raster.hpp"

namespace gr {
namespace {

bool owns_edge(const Vec2& a, const Vec2& b) {
  const Vec2 d = b - a;
  return d.y() > 0.0 || (d.y() == 0.0 && d.x() < 0.0);
}

/// Visits texel centers inside a texel-space triangle with the same ownership rule as the screen rasterizer.
template <class Fn>
void raster_texels(std::array<Vec2, 3> q, int width, int height, Fn&& fn) {
  std::array<int, 3> slot{0, 1, 2};
  double area = cross2(q[1] - q[0], q[2] - q[0]);
  if (area == 0.0 || !std::isfinite(area)) return;
  if (area < 0.0) {
    std::swap(q[1], q[2]);
    std::swap(slot[1], slot[2]);
    area = -area;
  }
  const int x0 = std::max(0, static_cast<int>(std::floor(std::min({q[0].x(), q[1].x(), q[2].x()}) - 0.5)));
  const int x1 = std::min(width - 1, static_cast<int>(std::ceil(std::max({q[0].x(), q[1].x(), q[2].x()}) - 0.5)));
  const int y0 = std::max(0, static_cast<int>(std::floor(std::min({q[0].y(), q[1].y(), q[2].y()}) - 0.5)));
  const int y1 = std::min(height - 1, static_cast<int>(std::ceil(std::max({q[0].y(), q[1].y(), q[2].y()}) - 0.5)));
  const bool own12 = owns_edge(q[1], q[2]), own20 = owns_edge(q[2], q[0]), own01 = owns_edge(q[0], q[1]);
  for (int y = y0; y <= y1; ++y) {
    for (int x = x0; x <= x1; ++x) {
      const Vec2 p(x + 0.5, y + 0.5);
      const double e0 = cross2(q[2] - q[1], p - q[1]);
      const double e1 = cross2(q[0] - q[2], p - q[2]);
      const double e2 = cross2(q[1] - q[0], p - q[0]);
      if (e0 < 0.0 || e1 < 0.0 || e2 < 0.0) continue;
      if ((e0 == 0.0 && !own12) || (e1 == 0.0 && !own20) || (e2 == 0.0 && !own01)) continue;
      Vec3 b;
      b[slot[0]] = e0 / area;
      b[slot[1]] = e1 / area;
      b[slot[2]] = e2 / area;
      fn(x, y, b);
    }
  }
}

Vec2 uv_to_texel(const Vec2& uv, int w, int h) { return Vec2(uv.x() * w, (1.0 - uv.y()) * h); }

// Two 2D triangles overlap with positive area unless some edge normal separates them.
bool triangles_overlap(const std::array<Vec2, 3>& a, const std::array<Vec2, 3>& b, double eps) {
  for (const auto* tri : {&a, &b}) {
    for (int k = 0; k < 3; ++k) {
      const Vec2 e = (*tri)[(k + 1) % 3] - (*tri)[k];
      const Vec2 n(-e.y(), e.x());
      double amin = 1e300, amax = -1e300, bmin = 1e300, bmax = -1e300;
      for (int i = 0; i < 3; ++i) {
        amin = std::min(amin, n.dot(a[i]));
        amax = std::max(amax, n.dot(a[i]));
        bmin = std::min(bmin, n.dot(b[i]));
        bmax = std::max(bmax, n.dot(b[i]));
      }
      const double tol = eps * n.norm();
      if (amax <= bmin + tol || bmax <= amin + tol) return false;
    }
  }
  return true;
}

struct Chart {
  std::vector<int> faces;
  int bucket = 0;
  Vec2 lo = Vec2::Constant(1e300), hi = Vec2::Constant(-1e300);
};

Vec2 project(const Vec3& p, int bucket) {
  const int axis = bucket / 2;
  const double s = bucket % 2 == 0 ? 1.0 : -1.0;
  const int a1 = (axis + 1) % 3, a2 = (axis + 2) % 3;
  return Vec2(s * p[a1], p[a2]);
}

struct Placement {
  std::vector<Vec2> offset;
  bool fits = false;
};

Placement shelf_pack(const std::vector<Chart>& charts, double scale, int resolution, int padding) {
  Placement pl;
  pl.offset.resize(charts.size());
  std::vector<int> order(charts.size());
  std::iota(order.begin(), order.end(), 0);
  auto height = [&](int c) { return std::ceil(scale * (charts[c].hi.y() - charts[c].lo.y())) + padding; };
  auto width = [&](int c) { return std::ceil(scale * (charts[c].hi.x() - charts[c].lo.x())) + padding; };
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return height(a) > height(b); });
  double x = 0, y = 0, shelf = 0;
  for (int c : order) {
    const double w = width(c), h = height(c);
    if (w > resolution) return pl;
    if (x + w > resolution) {
      y += shelf;
      x = 0;
      shelf = 0;
    }
    if (y + h > resolution) return pl;
    pl.offset[c] = Vec2(x + 0.5 * padding, y + 0.5 * padding);
    x += w;
    shelf = std::max(shelf, h);
  }
  pl.fits = true;
  return pl;
}

}  // namespace

TextureSamples collect_texture_samples(const TriMesh& mesh, const GuidanceBundle& bundle) {
  bundle.validate();
  std::vector<std::vector<double>> per_view(bundle.size());
  parallel_for(bundle.size(), [&](std::size_t i) {
    const Visibility vis = rasterize(mesh, bundle.views[i]);
    auto& out = per_view[i];
    for (std::size_t p = 0; p < vis.pixel_count(); ++p) {
      if (!vis.covered(p) || bundle.mask[i].data[p] < 0.5) continue;
      const Face& f = mesh.faces[vis.face[p]];
      const Vec3 x = vis.bary[p][0] * mesh.vertices[f[0]] + vis.bary[p][1] * mesh.vertices[f[1]] + vis.bary[p][2] * mesh.vertices[f[2]];
      const double* c = bundle.rgb[i].pixel(p);
      out.insert(out.end(), {x.x(), x.y(), x.z(), c[0], c[1], c[2]});
    }
  });
  std::size_t n = 0;
  for (const auto& v : per_view) n += v.size() / 6;
  TextureSamples s;
  s.points.resize(3, static_cast<Eigen::Index>(n));
  s.colors.resize(3, static_cast<Eigen::Index>(n));
  Eigen::Index k = 0;
  for (const auto& v : per_view) {
    for (std::size_t j = 0; j < v.size(); j += 6, ++k) {
      s.points.col(k) << v[j], v[j + 1], v[j + 2];
      s.colors.col(k) << v[j + 3], v[j + 4], v[j + 5];
    }
  }
  return s;
}

NetfFitResult fit_netf(const TriMesh& mesh, const GuidanceBundle& bundle, const NetfFitOptions& o, const NeuralTextureField* initial) {
  if (o.epochs < 0 || o.batch_size == 0) throw ValidationError("texture fit needs epochs >= 0 and a positive batch size");
  validate_mesh(mesh);
  NetfFitResult res;
  if (initial) {
    res.field = *initial;
  } else {
    Aabb domain = mesh.bounds();
    const Vec3 margin = Vec3::Constant(o.domain_margin * mesh.bbox_diagonal());
    domain.lo -= margin;
    domain.hi += margin;
    res.field = NeuralTextureField::create(domain, o.seed, o.grid, o.head_hidden, o.head_layers);
  }
  if (o.epochs == 0) return res;
  const TextureSamples samples = collect_texture_samples(mesh, bundle);
  const Eigen::Index N = samples.points.cols();
  if (N == 0) throw ValidationError("no guidance pixel covers the mesh; nothing to fit");
  NeuralTextureField& f = res.field;
  AdamOptions go;
  go.lr = o.grid_lr;
  go.skip_zero_gradients = true;
  AdamOptions ho;
  ho.lr = o.head_lr;
  Adam grid_adam(f.grid.params.size(), go), head_adam(f.head.params.size(), ho);
  std::vector<Eigen::Index> order(N);
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  std::mt19937_64 rng(o.seed ^ 0x5EEDull);
  VectorXd ggrid = VectorXd::Zero(f.grid.params.size()), ghead;
  for (int epoch = 0; epoch < o.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double sum = 0.0;
    for (Eigen::Index start = 0; start < N; start += static_cast<Eigen::Index>(o.batch_size)) {
      const Eigen::Index B = std::min<Eigen::Index>(static_cast<Eigen::Index>(o.batch_size), N - start);
      MatrixXd pts(3, B), target(3, B);
      for (Eigen::Index b = 0; b < B; ++b) {
        pts.col(b) = samples.points.col(order[start + b]);
        target.col(b) = samples.colors.col(order[start + b]);
      }
      NeuralTextureField::Cache cache;
      const MatrixXd out = f.forward(pts, &cache);
      const MatrixXd diff = out - target;
      sum += diff.cwiseAbs().sum();
      const MatrixXd gout = diff.unaryExpr([](double d) { return d > 0.0 ? 1.0 : (d < 0.0 ? -1.0 : 0.0); }) / (3.0 * B);
      ggrid.setZero();
      ghead = VectorXd::Zero(f.head.params.size());
      f.backward(cache, gout, ggrid, ghead);
      const std::string when = "texture fit epoch " + std::to_string(epoch) + ": ";
      grid_adam.step(f.grid.params, ggrid, 1.0, [&](Eigen::Index i) { return when + f.grid.parameter_path(i); });
      head_adam.step(f.head.params, ghead, 1.0, [&](Eigen::Index i) { return when + f.head.parameter_path(i); });
    }
    const double loss = sum / (3.0 * static_cast<double>(N));
    if (!std::isfinite(loss)) throw NumericalError("texture fit: non-finite loss at epoch " + std::to_string(epoch));
    res.epoch_loss.push_back(loss);
  }
  return res;
}

ImageF render_field(const TriMesh& mesh, const NeuralTextureField& field, const CameraView& view, const Vec3& background) {
  const Visibility vis = rasterize(mesh, view);
  ImageF img(view.width, view.height, 3);
  std::vector<std::size_t> pix;
  for (std::size_t p = 0; p < vis.pixel_count(); ++p) {
    if (vis.covered(p)) {
      pix.push_back(p);
    } else {
      for (int c = 0; c < 3; ++c) img.pixel(p)[c] = background[c];
    }
  }
  const std::size_t chunk = 4096;
  const std::size_t chunks = (pix.size() + chunk - 1) / chunk;
  parallel_for(chunks, [&](std::size_t k) {
    const std::size_t begin = k * chunk, end = std::min(pix.size(), begin + chunk);
    MatrixXd pts(3, static_cast<Eigen::Index>(end - begin));
    for (std::size_t j = begin; j < end; ++j) {
      const std::size_t p = pix[j];
      const Face& f = mesh.faces[vis.face[p]];
      pts.col(static_cast<Eigen::Index>(j - begin)) =
          vis.bary[p][0] * mesh.vertices[f[0]] + vis.bary[p][1] * mesh.vertices[f[1]] + vis.bary[p][2] * mesh.vertices[f[2]];
    }
    const MatrixXd out = field.forward(pts);
    for (std::size_t j = begin; j < end; ++j) {
      for (int c = 0; c < 3; ++c) img.pixel(pix[j])[c] = out(c, static_cast<Eigen::Index>(j - begin));
    }
  });
  return img;
}

ImageF render_textured(const TriMesh& mesh, const ImageF& texture, const CameraView& view, const Vec3& background) {
  if (!mesh.has_uvs()) throw ValidationError("textured rendering needs uvs");
  const Visibility vis = rasterize(mesh, view);
  ImageF img(view.width, view.height, 3);
  for (std::size_t p = 0; p < vis.pixel_count(); ++p) {
    Vec3 c = background;
    if (vis.covered(p)) {
      const int f = vis.face[p];
      const Vec2 uv = vis.bary[p][0] * mesh.corner_uvs[3 * f] + vis.bary[p][1] * mesh.corner_uvs[3 * f + 1] +
                      vis.bary[p][2] * mesh.corner_uvs[3 * f + 2];
      c = sample_bilinear(texture, uv);
    }
    for (int ch = 0; ch < 3; ++ch) img.pixel(p)[ch] = c[ch];
  }
  return img;
}

Atlas build_atlas(const TriMesh& mesh, const AtlasOptions& options) {
  if (options.resolution < 16) throw ValidationError("atlas resolution too small");
  const std::size_t F = mesh.face_count();
  const auto normals = face_area_normals(mesh);
  std::vector<int> bucket(F);
  for (std::size_t f = 0; f < F; ++f) {
    int axis = 0;
    normals[f].cwiseAbs().maxCoeff(&axis);
    bucket[f] = 2 * axis + (normals[f][axis] >= 0.0 ? 0 : 1);
  }
  const AdjacencyIndex adj = AdjacencyIndex::build(mesh);
  std::vector<std::vector<int>> face_neighbors(F);
  for (const auto& faces : adj.edge_faces) {
    if (faces.size() != 2) continue;
    face_neighbors[faces[0]].push_back(faces[1]);
    face_neighbors[faces[1]].push_back(faces[0]);
  }
  double mean_edge = 0.0;
  for (const auto& e : adj.edges) mean_edge += (mesh.vertices[e[0]] - mesh.vertices[e[1]]).norm();
  mean_edge = std::max(mean_edge / std::max<std::size_t>(1, adj.edges.size()), 1e-12);
  const double eps = 1e-9 * mean_edge;

  auto tri2d = [&](int f, int b) {
    const Face& t = mesh.faces[f];
    return std::array<Vec2, 3>{project(mesh.vertices[t[0]], b), project(mesh.vertices[t[1]], b), project(mesh.vertices[t[2]], b)};
  };

  Atlas atlas;
  atlas.face_chart.assign(F, -1);
  std::vector<Chart> charts;
  for (std::size_t seed = 0; seed < F; ++seed) {
    if (atlas.face_chart[seed] >= 0) continue;
    Chart chart;
    chart.bucket = bucket[seed];
    const int id = static_cast<int>(charts.size());
    // Spatial hash of accepted triangles for the overlap test.
    std::unordered_map<long long, std::vector<int>> cells;
    const double cell = 2.0 * mean_edge;
    auto key = [](long long x, long long y) { return x * 73856093LL ^ y * 19349663LL; };
    auto range = [&](const std::array<Vec2, 3>& t, long long& x0, long long& x1, long long& y0, long long& y1) {
      x0 = static_cast<long long>(std::floor(std::min({t[0].x(), t[1].x(), t[2].x()}) / cell));
      x1 = static_cast<long long>(std::floor(std::max({t[0].x(), t[1].x(), t[2].x()}) / cell));
      y0 = static_cast<long long>(std::floor(std::min({t[0].y(), t[1].y(), t[2].y()}) / cell));
      y1 = static_cast<long long>(std::floor(std::max({t[0].y(), t[1].y(), t[2].y()}) / cell));
    };
    auto accept = [&](int f) {
      const auto t = tri2d(f, chart.bucket);
      long long x0, x1, y0, y1;
      range(t, x0, x1, y0, y1);
      if ((x1 - x0 + 1) * (y1 - y0 + 1) > 4096) return !chart.faces.empty() ? false : true;
      for (long long y = y0; y <= y1; ++y) {
        for (long long x = x0; x <= x1; ++x) {
          auto it = cells.find(key(x, y));
          if (it == cells.end()) continue;
          for (int g : it->second) {
            if (triangles_overlap(t, tri2d(g, chart.bucket), eps)) return false;
          }
        }
      }
      for (long long y = y0; y <= y1; ++y) {
        for (long long x = x0; x <= x1; ++x) cells[key(x, y)].push_back(f);
      }
      chart.faces.push_back(f);
      atlas.face_chart[f] = id;
      for (const auto& p : t) {
        chart.lo = chart.lo.cwiseMin(p);
        chart.hi = chart.hi.cwiseMax(p);
      }
      return true;
    };
    accept(static_cast<int>(seed));
    std::vector<int> queue{static_cast<int>(seed)};
    for (std::size_t qi = 0; qi < queue.size(); ++qi) {
      for (int g : face_neighbors[queue[qi]]) {
        if (atlas.face_chart[g] >= 0 || bucket[g] != chart.bucket) continue;
        if (accept(g)) queue.push_back(g);
      }
    }
    charts.push_back(std::move(chart));
  }
  atlas.chart_count = static_cast<int>(charts.size());

  const int R = options.resolution;
  double max_extent = 1e-12;
  for (const auto& c : charts) max_extent = std::max({max_extent, c.hi.x() - c.lo.x(), c.hi.y() - c.lo.y()});
  double lo = 0.0, hi = R / max_extent;
  Placement best = shelf_pack(charts, lo, R, options.padding);
  if (!best.fits) {
    throw ValidationError("atlas overflow: " + std::to_string(charts.size()) + " charts do not fit in " + std::to_string(R) +
                          "^2 texels");
  }
  for (int iter = 0; iter < 50; ++iter) {
    const double mid = 0.5 * (lo + hi);
    Placement p = shelf_pack(charts, mid, R, options.padding);
    if (p.fits) {
      lo = mid;
      best = std::move(p);
    } else {
      hi = mid;
    }
  }
  const double scale = lo;
  if (!(scale > 0.0)) throw ValidationError("atlas overflow: charts leave no room for texels");
  atlas.corner_uvs.resize(3 * F);
  for (std::size_t f = 0; f < F; ++f) {
    const Chart& c = charts[atlas.face_chart[f]];
    const Vec2 off = best.offset[atlas.face_chart[f]];
    for (int k = 0; k < 3; ++k) {
      const Vec2 q = project(mesh.vertices[mesh.faces[f][k]], c.bucket);
      const Vec2 texel = off + scale * (q - c.lo);
      atlas.corner_uvs[3 * f + k] = Vec2(texel.x() / R, 1.0 - texel.y() / R);
    }
  }
  return atlas;
}

BakeResult bake_texture(const TriMesh& mesh, const NeuralTextureField& field, const BakeOptions& o) {
  if (o.resolution < 64) throw ValidationError("bake resolution must be at least 64");
  if (o.dilation < 0) throw ValidationError("dilation must be non-negative");
  BakeResult res;
  res.mesh = mesh;
  int R = o.resolution;
  if (!mesh.has_uvs()) {
    for (int attempt = 0;; ++attempt) {
      try {
        AtlasOptions ao;
        ao.resolution = R;
        ao.padding = 2 * o.dilation + 2;
        res.mesh.corner_uvs = build_atlas(mesh, ao).corner_uvs;
        break;
      } catch (const ValidationError&) {
        if (attempt >= o.retries) throw;
        R *= 2;
      }
    }
  }
  res.resolution = R;
  res.owner.assign(static_cast<std::size_t>(R) * R, -1);
  std::vector<Vec3> points(static_cast<std::size_t>(R) * R);
  for (std::size_t f = 0; f < res.mesh.face_count(); ++f) {
    const Face& t = res.mesh.faces[f];
    const std::array<Vec2, 3> q{uv_to_texel(res.mesh.corner_uvs[3 * f], R, R), uv_to_texel(res.mesh.corner_uvs[3 * f + 1], R, R),
                                uv_to_texel(res.mesh.corner_uvs[3 * f + 2], R, R)};
    raster_texels(q, R, R, [&](int x, int y, const Vec3& b) {
      const std::size_t i = static_cast<std::size_t>(y) * R + x;
      if (res.owner[i] >= 0) return;
      res.owner[i] = static_cast<int>(f);
      points[i] = b[0] * mesh.vertices[t[0]] + b[1] * mesh.vertices[t[1]] + b[2] * mesh.vertices[t[2]];
    });
  }
  std::vector<std::size_t> filled;
  for (std::size_t i = 0; i < res.owner.size(); ++i) {
    if (res.owner[i] >= 0) filled.push_back(i);
  }
  res.texture = ImageF(R, R, 3);
  std::vector<char> has(res.owner.size(), 0);
  const std::size_t chunk = 4096;
  parallel_for((filled.size() + chunk - 1) / chunk, [&](std::size_t k) {
    const std::size_t begin = k * chunk, end = std::min(filled.size(), begin + chunk);
    MatrixXd pts(3, static_cast<Eigen::Index>(end - begin));
    for (std::size_t j = begin; j < end; ++j) pts.col(static_cast<Eigen::Index>(j - begin)) = points[filled[j]];
    const MatrixXd out = field.forward(pts);
    for (std::size_t j = begin; j < end; ++j) {
      for (int c = 0; c < 3; ++c) res.texture.pixel(filled[j])[c] = out(c, static_cast<Eigen::Index>(j - begin));
      has[filled[j]] = 1;
    }
  });
  for (int pass = 0; pass < o.dilation; ++pass) {
    std::vector<std::pair<std::size_t, Vec3>> grown;
    for (int y = 0; y < R; ++y) {
      for (int x = 0; x < R; ++x) {
        const std::size_t i = static_cast<std::size_t>(y) * R + x;
        if (has[i]) continue;
        Vec3 sum = Vec3::Zero();
        int n = 0;
        for (int dy = -1; dy <= 1; ++dy) {
          for (int dx = -1; dx <= 1; ++dx) {
            const int nx = x + dx, ny = y + dy;
            if (nx < 0 || ny < 0 || nx >= R || ny >= R) continue;
            const std::size_t j = static_cast<std::size_t>(ny) * R + nx;
            if (!has[j]) continue;
            sum += Vec3(res.texture.pixel(j)[0], res.texture.pixel(j)[1], res.texture.pixel(j)[2]);
            ++n;
          }
        }
        if (n > 0) grown.emplace_back(i, sum / n);
      }
    }
    for (const auto& [i, c] : grown) {
      for (int ch = 0; ch < 3; ++ch) res.texture.pixel(i)[ch] = c[ch];
      has[i] = 1;
    }
  }
  for (std::size_t i = 0; i < has.size(); ++i) {
    if (has[i]) continue;
    for (int ch = 0; ch < 3; ++ch) res.texture.pixel(i)[ch] = o.background[ch];
  }
  return res;
}

void save_textured_mesh(const BakeResult& baked, const std::filesystem::path& prefix) {
  const std::string stem = prefix.filename().string();
  std::filesystem::path dir = prefix.parent_path();
  if (!dir.empty()) std::filesystem::create_directories(dir);
  write_png(to_u8(baked.texture), dir / (stem + ".png"));
  {
    std::ofstream mtl(dir / (stem + ".mtl"));
    if (!mtl) throw IoError("cannot write " + (dir / (stem + ".mtl")).string());
    mtl << "newmtl garment\nKa 1 1 1\nKd 1 1 1\nKs 0 0 0\nd 1\nillum 1\nmap_Kd " << stem << ".png\n";
  }
  ObjWriteOptions opt;
  opt.mtllib = stem + ".mtl";
  opt.material = "garment";
  save_obj(baked.mesh, dir / (stem + ".obj"), opt);
}

}  // namespace gr
