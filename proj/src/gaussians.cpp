#include "gr/gaussians.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>

#include "gr/error.hpp"
#include "gr/parallel.hpp"

namespace gr {
namespace {

constexpr double kC0 = 0.28209479177387814;
constexpr double kC1 = 0.4886025119029199;
constexpr double kC2[] = {1.0925484305920792, -1.0925484305920792, 0.31539156525252005, -1.0925484305920792,
                          0.5462742152960396};
constexpr double kC3[] = {-0.5900435899266435, 2.890611442640554, -0.4570457994644658, 0.3731763325901154,
                          -0.4570457994644658, 1.445305721320277,  -0.5900435899266435};
constexpr double kNear = 0.01;

std::vector<std::string> ply_field_names() {
  std::vector<std::string> names = {"x", "y", "z", "f_dc_0", "f_dc_1", "f_dc_2"};
  for (int i = 0; i < 45; ++i) names.push_back("f_rest_" + std::to_string(i));
  names.push_back("opacity");
  for (int i = 0; i < 3; ++i) names.push_back("scale_" + std::to_string(i));
  for (int i = 0; i < 4; ++i) names.push_back("rot_" + std::to_string(i));
  return names;
}

std::size_t ply_type_size(const std::string& type) {
  static const std::map<std::string, std::size_t> sizes = {
      {"char", 1},   {"uchar", 1},  {"int8", 1},   {"uint8", 1},   {"short", 2},   {"ushort", 2},
      {"int16", 2},  {"uint16", 2}, {"int", 4},    {"uint", 4},    {"int32", 4},   {"uint32", 4},
      {"float", 4},  {"float32", 4}, {"double", 8}, {"float64", 8}};
  auto it = sizes.find(type);
  return it == sizes.end() ? 0 : it->second;
}

double read_scalar(const char* p, const std::string& type) {
  if (type == "float" || type == "float32") {
    float v;
    std::memcpy(&v, p, 4);
    return v;
  }
  if (type == "double" || type == "float64") {
    double v;
    std::memcpy(&v, p, 8);
    return v;
  }
  if (type == "uchar" || type == "uint8") return static_cast<unsigned char>(*p);
  if (type == "char" || type == "int8") return static_cast<signed char>(*p);
  if (type == "short" || type == "int16") {
    std::int16_t v;
    std::memcpy(&v, p, 2);
    return v;
  }
  if (type == "ushort" || type == "uint16") {
    std::uint16_t v;
    std::memcpy(&v, p, 2);
    return v;
  }
  if (type == "int" || type == "int32") {
    std::int32_t v;
    std::memcpy(&v, p, 4);
    return v;
  }
  std::uint32_t v;
  std::memcpy(&v, p, 4);
  return v;
}

}  // namespace

Mat3 GaussianCloud::covariance(std::size_t k) const {
  const Mat3 r = rotations[k].normalized().toRotationMatrix();
  const Vec3 s2 = scales[k].cwiseProduct(scales[k]);
  return r * s2.asDiagonal() * r.transpose();
}

void GaussianCloud::validate() const {
  const std::size_t n = means.size();
  if (opacity.size() != n || scales.size() != n || rotations.size() != n || sh.size() != n * kShBasisCount * 3) {
    throw ValidationError("gaussian cloud arrays have inconsistent sizes");
  }
  for (std::size_t k = 0; k < n; ++k) {
    if (!(opacity[k] >= 0.0 && opacity[k] <= 1.0)) throw ValidationError("kernel " + std::to_string(k) + ": opacity outside [0,1]");
    if (!(scales[k].minCoeff() > 0.0)) throw ValidationError("kernel " + std::to_string(k) + ": non-positive scale");
    if (!(std::abs(rotations[k].norm() - 1.0) < 1e-6)) throw ValidationError("kernel " + std::to_string(k) + ": rotation not normalized");
  }
}

GaussianCloud load_gaussian_ply(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open PLY " + path.string());
  std::string line;
  std::getline(in, line);
  if (line != "ply") throw ValidationError(path.string() + ": missing ply magic");
  bool binary_le = false;
  std::size_t count = 0;
  bool in_vertex = false, seen_vertex = false;
  struct Prop {
    std::string name, type;
    std::size_t offset;
  };
  std::vector<Prop> props;
  std::size_t stride = 0;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::istringstream ls(line);
    std::string kw;
    ls >> kw;
    if (kw == "format") {
      std::string fmt;
      ls >> fmt;
      binary_le = fmt == "binary_little_endian";
    } else if (kw == "element") {
      std::string name;
      ls >> name;
      if (seen_vertex && name != "vertex") throw ValidationError(path.string() + ": elements after 'vertex' are not supported");
      in_vertex = name == "vertex";
      if (in_vertex) {
        seen_vertex = true;
        ls >> count;
      }
    } else if (kw == "property" && in_vertex) {
      std::string type, name;
      ls >> type;
      if (type == "list") throw ValidationError(path.string() + ": list properties are not supported on vertex");
      ls >> name;
      const std::size_t size = ply_type_size(type);
      if (size == 0) throw ValidationError(path.string() + ": unknown property type '" + type + "'");
      props.push_back({name, type, stride});
      stride += size;
    } else if (kw == "end_header") {
      break;
    }
  }
  if (!binary_le) throw ValidationError(path.string() + ": only binary_little_endian PLY is supported");
  if (!seen_vertex) throw ValidationError(path.string() + ": no vertex element");

  std::map<std::string, const Prop*> by_name;
  for (const auto& p : props) by_name[p.name] = &p;
  const auto names = ply_field_names();
  std::vector<const Prop*> fields;
  for (const auto& n : names) {
    auto it = by_name.find(n);
    if (it == by_name.end()) throw ValidationError(path.string() + ": missing field '" + n + "'");
    fields.push_back(it->second);
  }

  std::vector<char> data(count * stride);
  in.read(data.data(), static_cast<std::streamsize>(data.size()));
  if (static_cast<std::size_t>(in.gcount()) != data.size()) {
    throw ValidationError(path.string() + ": file holds fewer vertices than the declared count " + std::to_string(count));
  }
  in.peek();
  if (!in.eof()) throw ValidationError(path.string() + ": trailing data after the declared vertex count");

  GaussianCloud cloud;
  cloud.means.resize(count);
  cloud.opacity.resize(count);
  cloud.scales.resize(count);
  cloud.rotations.resize(count);
  cloud.sh.assign(count * kShBasisCount * 3, 0.0);
  std::vector<double> row(names.size());
  for (std::size_t k = 0; k < count; ++k) {
    const char* base = data.data() + k * stride;
    for (std::size_t i = 0; i < fields.size(); ++i) {
      row[i] = read_scalar(base + fields[i]->offset, fields[i]->type);
      if (!std::isfinite(row[i])) {
        throw ValidationError(path.string() + ": non-finite value in field '" + names[i] + "' of kernel " + std::to_string(k));
      }
    }
    cloud.means[k] = Vec3(row[0], row[1], row[2]);
    double* sh = cloud.sh.data() + k * kShBasisCount * 3;
    for (int c = 0; c < 3; ++c) sh[c] = row[3 + c];
    for (int c = 0; c < 3; ++c) {
      for (int b = 1; b < kShBasisCount; ++b) sh[b * 3 + c] = row[6 + c * 15 + (b - 1)];
    }
    cloud.opacity[k] = 1.0 / (1.0 + std::exp(-row[51]));
    cloud.scales[k] = Vec3(std::exp(row[52]), std::exp(row[53]), std::exp(row[54]));
    Eigen::Quaterniond q(row[55], row[56], row[57], row[58]);
    if (q.norm() == 0.0) throw ValidationError(path.string() + ": zero rotation quaternion in kernel " + std::to_string(k));
    cloud.rotations[k] = q.normalized();
  }
  return cloud;
}

void save_gaussian_ply(const GaussianCloud& cloud, const std::filesystem::path& path) {
  cloud.validate();
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write PLY " + path.string());
  const auto names = ply_field_names();
  out << "ply\nformat binary_little_endian 1.0\nelement vertex " << cloud.size() << "\n";
  for (const auto& n : names) out << "property float " << n << "\n";
  out << "end_header\n";
  std::vector<float> row(names.size());
  for (std::size_t k = 0; k < cloud.size(); ++k) {
    row[0] = static_cast<float>(cloud.means[k].x());
    row[1] = static_cast<float>(cloud.means[k].y());
    row[2] = static_cast<float>(cloud.means[k].z());
    const double* sh = cloud.sh.data() + k * kShBasisCount * 3;
    for (int c = 0; c < 3; ++c) row[3 + c] = static_cast<float>(sh[c]);
    for (int c = 0; c < 3; ++c) {
      for (int b = 1; b < kShBasisCount; ++b) row[6 + c * 15 + (b - 1)] = static_cast<float>(sh[b * 3 + c]);
    }
    const double o = std::clamp(cloud.opacity[k], 1e-12, 1.0 - 1e-12);
    row[51] = static_cast<float>(std::log(o / (1.0 - o)));
    for (int i = 0; i < 3; ++i) row[52 + i] = static_cast<float>(std::log(cloud.scales[k][i]));
    const auto& q = cloud.rotations[k];
    row[55] = static_cast<float>(q.w());
    row[56] = static_cast<float>(q.x());
    row[57] = static_cast<float>(q.y());
    row[58] = static_cast<float>(q.z());
    out.write(reinterpret_cast<const char*>(row.data()), static_cast<std::streamsize>(row.size() * sizeof(float)));
  }
  if (!out) throw IoError("failed writing PLY " + path.string());
}

std::array<double, kShBasisCount> sh_basis(const Vec3& d) {
  const double x = d.x(), y = d.y(), z = d.z();
  const double xx = x * x, yy = y * y, zz = z * z;
  return {kC0,
          -kC1 * y,
          kC1 * z,
          -kC1 * x,
          kC2[0] * x * y,
          kC2[1] * y * z,
          kC2[2] * (2.0 * zz - xx - yy),
          kC2[3] * x * z,
          kC2[4] * (xx - yy),
          kC3[0] * y * (3.0 * xx - yy),
          kC3[1] * x * y * z,
          kC3[2] * y * (4.0 * zz - xx - yy),
          kC3[3] * z * (2.0 * zz - 3.0 * xx - 3.0 * yy),
          kC3[4] * x * (4.0 * zz - xx - yy),
          kC3[5] * z * (xx - yy),
          kC3[6] * x * (xx - 3.0 * yy)};
}

Vec3 sh_eval(std::span<const double> coeffs, const Vec3& direction, int degree) {
  const auto basis = sh_basis(direction);
  const int terms = (degree + 1) * (degree + 1);
  Vec3 c(0.5, 0.5, 0.5);
  for (int b = 0; b < terms; ++b) {
    for (int ch = 0; ch < 3; ++ch) c[ch] += basis[b] * coeffs[b * 3 + ch];
  }
  return c.cwiseMax(0.0).cwiseMin(1.0);
}

std::vector<ProjectedSplat> project_splats(const GaussianCloud& cloud, const CameraView& view, const SplatOptions& o) {
  std::vector<ProjectedSplat> out;
  out.reserve(cloud.size());
  const Vec3 eye = view.center();
  for (std::size_t k = 0; k < cloud.size(); ++k) {
    const Vec3 t = view.to_camera(cloud.means[k]);
    if (t.z() <= kNear) continue;
    Eigen::Matrix<double, 2, 3> J;
    J << view.fx / t.z(), 0.0, -view.fx * t.x() / (t.z() * t.z()), 0.0, view.fy / t.z(), -view.fy * t.y() / (t.z() * t.z());
    const Eigen::Matrix<double, 2, 3> T = J * view.rotation;
    Eigen::Matrix2d cov = T * cloud.covariance(k) * T.transpose();
    cov(0, 0) += o.low_pass;
    cov(1, 1) += o.low_pass;
    const double det = cov.determinant();
    if (!(det > 0.0)) continue;
    ProjectedSplat s;
    s.index = k;
    s.center = Vec2(view.fx * t.x() / t.z() + view.cx, view.fy * t.y() / t.z() + view.cy);
    s.conic = cov.inverse();
    s.depth = t.z();
    s.opacity = cloud.opacity[k];
    s.color = sh_eval(cloud.coefficients(k), (cloud.means[k] - eye).normalized(), o.sh_degree);
    const double mid = 0.5 * (cov(0, 0) + cov(1, 1));
    const double lambda = mid + std::sqrt(std::max(0.0, mid * mid - det));
    s.radius = o.cutoff_sigma * std::sqrt(lambda);
    out.push_back(s);
  }
  std::sort(out.begin(), out.end(), [](const ProjectedSplat& a, const ProjectedSplat& b) {
    if (a.depth != b.depth) return a.depth < b.depth;
    return a.index < b.index;
  });
  return out;
}

double splat_alpha(const ProjectedSplat& s, const Vec2& pixel_center, double cutoff_sigma) {
  const Vec2 d = pixel_center - s.center;
  const double m = d.dot(s.conic * d);
  if (m > cutoff_sigma * cutoff_sigma) return 0.0;
  return std::min(1.0, s.opacity * std::exp(-0.5 * m));
}

SplatImage render_splats(const GaussianCloud& cloud, const CameraView& view, const SplatOptions& o) {
  const auto splats = project_splats(cloud, view, o);
  const int ts = std::max(1, o.tile_size);
  const int tiles_x = (view.width + ts - 1) / ts;
  const int tiles_y = (view.height + ts - 1) / ts;
  std::vector<std::vector<int>> bins(static_cast<std::size_t>(tiles_x) * tiles_y);
  for (std::size_t i = 0; i < splats.size(); ++i) {
    const auto& s = splats[i];
    // Pixel centers x + 0.5 within [center - r, center + r].
    const int x0 = std::max(0, static_cast<int>(std::ceil(s.center.x() - s.radius - 0.5)));
    const int x1 = std::min(view.width - 1, static_cast<int>(std::floor(s.center.x() + s.radius - 0.5)));
    const int y0 = std::max(0, static_cast<int>(std::ceil(s.center.y() - s.radius - 0.5)));
    const int y1 = std::min(view.height - 1, static_cast<int>(std::floor(s.center.y() + s.radius - 0.5)));
    if (x0 > x1 || y0 > y1) continue;
    for (int ty = y0 / ts; ty <= y1 / ts; ++ty) {
      for (int tx = x0 / ts; tx <= x1 / ts; ++tx) bins[static_cast<std::size_t>(ty) * tiles_x + tx].push_back(static_cast<int>(i));
    }
  }
  SplatImage img{ImageF(view.width, view.height, 3), ImageF(view.width, view.height, 1)};
  parallel_for(bins.size(), [&](std::size_t tile) {
    const int tx = static_cast<int>(tile % tiles_x), ty = static_cast<int>(tile / tiles_x);
    for (int y = ty * ts; y < std::min(view.height, (ty + 1) * ts); ++y) {
      for (int x = tx * ts; x < std::min(view.width, (tx + 1) * ts); ++x) {
        const Vec2 p(x + 0.5, y + 0.5);
        double T = 1.0;
        Vec3 c = Vec3::Zero();
        for (int i : bins[tile]) {
          const double a = splat_alpha(splats[i], p, o.cutoff_sigma);
          if (a <= 0.0) continue;
          c += T * a * splats[i].color;
          T *= 1.0 - a;
          if (T == 0.0) break;
        }
        c += T * o.background;
        for (int ch = 0; ch < 3; ++ch) img.rgb.at(x, y, ch) = c[ch];
        img.alpha.at(x, y) = 1.0 - T;
      }
    }
  });
  return img;
}

ImageF render_rgb(const GaussianCloud& cloud, const CameraView& view, const SplatOptions& options) {
  return render_splats(cloud, view, options).rgb;
}

ImageF render_mask(const GaussianCloud& cloud, const CameraView& view, double threshold, const SplatOptions& options) {
  if (!(threshold >= 0.0 && threshold <= 1.0)) throw ValidationError("mask threshold must lie in [0, 1]");
  GaussianCloud subset;
  for (std::size_t k = 0; k < cloud.size(); ++k) {
    if (cloud.opacity[k] < threshold) continue;
    subset.means.push_back(cloud.means[k]);
    subset.opacity.push_back(cloud.opacity[k]);
    subset.scales.push_back(cloud.scales[k]);
    subset.rotations.push_back(cloud.rotations[k]);
    const auto c = cloud.coefficients(k);
    subset.sh.insert(subset.sh.end(), c.begin(), c.end());
  }
  const auto alpha = render_splats(subset, view, options).alpha;
  ImageF mask(view.width, view.height, 1);
  for (std::size_t p = 0; p < mask.data.size(); ++p) mask.data[p] = alpha.data[p] > options.coverage_cutoff ? 1.0 : 0.0;
  return mask;
}

}  // namespace gr
