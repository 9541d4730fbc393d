#include "gr/hash_grid.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <random>

#include "gr/error.hpp"

namespace gr {
namespace {

constexpr char kMagic[8] = {'G', 'R', 'N', 'E', 'T', 'F', '\0', '\0'};
constexpr std::uint32_t kVersion = 1;

template <class T>
void put(std::ostream& out, const T& v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
T get(std::istream& in, const std::filesystem::path& path) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in) throw ValidationError(path.string() + ": truncated checkpoint");
  return v;
}

}  // namespace

HashGrid HashGrid::create(const HashGridOptions& options, const Aabb& domain, std::uint64_t seed) {
  if (options.levels < 1 || options.features < 1 || options.base_resolution < 1 ||
      options.max_resolution < options.base_resolution || options.log2_table_size < 4 || options.log2_table_size > 30) {
    throw ValidationError("invalid hash grid options");
  }
  if (domain.empty()) throw ValidationError("hash grid domain is empty");
  HashGrid g;
  g.options = options;
  g.domain = domain;
  const double growth = options.levels > 1 ? std::exp((std::log(options.max_resolution) - std::log(options.base_resolution)) /
                                                      (options.levels - 1))
                                           : 1.0;
  const std::uint64_t table = std::uint64_t{1} << options.log2_table_size;
  Eigen::Index offset = 0;
  for (int l = 0; l < options.levels; ++l) {
    int res = static_cast<int>(std::floor(options.base_resolution * std::pow(growth, l) + 1e-9));
    if (!g.resolutions.empty() && res <= g.resolutions.back()) res = g.resolutions.back() + 1;
    g.resolutions.push_back(res);
    const std::uint64_t dense = static_cast<std::uint64_t>(res + 1) * (res + 1) * (res + 1);
    const auto size = static_cast<std::uint32_t>(std::min(dense, table));
    g.level_offsets.push_back(offset);
    g.level_sizes.push_back(size);
    offset += size;
  }
  g.params.resize(offset * options.features);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1e-4, 1e-4);
  for (Eigen::Index i = 0; i < g.params.size(); ++i) g.params[i] = u(rng);
  return g;
}

HashGrid::Corners HashGrid::corners(int level, const Vec3& p) const {
  const int n = resolutions[level];
  const Vec3 extent = (domain.hi - domain.lo).cwiseMax(Vec3::Constant(1e-12));
  const Vec3 t = ((p - domain.lo).cwiseQuotient(extent)).cwiseMax(0.0).cwiseMin(1.0);
  std::array<int, 3> cell;
  Vec3 frac;
  for (int a = 0; a < 3; ++a) {
    const double x = t[a] * n;
    cell[a] = std::min(n - 1, static_cast<int>(std::floor(x)));
    frac[a] = x - cell[a];
  }
  const std::uint32_t size = level_sizes[level];
  const bool dense = static_cast<std::uint64_t>(n + 1) * (n + 1) * (n + 1) <= size;
  Corners c;
  for (int k = 0; k < 8; ++k) {
    const std::uint32_t ix = cell[0] + (k & 1), iy = cell[1] + ((k >> 1) & 1), iz = cell[2] + ((k >> 2) & 1);
    std::uint32_t idx;
    if (dense) {
      idx = ix + iy * static_cast<std::uint32_t>(n + 1) + iz * static_cast<std::uint32_t>(n + 1) * static_cast<std::uint32_t>(n + 1);
    } else {
      idx = (ix * 1u ^ iy * 2654435761u ^ iz * 805459861u) % size;
    }
    c.entry[k] = level_offsets[level] + idx;
    c.weight[k] = ((k & 1) ? frac[0] : 1.0 - frac[0]) * (((k >> 1) & 1) ? frac[1] : 1.0 - frac[1]) *
                  (((k >> 2) & 1) ? frac[2] : 1.0 - frac[2]);
  }
  return c;
}

MatrixXd HashGrid::encode(const MatrixXd& points) const {
  const int F = options.features;
  MatrixXd out = MatrixXd::Zero(output_dim(), points.cols());
  for (Eigen::Index b = 0; b < points.cols(); ++b) {
    const Vec3 p = points.col(b);
    for (int l = 0; l < options.levels; ++l) {
      const Corners c = corners(l, p);
      for (int k = 0; k < 8; ++k) {
        for (int f = 0; f < F; ++f) out(l * F + f, b) += c.weight[k] * params[c.entry[k] * F + f];
      }
    }
  }
  return out;
}

void HashGrid::backward(const MatrixXd& points, const MatrixXd& grad_features, VectorXd& grad_params) const {
  if (grad_params.size() != params.size()) grad_params = VectorXd::Zero(params.size());
  const int F = options.features;
  for (Eigen::Index b = 0; b < points.cols(); ++b) {
    const Vec3 p = points.col(b);
    for (int l = 0; l < options.levels; ++l) {
      const Corners c = corners(l, p);
      for (int k = 0; k < 8; ++k) {
        for (int f = 0; f < F; ++f) grad_params[c.entry[k] * F + f] += c.weight[k] * grad_features(l * F + f, b);
      }
    }
  }
}

std::string HashGrid::parameter_path(Eigen::Index index) const {
  const Eigen::Index entry = index / options.features;
  int level = 0;
  while (level + 1 < options.levels && entry >= level_offsets[level + 1]) ++level;
  return "grid.level" + std::to_string(level) + "[" + std::to_string(entry - level_offsets[level]) + "].f" +
         std::to_string(index % options.features);
}

NeuralTextureField NeuralTextureField::create(const Aabb& domain, std::uint64_t seed, const HashGridOptions& grid_options,
                                              int hidden, int hidden_layers) {
  NeuralTextureField f;
  f.grid = HashGrid::create(grid_options, domain, seed);
  std::vector<int> sizes{f.grid.output_dim()};
  for (int i = 0; i < hidden_layers; ++i) sizes.push_back(hidden);
  sizes.push_back(3);
  f.head = Mlp::create(sizes, seed + 1);
  return f;
}

MatrixXd NeuralTextureField::forward(const MatrixXd& points, Cache* cache) const {
  const MatrixXd features = grid.encode(points);
  if (cache) {
    cache->points = points;
    return head.forward(features, &cache->head);
  }
  return head.forward(features, nullptr);
}

void NeuralTextureField::backward(const Cache& cache, const MatrixXd& grad_out, VectorXd& grad_grid, VectorXd& grad_head) const {
  MatrixXd gf;
  head.backward(cache.head, grad_out, grad_head, &gf);
  grid.backward(cache.points, gf, grad_grid);
}

Vec3 NeuralTextureField::eval(const Vec3& p) const {
  MatrixXd pts(3, 1);
  pts.col(0) = p;
  return forward(pts).col(0);
}

void save_netf(const NeuralTextureField& field, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write checkpoint " + path.string());
  out.write(kMagic, sizeof(kMagic));
  put(out, kVersion);
  const auto& o = field.grid.options;
  for (int v : {o.levels, o.features, o.base_resolution, o.max_resolution, o.log2_table_size}) put<std::int32_t>(out, v);
  for (int a = 0; a < 3; ++a) put(out, field.grid.domain.lo[a]);
  for (int a = 0; a < 3; ++a) put(out, field.grid.domain.hi[a]);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(field.head.sizes.size()));
  for (int s : field.head.sizes) put<std::int32_t>(out, s);
  put<std::uint64_t>(out, static_cast<std::uint64_t>(field.grid.params.size()));
  out.write(reinterpret_cast<const char*>(field.grid.params.data()), field.grid.params.size() * sizeof(double));
  put<std::uint64_t>(out, static_cast<std::uint64_t>(field.head.params.size()));
  out.write(reinterpret_cast<const char*>(field.head.params.data()), field.head.params.size() * sizeof(double));
  if (!out) throw IoError("failed writing checkpoint " + path.string());
}

NeuralTextureField load_netf(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint " + path.string());
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kMagic, sizeof(magic)) != 0) throw ValidationError(path.string() + ": not a texture field checkpoint");
  const auto version = get<std::uint32_t>(in, path);
  if (version != kVersion) throw ValidationError(path.string() + ": unsupported checkpoint version " + std::to_string(version));
  HashGridOptions o;
  o.levels = get<std::int32_t>(in, path);
  o.features = get<std::int32_t>(in, path);
  o.base_resolution = get<std::int32_t>(in, path);
  o.max_resolution = get<std::int32_t>(in, path);
  o.log2_table_size = get<std::int32_t>(in, path);
  Aabb domain;
  for (int a = 0; a < 3; ++a) domain.lo[a] = get<double>(in, path);
  for (int a = 0; a < 3; ++a) domain.hi[a] = get<double>(in, path);
  const auto nsizes = get<std::uint32_t>(in, path);
  if (nsizes < 2 || nsizes > 64) throw ValidationError(path.string() + ": bad head layer count");
  std::vector<int> sizes(nsizes);
  for (auto& s : sizes) s = get<std::int32_t>(in, path);

  NeuralTextureField f;
  f.grid = HashGrid::create(o, domain, 0);
  f.head = Mlp::create(sizes, 0);
  if (sizes.front() != f.grid.output_dim() || sizes.back() != 3) throw ValidationError(path.string() + ": head shape does not match grid");
  const auto ngrid = get<std::uint64_t>(in, path);
  if (ngrid != static_cast<std::uint64_t>(f.grid.params.size())) throw ValidationError(path.string() + ": grid table size mismatch");
  in.read(reinterpret_cast<char*>(f.grid.params.data()), f.grid.params.size() * sizeof(double));
  const auto nhead = get<std::uint64_t>(in, path);
  if (nhead != static_cast<std::uint64_t>(f.head.params.size())) throw ValidationError(path.string() + ": head size mismatch");
  in.read(reinterpret_cast<char*>(f.head.params.data()), f.head.params.size() * sizeof(double));
  if (!in) throw ValidationError(path.string() + ": truncated checkpoint");
  check_finite(f.grid.params, [&](Eigen::Index i) { return f.grid.parameter_path(i); }, "parameter");
  check_finite(f.head.params, [&](Eigen::Index i) { return f.head.parameter_path(i); }, "parameter");
  return f;
}

}  // namespace gr
