#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <random>

#include "gr/error.hpp"
#include "gr/hash_grid.hpp"
#include "oracles.hpp"

using namespace gr;

namespace {

const Aabb kBox{Vec3(-0.5, -1.0, 0.2), Vec3(0.7, 0.4, 1.0)};

Vec3 grid_point(const Aabb& box, int n, const Vec3& cell) {
  return box.lo + (box.hi - box.lo).cwiseProduct(cell / n);
}

HashGrid randomized(const HashGridOptions& o, std::uint64_t seed) {
  HashGrid g = HashGrid::create(o, kBox, seed);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (Eigen::Index i = 0; i < g.params.size(); ++i) g.params[i] = u(rng);
  return g;
}

}  // namespace

TEST_CASE("level layout") {
  const HashGrid g = HashGrid::create(HashGridOptions{}, kBox, 1);
  REQUIRE(g.resolutions.size() == 12);
  CHECK(g.resolutions.front() == 16);
  CHECK(g.resolutions.back() == 2048);
  for (std::size_t l = 1; l < g.resolutions.size(); ++l) CHECK(g.resolutions[l] > g.resolutions[l - 1]);
  for (auto s : g.level_sizes) CHECK(s <= (1u << 19));
  CHECK(g.level_sizes[0] == 17u * 17u * 17u);
  CHECK(g.output_dim() == 24);
  CHECK_THROWS_AS(HashGrid::create(HashGridOptions{.levels = 0}, kBox, 1), ValidationError);
}

TEST_CASE("lookups stay inside their level table") {
  const HashGrid g = HashGrid::create(HashGridOptions{.levels = 6, .max_resolution = 512, .log2_table_size = 10}, kBox, 3);
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(-2.0, 2.0);
  for (int i = 0; i < 2000; ++i) {
    const Vec3 p(u(rng), u(rng), u(rng));
    for (int l = 0; l < 6; ++l) {
      const auto c = g.corners(l, p);
      double wsum = 0.0;
      for (int k = 0; k < 8; ++k) {
        CHECK(c.entry[k] >= g.level_offsets[l]);
        CHECK(c.entry[k] < g.level_offsets[l] + static_cast<Eigen::Index>(g.level_sizes[l]));
        CHECK(c.weight[k] >= 0.0);
        wsum += c.weight[k];
      }
      CHECK(wsum == doctest::Approx(1.0).epsilon(1e-12));
    }
  }
}

TEST_CASE("query on a grid corner returns that corner's entry") {
  const HashGrid g = randomized(HashGridOptions{.levels = 4, .max_resolution = 128, .log2_table_size = 12}, 7);
  for (int l = 0; l < 4; ++l) {
    const int n = g.resolutions[l];
    for (const Vec3 cell : {Vec3(0, 0, 0), Vec3(3, 5, 1), Vec3(n, n, n), Vec3(n - 1, 2, n)}) {
      const Vec3 p = grid_point(kBox, n, cell);
      const auto c = g.corners(l, p);
      int hot = -1;
      for (int k = 0; k < 8; ++k) {
        if (c.weight[k] > 0.5) hot = k;
      }
      REQUIRE(hot >= 0);
      CHECK(c.weight[hot] == doctest::Approx(1.0).epsilon(1e-9));
      const MatrixXd f = g.encode(p);
      for (int ch = 0; ch < 2; ++ch) CHECK(f(l * 2 + ch, 0) == doctest::Approx(g.params[c.entry[hot] * 2 + ch]).epsilon(1e-9));
    }
  }
}

TEST_CASE("interpolation is trilinear within a cell") {
  // Single level: values along a cell edge blend linearly between the two corner values.
  const HashGrid g = randomized(HashGridOptions{.levels = 1, .base_resolution = 20, .max_resolution = 20}, 9);
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int i = 0; i < 50; ++i) {
    const Vec3 cell(std::floor(19 * u(rng)), std::floor(19 * u(rng)), std::floor(19 * u(rng)));
    const double a = u(rng), b = u(rng);
    const Vec3 e0 = grid_point(kBox, 20, cell), e1 = grid_point(kBox, 20, cell + Vec3(1, 0, 0));
    const Vec3 e2 = grid_point(kBox, 20, cell + Vec3(0, 1, 0)), e3 = grid_point(kBox, 20, cell + Vec3(1, 1, 0));
    const Vec3 p = grid_point(kBox, 20, cell + Vec3(a, b, 0));
    const MatrixXd v = g.encode(p);
    const MatrixXd expected = (1 - a) * (1 - b) * g.encode(e0) + a * (1 - b) * g.encode(e1) + (1 - a) * b * g.encode(e2) +
                              a * b * g.encode(e3);
    CHECK((v - expected).norm() < 1e-9);
  }
}

TEST_CASE("dead head gives a constant color") {
  NeuralTextureField f = NeuralTextureField::create(kBox, 2, HashGridOptions{.levels = 4, .log2_table_size = 12});
  f.head.params.setZero();
  f.head.bias(f.head.layer_count() - 1) = Eigen::Vector3d(0.5, -0.5, 1.0);
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int i = 0; i < 20; ++i) {
    const Vec3 c = f.eval(kBox.lo + (kBox.hi - kBox.lo).cwiseProduct(Vec3(u(rng), u(rng), u(rng))));
    CHECK(c[0] == doctest::Approx(logistic(0.5)));
    CHECK(c[1] == doctest::Approx(logistic(-0.5)));
    CHECK(c[2] == doctest::Approx(logistic(1.0)));
  }
}

TEST_CASE("texture field gradients match finite differences") {
  NeuralTextureField f = NeuralTextureField::create(kBox, 5, HashGridOptions{.levels = 5, .max_resolution = 256, .log2_table_size = 10});
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(0.0, 1.0), s(-0.3, 0.3);
  for (Eigen::Index i = 0; i < f.grid.params.size(); ++i) f.grid.params[i] = s(rng);
  MatrixXd pts(3, 8), G(3, 8);
  for (int b = 0; b < 8; ++b) {
    pts.col(b) = kBox.lo + (kBox.hi - kBox.lo).cwiseProduct(Vec3(u(rng), u(rng), u(rng)));
    G.col(b) = Vec3(s(rng), s(rng), s(rng));
  }
  NeuralTextureField::Cache cache;
  f.forward(pts, &cache);
  VectorXd gg = VectorXd::Zero(f.grid.params.size()), gh = VectorXd::Zero(f.head.params.size());
  f.backward(cache, G, gg, gh);
  auto loss = [&](const NeuralTextureField& q) { return (q.forward(pts).array() * G.array()).sum(); };
  // Every table entry touched by a query, plus untouched ones which must stay zero.
  std::vector<double> a, fd;
  std::vector<Eigen::Index> touched;
  for (int b = 0; b < 8; ++b) {
    for (int l = 0; l < 5; ++l) {
      for (auto e : f.grid.corners(l, pts.col(b)).entry) touched.push_back(e * 2), touched.push_back(e * 2 + 1);
    }
  }
  touched.push_back(3);
  const double h = 1e-5;
  for (Eigen::Index i : touched) {
    NeuralTextureField q = f;
    q.grid.params[i] += h;
    const double fp = loss(q);
    q.grid.params[i] -= 2 * h;
    fd.push_back((fp - loss(q)) / (2 * h));
    a.push_back(gg[i]);
  }
  CHECK(oracle::relative_error(a, fd) < 1e-4);
  a.clear();
  fd.clear();
  for (Eigen::Index i = 0; i < f.head.params.size(); i += 3) {
    NeuralTextureField q = f;
    q.head.params[i] += h;
    const double fp = loss(q);
    q.head.params[i] -= 2 * h;
    fd.push_back((fp - loss(q)) / (2 * h));
    a.push_back(gh[i]);
  }
  CHECK(oracle::relative_error(a, fd) < 1e-4);
}

TEST_CASE("checkpoint round trip") {
  const auto dir = std::filesystem::temp_directory_path() / "gr_test_hash_grid";
  std::filesystem::create_directories(dir);
  NeuralTextureField f = NeuralTextureField::create(kBox, 5, HashGridOptions{.levels = 3, .log2_table_size = 12}, 16, 1);
  f.grid.params[7] = 0.123456789;
  save_netf(f, dir / "field.netf");
  const NeuralTextureField g = load_netf(dir / "field.netf");
  CHECK(g.grid.params == f.grid.params);
  CHECK(g.head.params == f.head.params);
  CHECK(g.head.sizes == f.head.sizes);
  CHECK(g.grid.resolutions == f.grid.resolutions);
  CHECK(g.eval(Vec3(0.1, -0.2, 0.5)) == f.eval(Vec3(0.1, -0.2, 0.5)));
  {
    std::ofstream bad(dir / "bad.netf", std::ios::binary);
    bad << "NOTAFIELD";
  }
  CHECK_THROWS_AS(load_netf(dir / "bad.netf"), ValidationError);
  CHECK_THROWS_AS(load_netf(dir / "absent.netf"), IoError);
  {
    std::ifstream in(dir / "field.netf", std::ios::binary);
    std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    std::ofstream cut(dir / "cut.netf", std::ios::binary);
    cut.write(bytes.data(), static_cast<std::streamsize>(bytes.size() / 2));
  }
  CHECK_THROWS_AS(load_netf(dir / "cut.netf"), ValidationError);
  std::filesystem::remove_all(dir);
}
