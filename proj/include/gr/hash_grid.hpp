#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "gr/nets.hpp"

namespace gr {

struct HashGridOptions {
  int levels = 12;
  int features = 2;
  int base_resolution = 16;
  int max_resolution = 2048;
  int log2_table_size = 19;
};

/// Multiresolution hash encoding. Coarse levels whose (N+1)^3 corners fit in the table
/// are indexed densely; finer levels hash corners with the usual three primes.
struct HashGrid {
  HashGridOptions options;
  Aabb domain;
  std::vector<int> resolutions;
  std::vector<Eigen::Index> level_offsets;  // into `params`, in entries (multiply by features for values)
  std::vector<std::uint32_t> level_sizes;   // entries per level
  VectorXd params;

  static HashGrid create(const HashGridOptions& options, const Aabb& domain, std::uint64_t seed);

  int output_dim() const { return options.levels * options.features; }

  /// Eight corner entries and trilinear weights of one level for a point.
  struct Corners {
    std::array<Eigen::Index, 8> entry;
    std::array<double, 8> weight;
  };
  Corners corners(int level, const Vec3& p) const;

  /// Encoded features (output_dim x B) for points given as 3 x B.
  MatrixXd encode(const MatrixXd& points) const;
  /// Scatters dL/dfeatures (output_dim x B) into `grad_params`.
  void backward(const MatrixXd& points, const MatrixXd& grad_features, VectorXd& grad_params) const;

  std::string parameter_path(Eigen::Index index) const;
};

/// Neural texture field: hash encoding followed by a small MLP head, RGB in [0, 1].
struct NeuralTextureField {
  HashGrid grid;
  Mlp head;

  static NeuralTextureField create(const Aabb& domain, std::uint64_t seed, const HashGridOptions& grid_options = {},
                                   int hidden = 64, int hidden_layers = 2);

  struct Cache {
    MatrixXd points;
    Mlp::Cache head;
  };
  MatrixXd forward(const MatrixXd& points, Cache* cache = nullptr) const;
  void backward(const Cache& cache, const MatrixXd& grad_out, VectorXd& grad_grid, VectorXd& grad_head) const;
  Vec3 eval(const Vec3& p) const;
};

/// Versioned binary checkpoint: magic, header (grid options, domain, head sizes), raw parameter tables.
void save_netf(const NeuralTextureField& field, const std::filesystem::path& path);
NeuralTextureField load_netf(const std::filesystem::path& path);

}  // namespace gr
