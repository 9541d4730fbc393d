#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "gr/vecmath.hpp"

namespace gr {

using Eigen::MatrixXd;
using Eigen::VectorXd;

/// Fully connected network with softplus hidden layers and a sigmoid output.
/// All weights and biases live in one flat vector: per layer, W (out x in, column-major) then b.
struct Mlp {
  std::vector<int> sizes;  // input, hidden..., output
  VectorXd params;

  static Mlp create(std::vector<int> sizes, std::uint64_t seed);

  int layer_count() const { return static_cast<int>(sizes.size()) - 1; }
  int input_dim() const { return sizes.front(); }
  int output_dim() const { return sizes.back(); }
  Eigen::Index weight_offset(int layer) const;
  Eigen::Index bias_offset(int layer) const { return weight_offset(layer) + sizes[layer] * sizes[layer + 1]; }
  Eigen::Map<const MatrixXd> weight(int layer) const;
  Eigen::Map<const VectorXd> bias(int layer) const;
  Eigen::Map<VectorXd> bias(int layer);

  /// Human-readable location of a flat parameter index, e.g. "layer1.weight[3,7]".
  std::string parameter_path(Eigen::Index index) const;

  struct Cache {
    std::vector<MatrixXd> inputs;  // layer inputs, inputs[0] is the network input
    std::vector<MatrixXd> pre;     // pre-activations per layer
  };

  /// Column-batched evaluation: `in` is input_dim x B, the result output_dim x B.
  MatrixXd forward(const MatrixXd& in, Cache* cache = nullptr) const;

  /// Accumulates dL/dparams into `grad_params` and, when requested, writes dL/dinput.
  void backward(const Cache& cache, const MatrixXd& grad_out, VectorXd& grad_params, MatrixXd* grad_in = nullptr) const;
};

/// Throws NumericalError naming the first non-finite parameter.
void check_finite(const VectorXd& values, const std::function<std::string(Eigen::Index)>& path, const std::string& what);

/// Neural shader S(x, n, d): sinusoidal encoding of the position (normalized to the mesh box),
/// raw unit normal and unit view direction appended, MLP to RGB.
struct NeuralShader {
  Mlp mlp;
  Vec3 center = Vec3::Zero();
  double scale = 1.0;
  int octaves = 6;

  static NeuralShader create(const Aabb& bounds, std::uint64_t seed, int hidden = 128, int hidden_layers = 2, int octaves = 6);

  int encoded_dim() const { return 3 + 6 * octaves + 6; }

  /// Raw inputs are 9 x B: rows 0-2 position, 3-5 unit normal, 6-8 unit direction.
  struct Cache {
    MatrixXd raw;
    Mlp::Cache mlp;
  };
  MatrixXd forward(const MatrixXd& raw, Cache* cache = nullptr) const;
  /// Accumulates parameter gradients; writes dL/draw (9 x B) when requested.
  void backward(const Cache& cache, const MatrixXd& grad_out, VectorXd& grad_params, MatrixXd* grad_raw = nullptr) const;

  Vec3 eval(const Vec3& x, const Vec3& n, const Vec3& d) const;

 private:
  MatrixXd encode(const MatrixXd& raw) const;
};

struct AdamOptions {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  /// Leave moments and parameters untouched where the gradient is exactly zero (sparse tables).
  bool skip_zero_gradients = false;
};

class Adam {
 public:
  Adam() = default;
  Adam(Eigen::Index size, AdamOptions options);

  /// Bias-corrected update. `lr_scale` multiplies the base learning rate for this step.
  /// A non-finite gradient aborts with NumericalError naming the parameter through `path`.
  void step(Eigen::Ref<VectorXd> params, const VectorXd& grad, double lr_scale = 1.0,
            const std::function<std::string(Eigen::Index)>& path = {});

  long steps() const { return step_; }
  AdamOptions& options() { return options_; }
  const AdamOptions& options() const { return options_; }

 private:
  AdamOptions options_;
  VectorXd m_, v_;
  long step_ = 0;
};

}  // namespace gr
