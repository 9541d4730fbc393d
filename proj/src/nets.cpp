#include "gr/nets.hpp"

#include <cmath>
#include <numbers>
#include <random>

#include "gr/error.hpp"

namespace gr {
namespace {

double softplus(double x) { return x > 30.0 ? x : std::log1p(std::exp(x)); }

}  // namespace

Mlp Mlp::create(std::vector<int> sizes, std::uint64_t seed) {
  if (sizes.size() < 2) throw ValidationError("an MLP needs at least input and output sizes");
  Mlp mlp;
  mlp.sizes = std::move(sizes);
  Eigen::Index total = 0;
  for (int l = 0; l < mlp.layer_count(); ++l) total += static_cast<Eigen::Index>(mlp.sizes[l] + 1) * mlp.sizes[l + 1];
  mlp.params = VectorXd::Zero(total);
  std::mt19937_64 rng(seed);
  for (int l = 0; l < mlp.layer_count(); ++l) {
    const double bound = std::sqrt(6.0 / (mlp.sizes[l] + mlp.sizes[l + 1]));
    std::uniform_real_distribution<double> u(-bound, bound);
    const Eigen::Index off = mlp.weight_offset(l);
    for (Eigen::Index i = 0; i < static_cast<Eigen::Index>(mlp.sizes[l]) * mlp.sizes[l + 1]; ++i) mlp.params[off + i] = u(rng);
  }
  return mlp;
}

Eigen::Index Mlp::weight_offset(int layer) const {
  Eigen::Index off = 0;
  for (int l = 0; l < layer; ++l) off += static_cast<Eigen::Index>(sizes[l] + 1) * sizes[l + 1];
  return off;
}

Eigen::Map<const MatrixXd> Mlp::weight(int layer) const {
  return {params.data() + weight_offset(layer), sizes[layer + 1], sizes[layer]};
}

Eigen::Map<const VectorXd> Mlp::bias(int layer) const { return {params.data() + bias_offset(layer), sizes[layer + 1]}; }
Eigen::Map<VectorXd> Mlp::bias(int layer) { return {params.data() + bias_offset(layer), sizes[layer + 1]}; }

std::string Mlp::parameter_path(Eigen::Index index) const {
  for (int l = 0; l < layer_count(); ++l) {
    const Eigen::Index w = weight_offset(l), b = bias_offset(l);
    if (index < b) {
      const Eigen::Index local = index - w;
      return "layer" + std::to_string(l) + ".weight[" + std::to_string(local % sizes[l + 1]) + "," +
             std::to_string(local / sizes[l + 1]) + "]";
    }
    if (index < b + sizes[l + 1]) return "layer" + std::to_string(l) + ".bias[" + std::to_string(index - b) + "]";
  }
  return "param[" + std::to_string(index) + "]";
}

MatrixXd Mlp::forward(const MatrixXd& in, Cache* cache) const {
  if (in.rows() != input_dim()) throw ValidationError("MLP input has the wrong dimension");
  MatrixXd x = in;
  if (cache) {
    cache->inputs.assign(layer_count(), MatrixXd());
    cache->pre.assign(layer_count(), MatrixXd());
  }
  for (int l = 0; l < layer_count(); ++l) {
    MatrixXd z = weight(l) * x;
    z.colwise() += bias(l);
    if (cache) {
      cache->inputs[l] = std::move(x);
      cache->pre[l] = z;
    }
    const bool last = l + 1 == layer_count();
    x = z.unaryExpr([last](double v) { return last ? logistic(v) : softplus(v); });
  }
  return x;
}

void Mlp::backward(const Cache& cache, const MatrixXd& grad_out, VectorXd& grad_params, MatrixXd* grad_in) const {
  if (grad_params.size() != params.size()) grad_params = VectorXd::Zero(params.size());
  MatrixXd g = grad_out;
  for (int l = layer_count() - 1; l >= 0; --l) {
    const bool last = l + 1 == layer_count();
    const MatrixXd& z = cache.pre[l];
    // sigmoid' = s(1 - s); softplus' = sigmoid.
    g = g.cwiseProduct(z.unaryExpr([last](double v) {
      const double s = logistic(v);
      return last ? s * (1.0 - s) : s;
    }));
    Eigen::Map<MatrixXd> gw(grad_params.data() + weight_offset(l), sizes[l + 1], sizes[l]);
    gw.noalias() += g * cache.inputs[l].transpose();
    Eigen::Map<VectorXd>(grad_params.data() + bias_offset(l), sizes[l + 1]) += g.rowwise().sum();
    if (l > 0 || grad_in) g = weight(l).transpose() * g;
  }
  if (grad_in) *grad_in = std::move(g);
}

void check_finite(const VectorXd& values, const std::function<std::string(Eigen::Index)>& path, const std::string& what) {
  for (Eigen::Index i = 0; i < values.size(); ++i) {
    if (!std::isfinite(values[i])) {
      throw NumericalError("non-finite " + what + " at " + (path ? path(i) : "index " + std::to_string(i)));
    }
  }
}

NeuralShader NeuralShader::create(const Aabb& bounds, std::uint64_t seed, int hidden, int hidden_layers, int octaves) {
  NeuralShader s;
  s.octaves = octaves;
  s.center = bounds.empty() ? Vec3::Zero() : bounds.center();
  s.scale = bounds.empty() || bounds.diagonal() <= 0.0 ? 1.0 : 0.5 * bounds.diagonal();
  std::vector<int> sizes{s.encoded_dim()};
  for (int i = 0; i < hidden_layers; ++i) sizes.push_back(hidden);
  sizes.push_back(3);
  s.mlp = Mlp::create(sizes, seed);
  return s;
}

MatrixXd NeuralShader::encode(const MatrixXd& raw) const {
  const Eigen::Index B = raw.cols();
  MatrixXd e(encoded_dim(), B);
  for (Eigen::Index c = 0; c < B; ++c) {
    const Vec3 x = (raw.col(c).head<3>() - center) / scale;
    e.col(c).head<3>() = x;
    for (int k = 0; k < octaves; ++k) {
      const double f = std::ldexp(std::numbers::pi, k);
      for (int a = 0; a < 3; ++a) {
        e(3 + 6 * k + a, c) = std::sin(f * x[a]);
        e(6 + 6 * k + a, c) = std::cos(f * x[a]);
      }
    }
    e.col(c).tail<6>() = raw.col(c).tail<6>();
  }
  return e;
}

MatrixXd NeuralShader::forward(const MatrixXd& raw, Cache* cache) const {
  if (raw.rows() != 9) throw ValidationError("shader input must have 9 rows");
  const MatrixXd e = encode(raw);
  if (cache) {
    cache->raw = raw;
    return mlp.forward(e, &cache->mlp);
  }
  return mlp.forward(e, nullptr);
}

void NeuralShader::backward(const Cache& cache, const MatrixXd& grad_out, VectorXd& grad_params, MatrixXd* grad_raw) const {
  MatrixXd ge;
  mlp.backward(cache.mlp, grad_out, grad_params, grad_raw ? &ge : nullptr);
  if (!grad_raw) return;
  const Eigen::Index B = cache.raw.cols();
  grad_raw->resize(9, B);
  for (Eigen::Index c = 0; c < B; ++c) {
    const Vec3 x = (cache.raw.col(c).head<3>() - center) / scale;
    Vec3 gx = ge.col(c).head<3>();
    for (int k = 0; k < octaves; ++k) {
      const double f = std::ldexp(std::numbers::pi, k);
      for (int a = 0; a < 3; ++a) {
        gx[a] += ge(3 + 6 * k + a, c) * f * std::cos(f * x[a]) - ge(6 + 6 * k + a, c) * f * std::sin(f * x[a]);
      }
    }
    grad_raw->col(c).head<3>() = gx / scale;
    grad_raw->col(c).tail<6>() = ge.col(c).tail<6>();
  }
}

Vec3 NeuralShader::eval(const Vec3& x, const Vec3& n, const Vec3& d) const {
  MatrixXd raw(9, 1);
  raw << x, n, d;
  return forward(raw).col(0);
}

Adam::Adam(Eigen::Index size, AdamOptions options)
    : options_(options), m_(VectorXd::Zero(size)), v_(VectorXd::Zero(size)) {}

void Adam::step(Eigen::Ref<VectorXd> params, const VectorXd& grad, double lr_scale,
                const std::function<std::string(Eigen::Index)>& path) {
  if (params.size() != m_.size() || grad.size() != m_.size()) throw ValidationError("Adam state does not match parameter shape");
  check_finite(grad, path, "gradient");
  ++step_;
  const double b1 = options_.beta1, b2 = options_.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(step_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(step_));
  const double lr = options_.lr * lr_scale;
  for (Eigen::Index i = 0; i < params.size(); ++i) {
    const double g = grad[i];
    if (options_.skip_zero_gradients && g == 0.0) continue;
    m_[i] = b1 * m_[i] + (1.0 - b1) * g;
    v_[i] = b2 * v_[i] + (1.0 - b2) * g * g;
    params[i] -= lr * (m_[i] / c1) / (std::sqrt(v_[i] / c2) + options_.eps);
  }
}

}  // namespace gr
