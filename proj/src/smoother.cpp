#include "gr/smoother.hpp"

#include <Eigen/Core>

#include <cmath>
#include <deque>

#include "gr/error.hpp"

namespace gr {
namespace {

using Eigen::VectorXd;

class ShellProblem {
 public:
  ShellProblem(const TriMesh& rest, const ShellEnergyConfig& cfg)
      : rest_(rest), adj_(AdjacencyIndex::build(rest)), cfg_(cfg), work_(rest) {}

  double eval(const VectorXd& x, VectorXd* g) {
    for (std::size_t v = 0; v < work_.vertex_count(); ++v) work_.vertices[v] = x.segment<3>(3 * v);
    std::vector<Vec3> gb, gm;
    const double eb = bending_energy(work_, rest_, adj_, cfg_.bending_stiffness, g ? &gb : nullptr);
    const double em = membrane_energy(work_, rest_, cfg_.mu(), cfg_.lambda(), g ? &gm : nullptr);
    if (g) {
      g->resize(x.size());
      for (std::size_t v = 0; v < work_.vertex_count(); ++v) g->segment<3>(3 * v) = gb[v] + gm[v];
    }
    return eb + em;
  }

 private:
  const TriMesh& rest_;
  AdjacencyIndex adj_;
  const ShellEnergyConfig& cfg_;
  TriMesh work_;
};

}  // namespace

SmoothResult smooth_quasistatic(const TriMesh& mesh, const ShellEnergyConfig& cfg) {
  cfg.validate();
  validate_mesh(mesh);
  SmoothResult res;
  res.mesh = mesh;
  const std::size_t V = mesh.vertex_count();
  ShellProblem problem(mesh, cfg);
  VectorXd x(3 * V), g;
  for (std::size_t v = 0; v < V; ++v) x.segment<3>(3 * v) = mesh.vertices[v];
  double E = problem.eval(x, &g);
  if (!std::isfinite(E)) throw NumericalError("smoother: initial energy is not finite");
  res.energies.push_back(E);
  const double diag = std::max(mesh.bbox_diagonal(), 1e-12);
  const double gtol = cfg.tolerance * cfg.bending_stiffness * diag;

  std::deque<VectorXd> S, Y;
  std::deque<double> rho;
  int failures = 0;
  res.stop_reason = "max iterations";
  for (int it = 0; it < cfg.max_iterations; ++it) {
    if (g.norm() < gtol) {
      res.converged = true;
      res.stop_reason = "gradient tolerance";
      break;
    }
    // L-BFGS two-loop recursion.
    VectorXd q = g;
    std::vector<double> alpha(S.size());
    for (int i = static_cast<int>(S.size()) - 1; i >= 0; --i) {
      alpha[i] = rho[i] * S[i].dot(q);
      q -= alpha[i] * Y[i];
    }
    if (!S.empty()) q *= S.back().dot(Y.back()) / Y.back().squaredNorm();
    else q *= 1e-3 * diag / std::max(g.norm(), 1e-300);
    for (std::size_t i = 0; i < S.size(); ++i) {
      const double beta = rho[i] * Y[i].dot(q);
      q += (alpha[i] - beta) * S[i];
    }
    VectorXd d = -q;
    double slope = g.dot(d);
    if (!(slope < 0.0)) {
      S.clear();
      Y.clear();
      rho.clear();
      d = -g * (1e-3 * diag / std::max(g.norm(), 1e-300));
      slope = g.dot(d);
    }

    double step = 1.0;
    bool accepted = false;
    VectorXd xn, gn;
    double En = E;
    for (int tries = 0; tries <= 20; ++tries) {
      xn = x + step * d;
      En = problem.eval(xn, &gn);
      if (std::isfinite(En) && En <= E + 1e-4 * step * slope) {
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted || !(En < E)) {
      // The line search could not decrease the energy; drop curvature history once, then give up.
      if (!S.empty() && failures < 20) {
        ++failures;
        S.clear();
        Y.clear();
        rho.clear();
        continue;
      }
      res.stop_reason = accepted ? "no further decrease" : "line search failed";
      res.converged = g.norm() < 1e3 * gtol;
      break;
    }
    const VectorXd s = xn - x, y = gn - g;
    const double sy = s.dot(y);
    if (sy > 1e-16 * s.norm() * y.norm()) {
      S.push_back(s);
      Y.push_back(y);
      rho.push_back(1.0 / sy);
      if (static_cast<int>(S.size()) > cfg.history) {
        S.pop_front();
        Y.pop_front();
        rho.pop_front();
      }
    }
    x = std::move(xn);
    g = std::move(gn);
    E = En;
    res.energies.push_back(E);
    res.iterations = it + 1;
  }
  for (std::size_t v = 0; v < V; ++v) res.mesh.vertices[v] = x.segment<3>(3 * v);
  const auto rest_n = face_area_normals(mesh);
  const auto cur_n = face_area_normals(res.mesh);
  for (std::size_t f = 0; f < mesh.face_count(); ++f) res.inverted_faces += rest_n[f].dot(cur_n[f]) < 0.0;
  return res;
}

}  // namespace gr
