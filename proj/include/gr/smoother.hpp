#pragma once

#include <array>
#include <string>
#include <vector>

#include "gr/mesh.hpp"

namespace gr {

struct ShellEnergyConfig {
  double bending_stiffness = 0.02;  // k_b
  double youngs_modulus = 1.0;
  double poisson_ratio = 0.3;
  double tolerance = 1e-6;          // stop when |grad E| < tolerance * k_b * bbox diagonal
  int max_iterations = 3000;
  int history = 8;                  // L-BFGS memory

  void validate() const;
  double mu() const { return youngs_modulus / (2.0 * (1.0 + poisson_ratio)); }
  double lambda() const { return youngs_modulus * poisson_ratio / ((1.0 + poisson_ratio) * (1.0 - 2.0 * poisson_ratio)); }
};

/// Signed dihedral deviation from flat across a hinge, in radians (0 for coplanar faces).
double hinge_angle(const TriMesh& mesh, const Hinge& h);

/// Same angle plus its gradient with respect to (v0, v1, opp0, opp1).
double hinge_angle_gradient(const TriMesh& mesh, const Hinge& h, std::array<Vec3, 4>& grad);

/// Discrete-shells bending with zero rest angle: sum over hinges of k_b theta^2 |e|^2 / (A0 + A1),
/// with |e| and the face areas taken from `rest`. Degenerate hinges are skipped.
double bending_energy(const TriMesh& mesh, const TriMesh& rest, const AdjacencyIndex& adjacency, double k_b,
                      std::vector<Vec3>* grad = nullptr);

/// Rest-area weighted 2D Neo-Hookean energy of each face's in-plane deformation gradient.
/// Returns +inf when a face is inverted or collapsed.
double membrane_energy(const TriMesh& mesh, const TriMesh& rest, double mu, double lambda, std::vector<Vec3>* grad = nullptr);

/// Neo-Hookean density for a 3x2 deformation gradient F.
double neo_hookean_density(const Eigen::Matrix<double, 3, 2>& F, double mu, double lambda);

struct SmoothResult {
  TriMesh mesh;
  std::vector<double> energies;  // total energy after each accepted step, starting with the initial value
  int iterations = 0;
  bool converged = false;
  std::string stop_reason;
  std::size_t inverted_faces = 0;
};

/// Quasi-static minimization of bending + membrane energy (L-BFGS with backtracking line search
/// accepting only decreasing steps). The input geometry is the rest state.
SmoothResult smooth_quasistatic(const TriMesh& mesh, const ShellEnergyConfig& config = {});

}  // namespace gr
