#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "gr/guidance.hpp"
#include "gr/losses.hpp"
#include "gr/mesh.hpp"
#include "gr/nets.hpp"

namespace gr {

struct StageWeights {
  double mask = 1.0;
  double normal_consistency = 0.1;
  double laplacian = 40.0;
  double rgb = 0.0;
  double normal = 0.0;
  double hole = 0.0;
};

struct StageConfig {
  StageWeights weights;
  int iterations = 500;
  double vertex_lr = 1e-3;          // multiplied by the template's bbox diagonal, cosine-decayed
  double shader_lr = 1e-3;
  double tau = 1.0;                 // coarse: initial temperature; fine: <= 0 keeps the final coarse value
  bool anneal_tau = true;           // halve tau at each third of the stage
  int views_per_iteration = 0;      // 0 uses every view each iteration
  std::size_t rgb_pixels_per_view = 0;  // 0 uses every covered pixel
  int loss_window = 50;             // window for the increase check (warning + lr halving)
};

struct DeformConfig {
  StageConfig coarse;
  StageConfig fine;
  std::uint64_t seed = 0;
  LaplacianWeighting laplacian = LaplacianWeighting::Uniform;
  double band_px = 12.0;
  int shader_hidden = 128;
  int shader_layers = 2;
  int shader_octaves = 6;

  /// Defaults: coarse {M 1, NC 0.1, L 40; 500 it}, fine {M 1, NC 0.05, L 20, RGB 1, N 1, H 10; 1000 it}.
  static DeformConfig defaults();
  void validate() const;
};

struct ProgressRow {
  std::string stage;
  int iteration = 0;
  double total = 0, mask = 0, normal_consistency = 0, laplacian = 0, rgb = 0, normal = 0, hole = 0;
  double lr = 0, tau = 0;
};

struct StageReport {
  std::vector<ProgressRow> rows;
  std::vector<std::string> warnings;
  double final_tau = 1.0;
  std::size_t loops_before = 0, loops_after = 0;
};

TriMesh coarse_stage(const TriMesh& templ, const GuidanceBundle& bundle, const DeformConfig& config,
                     StageReport* report = nullptr);

struct FineResult {
  TriMesh mesh;
  NeuralShader shader;
};

/// `holes` must be captured from `coarse` before the first step. `tau` is the silhouette temperature to use.
FineResult fine_stage(const TriMesh& coarse, const GuidanceBundle& bundle, const HoleMaskSet& holes, NeuralShader shader,
                      const DeformConfig& config, double tau, StageReport* report = nullptr);

struct DeformResult {
  TriMesh coarse;
  TriMesh fine;
  NeuralShader shader;
  HoleMaskSet holes;
  StageReport coarse_report;
  StageReport fine_report;
};

/// Both stages back to back: coarse, hole capture, fine.
DeformResult deform(const TriMesh& templ, const GuidanceBundle& bundle, const DeformConfig& config);

void write_progress_csv(const std::vector<ProgressRow>& rows, const std::filesystem::path& path);

}  // namespace gr
