#include "gr/deformer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <numeric>
#include <random>

#include "gr/error.hpp"
#include "gr/parallel.hpp"

namespace gr {
namespace {

std::uint64_t mix(std::uint64_t a, std::uint64_t b) {
  // splitmix64 finalizer over a combined key
  std::uint64_t z = a * 0x9E3779B97F4A7C15ull + b + 0x632BE59BD9B4E5ull;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

void check_stage(const StageConfig& s, const char* name) {
  const auto& w = s.weights;
  for (double v : {w.mask, w.normal_consistency, w.laplacian, w.rgb, w.normal, w.hole}) {
    if (!(v >= 0.0) || !std::isfinite(v)) throw ValidationError(std::string(name) + " stage: weights must be finite and non-negative");
  }
  if (s.iterations < 0) throw ValidationError(std::string(name) + " stage: iterations must be non-negative");
  if (!(s.vertex_lr > 0.0) || !(s.shader_lr > 0.0)) throw ValidationError(std::string(name) + " stage: learning rates must be positive");
  if (s.views_per_iteration < 0) throw ValidationError(std::string(name) + " stage: views_per_iteration must be >= 0");
  if (s.loss_window < 1) throw ValidationError(std::string(name) + " stage: loss_window must be >= 1");
}

/// Deterministic view batches: each pass over the views is a seeded permutation.
class ViewScheduler {
 public:
  ViewScheduler(std::size_t views, int per_iteration, std::uint64_t seed)
      : n_(views), k_(per_iteration <= 0 || static_cast<std::size_t>(per_iteration) >= views ? views : per_iteration), rng_(seed) {
    order_.resize(n_);
    std::iota(order_.begin(), order_.end(), std::size_t{0});
    pos_ = n_;
  }

  std::vector<std::size_t> next() {
    if (k_ == n_) return order_;
    std::vector<std::size_t> out;
    while (out.size() < k_) {
      if (pos_ == n_) {
        std::shuffle(order_.begin(), order_.end(), rng_);
        pos_ = 0;
      }
      out.push_back(order_[pos_++]);
    }
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
    return out;
  }

 private:
  std::size_t n_, k_;
  std::mt19937_64 rng_;
  std::vector<std::size_t> order_;
  std::size_t pos_;
};

struct StageRun {
  TriMesh mesh;
  NeuralShader shader;
  double tau;
};

StageRun run_stage(const char* name, const TriMesh& start, const GuidanceBundle& bundle, const HoleMaskSet* holes,
                   NeuralShader* shader, const DeformConfig& cfg, const StageConfig& sc, double tau0, bool anneal,
                   std::uint64_t stage_seed, StageReport* report) {
  StageRun run{start, shader ? *shader : NeuralShader{}, tau0};
  if (sc.iterations == 0) return run;
  const auto& w = sc.weights;
  if (w.normal > 0.0 && !bundle.has_normals()) throw ValidationError("normal loss requested but the guidance has no normal maps");
  if (w.hole > 0.0 && (!holes || holes->size() != bundle.size())) throw ValidationError("hole loss requested without reference masks");
  if (w.rgb > 0.0 && !shader) throw ValidationError("RGB loss requested without a shader");

  TriMesh& mesh = run.mesh;
  const std::size_t V = mesh.vertex_count();
  const AdjacencyIndex adj = AdjacencyIndex::build(mesh, cfg.laplacian);
  const double diag = std::max(mesh.bbox_diagonal(), 1e-12);
  VectorXd x(3 * V);
  for (std::size_t v = 0; v < V; ++v) x.segment<3>(3 * v) = mesh.vertices[v];
  AdamOptions vopt;
  vopt.lr = sc.vertex_lr * diag;
  Adam vadam(x.size(), vopt);
  const bool train_shader = w.rgb > 0.0;
  AdamOptions sopt;
  sopt.lr = sc.shader_lr;
  Adam sadam(train_shader ? run.shader.mlp.params.size() : 0, sopt);

  ViewScheduler scheduler(bundle.size(), sc.views_per_iteration, mix(stage_seed, 1));
  TermWeights tw{w.mask, w.rgb, w.normal, w.hole};
  double lr_factor = 1.0;
  double window_sum = 0.0, previous_window = -1.0;
  int window_count = 0;

  for (int it = 0; it < sc.iterations; ++it) {
    double tau = tau0;
    if (anneal) tau = tau0 * std::pow(0.5, std::floor(3.0 * it / sc.iterations));
    run.tau = tau;
    const auto views = scheduler.next();
    const auto normals = vertex_normals(mesh);
    std::vector<ViewTerms> terms(views.size());
    std::vector<ViewGradients> grads(views.size());
    ViewLossOptions opt;
    opt.tau = tau;
    opt.band_px = cfg.band_px;
    opt.rgb_max_pixels = sc.rgb_pixels_per_view;
    parallel_for(views.size(), [&](std::size_t j) {
      const std::size_t i = views[j];
      ViewTargets tg;
      tg.view = &bundle.views[i];
      tg.mask = &bundle.mask[i];
      tg.rgb = &bundle.rgb[i];
      tg.normal = bundle.has_normals() ? &bundle.normal[i] : nullptr;
      tg.hole_reference = holes && !holes->empty() ? &(*holes)[i] : nullptr;
      ViewLossOptions o = opt;
      o.rgb_sample_seed = mix(mix(stage_seed, static_cast<std::uint64_t>(it)), i);
      terms[j] = evaluate_view(mesh, adj, normals, tg, train_shader ? &run.shader : nullptr, tw, o, &grads[j]);
    });

    const double inv = 1.0 / static_cast<double>(views.size());
    ProgressRow row;
    row.stage = name;
    row.iteration = it;
    row.tau = tau;
    std::vector<Vec3> gv(V, Vec3::Zero()), gn(V, Vec3::Zero());
    VectorXd gs = train_shader ? VectorXd::Zero(run.shader.mlp.params.size()) : VectorXd();
    for (std::size_t j = 0; j < views.size(); ++j) {
      row.mask += terms[j].mask * inv;
      row.rgb += terms[j].rgb * inv;
      row.normal += terms[j].normal * inv;
      row.hole += terms[j].hole * inv;
      for (std::size_t v = 0; v < V; ++v) {
        gv[v] += grads[j].vertices[v] * inv;
        gn[v] += grads[j].normals[v] * inv;
      }
      if (train_shader && grads[j].shader.size() > 0) gs += grads[j].shader * inv;
    }
    if (w.rgb > 0.0 || w.normal > 0.0 || w.hole > 0.0) {
      const auto g = vertex_normals_backward(mesh, gn);
      for (std::size_t v = 0; v < V; ++v) gv[v] += g[v];
    }
    if (w.normal_consistency > 0.0) {
      std::vector<Vec3> g;
      row.normal_consistency = loss_normal_consistency(mesh, adj, &g);
      for (std::size_t v = 0; v < V; ++v) gv[v] += w.normal_consistency * g[v];
    }
    if (w.laplacian > 0.0) {
      std::vector<Vec3> g;
      row.laplacian = loss_laplacian(mesh, adj, &g);
      for (std::size_t v = 0; v < V; ++v) gv[v] += w.laplacian * g[v];
    }
    row.total = w.mask * row.mask + w.normal_consistency * row.normal_consistency + w.laplacian * row.laplacian +
                w.rgb * row.rgb + w.normal * row.normal + w.hole * row.hole;
    if (!std::isfinite(row.total)) throw NumericalError(std::string(name) + " stage: non-finite loss at iteration " + std::to_string(it));

    const double cosine = 0.5 * (1.0 + std::cos(std::numbers::pi * it / sc.iterations));
    row.lr = vopt.lr * lr_factor * cosine;
    VectorXd g(3 * V);
    for (std::size_t v = 0; v < V; ++v) g.segment<3>(3 * v) = gv[v];
    vadam.step(x, g, lr_factor * cosine, [&](Eigen::Index k) {
      return std::string(name) + " stage iteration " + std::to_string(it) + ": vertex " + std::to_string(k / 3) + " component " +
             std::to_string(k % 3);
    });
    for (std::size_t v = 0; v < V; ++v) mesh.vertices[v] = x.segment<3>(3 * v);
    if (train_shader) {
      sadam.step(run.shader.mlp.params, gs, 1.0, [&](Eigen::Index k) {
        return std::string(name) + " stage iteration " + std::to_string(it) + ": shader " + run.shader.mlp.parameter_path(k);
      });
    }
    if (report) report->rows.push_back(row);

    window_sum += row.total;
    if (++window_count == sc.loss_window) {
      const double mean = window_sum / window_count;
      if (previous_window >= 0.0 && mean > previous_window) {
        lr_factor *= 0.5;
        if (report) {
          report->warnings.push_back(std::string(name) + " stage: mean loss rose over the window ending at iteration " +
                                     std::to_string(it) + "; vertex learning rate halved");
        }
      }
      previous_window = mean;
      window_sum = 0.0;
      window_count = 0;
    }
  }
  return run;
}

}  // namespace

DeformConfig DeformConfig::defaults() {
  DeformConfig c;
  c.coarse.weights = {1.0, 0.1, 40.0, 0.0, 0.0, 0.0};
  c.coarse.iterations = 500;
  c.fine.weights = {1.0, 0.05, 20.0, 1.0, 1.0, 10.0};
  c.fine.iterations = 1000;
  c.fine.tau = 0.0;
  c.fine.anneal_tau = false;
  return c;
}

void DeformConfig::validate() const {
  check_stage(coarse, "coarse");
  check_stage(fine, "fine");
  if (!(coarse.tau > 0.0)) throw ValidationError("coarse stage: tau must be positive");
  if (!(band_px > 0.0)) throw ValidationError("band_px must be positive");
  if (shader_hidden < 1 || shader_layers < 1 || shader_octaves < 0) throw ValidationError("invalid shader architecture");
}

TriMesh coarse_stage(const TriMesh& templ, const GuidanceBundle& bundle, const DeformConfig& config, StageReport* report) {
  config.validate();
  bundle.validate();
  validate_mesh(templ);
  const std::size_t before = boundary_loops(templ).loops.size();
  StageRun run = run_stage("coarse", templ, bundle, nullptr, nullptr, config, config.coarse, config.coarse.tau,
                           config.coarse.anneal_tau, mix(config.seed, 11), report);
  if (report) {
    report->final_tau = run.tau;
    report->loops_before = before;
    report->loops_after = boundary_loops(run.mesh).loops.size();
  }
  return run.mesh;
}

FineResult fine_stage(const TriMesh& coarse, const GuidanceBundle& bundle, const HoleMaskSet& holes, NeuralShader shader,
                      const DeformConfig& config, double tau, StageReport* report) {
  config.validate();
  bundle.validate();
  validate_mesh(coarse);
  if (!(tau > 0.0)) throw ValidationError("fine stage: tau must be positive");
  const std::size_t before = boundary_loops(coarse).loops.size();
  StageRun run = run_stage("fine", coarse, bundle, &holes, &shader, config, config.fine, tau, config.fine.anneal_tau,
                           mix(config.seed, 23), report);
  if (report) {
    report->final_tau = run.tau;
    report->loops_before = before;
    report->loops_after = boundary_loops(run.mesh).loops.size();
  }
  return {std::move(run.mesh), config.fine.iterations > 0 && config.fine.weights.rgb > 0.0 ? std::move(run.shader) : std::move(shader)};
}

DeformResult deform(const TriMesh& templ, const GuidanceBundle& bundle, const DeformConfig& config) {
  DeformResult r;
  r.coarse = coarse_stage(templ, bundle, config, &r.coarse_report);
  if (config.coarse.iterations == 0) r.coarse_report.final_tau = config.coarse.tau;
  r.holes = capture_hole_masks(r.coarse, bundle.views);
  const double tau = config.fine.tau > 0.0 ? config.fine.tau : r.coarse_report.final_tau;
  NeuralShader shader = NeuralShader::create(templ.bounds(), mix(config.seed, 37), config.shader_hidden, config.shader_layers,
                                             config.shader_octaves);
  FineResult fine = fine_stage(r.coarse, bundle, r.holes, std::move(shader), config, tau, &r.fine_report);
  r.fine = std::move(fine.mesh);
  r.shader = std::move(fine.shader);
  return r;
}

void write_progress_csv(const std::vector<ProgressRow>& rows, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << "stage,iteration,total,mask,normal_consistency,laplacian,rgb,normal,hole,lr,tau\n";
  out.precision(10);
  for (const auto& r : rows) {
    out << r.stage << ',' << r.iteration << ',' << r.total << ',' << r.mask << ',' << r.normal_consistency << ','
        << r.laplacian << ',' << r.rgb << ',' << r.normal << ',' << r.hole << ',' << r.lr << ',' << r.tau << "\n";
  }
  if (!out) throw IoError("failed writing " + path.string());
}

}  // namespace gr
