#include "gr/config.hpp"

#include <fstream>
#include <set>

#include "gr/error.hpp"

namespace gr {
namespace {

using nlohmann::json;

/// Reads optional keys from one JSON object and rejects anything it was not asked about.
class Reader {
 public:
  Reader(const json& j, std::string where) : j_(j), where_(std::move(where)) {
    if (!j_.is_object()) throw ValidationError(where_ + ": expected a JSON object");
  }
  ~Reader() noexcept(false) {
    if (std::uncaught_exceptions() > 0) return;
    for (const auto& [key, value] : j_.items()) {
      if (!seen_.count(key)) throw ValidationError(where_ + ": unknown key '" + key + "'");
    }
  }

  template <class T>
  void get(const char* key, T& out) {
    seen_.insert(key);
    auto it = j_.find(key);
    if (it == j_.end()) return;
    try {
      if constexpr (std::is_floating_point_v<T>) {
        if (!it->is_number()) throw ValidationError("");
      } else if constexpr (std::is_same_v<T, bool>) {
        if (!it->is_boolean()) throw ValidationError("");
      } else if constexpr (std::is_integral_v<T>) {
        if (!it->is_number_integer()) throw ValidationError("");
        if (std::is_unsigned_v<T> && !it->is_number_unsigned()) throw ValidationError("");
      }
      out = it->template get<T>();
    } catch (const std::exception&) {
      throw ValidationError(where_ + ": key '" + key + "' has the wrong type");
    }
  }

  void get(const char* key, Vec3& out) {
    seen_.insert(key);
    auto it = j_.find(key);
    if (it == j_.end()) return;
    if (!it->is_array() || it->size() != 3) throw ValidationError(where_ + ": key '" + key + "' must be an array of 3 numbers");
    for (int i = 0; i < 3; ++i) {
      if (!(*it)[i].is_number()) throw ValidationError(where_ + ": key '" + key + "' must be an array of 3 numbers");
      out[i] = (*it)[i].get<double>();
    }
  }

  /// Nested object, or nullptr when absent.
  const json* child(const char* key) {
    seen_.insert(key);
    auto it = j_.find(key);
    return it == j_.end() ? nullptr : &*it;
  }

  const std::string& where() const { return where_; }

 private:
  const json& j_;
  std::string where_;
  std::set<std::string> seen_;
};

json vec_json(const Vec3& v) { return json::array({v.x(), v.y(), v.z()}); }

void read_stage(const json& j, const std::string& where, StageConfig& s) {
  Reader r(j, where);
  if (const json* w = r.child("weights")) {
    Reader rw(*w, where + ".weights");
    rw.get("mask", s.weights.mask);
    rw.get("normal_consistency", s.weights.normal_consistency);
    rw.get("laplacian", s.weights.laplacian);
    rw.get("rgb", s.weights.rgb);
    rw.get("normal", s.weights.normal);
    rw.get("hole", s.weights.hole);
  }
  r.get("iterations", s.iterations);
  r.get("vertex_lr", s.vertex_lr);
  r.get("shader_lr", s.shader_lr);
  r.get("tau", s.tau);
  r.get("anneal_tau", s.anneal_tau);
  r.get("views_per_iteration", s.views_per_iteration);
  r.get("rgb_pixels_per_view", s.rgb_pixels_per_view);
  r.get("loss_window", s.loss_window);
}

json stage_json(const StageConfig& s) {
  return {{"weights",
           {{"mask", s.weights.mask},
            {"normal_consistency", s.weights.normal_consistency},
            {"laplacian", s.weights.laplacian},
            {"rgb", s.weights.rgb},
            {"normal", s.weights.normal},
            {"hole", s.weights.hole}}},
          {"iterations", s.iterations},
          {"vertex_lr", s.vertex_lr},
          {"shader_lr", s.shader_lr},
          {"tau", s.tau},
          {"anneal_tau", s.anneal_tau},
          {"views_per_iteration", s.views_per_iteration},
          {"rgb_pixels_per_view", s.rgb_pixels_per_view},
          {"loss_window", s.loss_window}};
}

}  // namespace

DeformConfig deform_config_from_json(const json& j) {
  DeformConfig c = DeformConfig::defaults();
  Reader r(j, "deform config");
  if (const json* s = r.child("coarse")) read_stage(*s, "deform config.coarse", c.coarse);
  if (const json* s = r.child("fine")) read_stage(*s, "deform config.fine", c.fine);
  r.get("seed", c.seed);
  std::string lap = c.laplacian == LaplacianWeighting::Uniform ? "uniform" : "cotangent";
  r.get("laplacian_weights", lap);
  if (lap == "uniform") {
    c.laplacian = LaplacianWeighting::Uniform;
  } else if (lap == "cotangent") {
    c.laplacian = LaplacianWeighting::Cotangent;
  } else {
    throw ValidationError("deform config: laplacian_weights must be 'uniform' or 'cotangent'");
  }
  r.get("band_px", c.band_px);
  r.get("shader_hidden", c.shader_hidden);
  r.get("shader_layers", c.shader_layers);
  r.get("shader_octaves", c.shader_octaves);
  c.validate();
  return c;
}

json to_json(const DeformConfig& c) {
  return {{"coarse", stage_json(c.coarse)},
          {"fine", stage_json(c.fine)},
          {"seed", c.seed},
          {"laplacian_weights", c.laplacian == LaplacianWeighting::Uniform ? "uniform" : "cotangent"},
          {"band_px", c.band_px},
          {"shader_hidden", c.shader_hidden},
          {"shader_layers", c.shader_layers},
          {"shader_octaves", c.shader_octaves}};
}

ShellEnergyConfig shell_config_from_json(const json& j) {
  ShellEnergyConfig c;
  Reader r(j, "smooth config");
  r.get("bending_stiffness", c.bending_stiffness);
  r.get("youngs_modulus", c.youngs_modulus);
  r.get("poisson_ratio", c.poisson_ratio);
  r.get("tolerance", c.tolerance);
  r.get("max_iterations", c.max_iterations);
  r.get("history", c.history);
  c.validate();
  return c;
}

json to_json(const ShellEnergyConfig& c) {
  return {{"bending_stiffness", c.bending_stiffness}, {"youngs_modulus", c.youngs_modulus},
          {"poisson_ratio", c.poisson_ratio},         {"tolerance", c.tolerance},
          {"max_iterations", c.max_iterations},       {"history", c.history}};
}

PbdConfig pbd_config_from_json(const json& j) {
  PbdConfig c;
  Reader r(j, "drape config");
  r.get("iterations", c.iterations);
  r.get("substeps", c.substeps);
  r.get("stretch_stiffness", c.stretch_stiffness);
  r.get("bending_stiffness", c.bending_stiffness);
  r.get("collision_offset", c.collision_offset);
  r.get("tolerance", c.tolerance);
  c.validate();
  return c;
}

json to_json(const PbdConfig& c) {
  return {{"iterations", c.iterations},
          {"substeps", c.substeps},
          {"stretch_stiffness", c.stretch_stiffness},
          {"bending_stiffness", c.bending_stiffness},
          {"collision_offset", c.collision_offset},
          {"tolerance", c.tolerance}};
}

TextureConfig texture_config_from_json(const json& j) {
  TextureConfig c;
  Reader r(j, "texture config");
  if (const json* f = r.child("fit")) {
    Reader rf(*f, "texture config.fit");
    rf.get("epochs", c.fit.epochs);
    rf.get("batch_size", c.fit.batch_size);
    rf.get("grid_lr", c.fit.grid_lr);
    rf.get("head_lr", c.fit.head_lr);
    rf.get("seed", c.fit.seed);
    rf.get("domain_margin", c.fit.domain_margin);
    rf.get("head_hidden", c.fit.head_hidden);
    rf.get("head_layers", c.fit.head_layers);
    if (const json* g = rf.child("grid")) {
      Reader rg(*g, "texture config.fit.grid");
      rg.get("levels", c.fit.grid.levels);
      rg.get("features", c.fit.grid.features);
      rg.get("base_resolution", c.fit.grid.base_resolution);
      rg.get("max_resolution", c.fit.grid.max_resolution);
      rg.get("log2_table_size", c.fit.grid.log2_table_size);
    }
  }
  if (const json* b = r.child("bake")) {
    Reader rb(*b, "texture config.bake");
    rb.get("resolution", c.bake.resolution);
    rb.get("dilation", c.bake.dilation);
    rb.get("background", c.bake.background);
    rb.get("retries", c.bake.retries);
  }
  if (c.fit.epochs < 0 || c.fit.batch_size == 0) throw ValidationError("texture config: epochs >= 0 and batch_size > 0 required");
  if (c.bake.resolution < 64) throw ValidationError("texture config: bake resolution must be at least 64");
  return c;
}

json to_json(const TextureConfig& c) {
  const auto& g = c.fit.grid;
  return {{"fit",
           {{"epochs", c.fit.epochs},
            {"batch_size", c.fit.batch_size},
            {"grid_lr", c.fit.grid_lr},
            {"head_lr", c.fit.head_lr},
            {"seed", c.fit.seed},
            {"domain_margin", c.fit.domain_margin},
            {"head_hidden", c.fit.head_hidden},
            {"head_layers", c.fit.head_layers},
            {"grid",
             {{"levels", g.levels},
              {"features", g.features},
              {"base_resolution", g.base_resolution},
              {"max_resolution", g.max_resolution},
              {"log2_table_size", g.log2_table_size}}}}},
          {"bake",
           {{"resolution", c.bake.resolution},
            {"dilation", c.bake.dilation},
            {"background", vec_json(c.bake.background)},
            {"retries", c.bake.retries}}}};
}

SplatOptions splat_options_from_json(const json& j) {
  SplatOptions c;
  Reader r(j, "splat options");
  r.get("background", c.background);
  r.get("low_pass", c.low_pass);
  r.get("cutoff_sigma", c.cutoff_sigma);
  r.get("coverage_cutoff", c.coverage_cutoff);
  r.get("sh_degree", c.sh_degree);
  r.get("tile_size", c.tile_size);
  if (c.sh_degree < 0 || c.sh_degree > 3) throw ValidationError("splat options: sh_degree must lie in [0, 3]");
  if (c.tile_size < 1) throw ValidationError("splat options: tile_size must be positive");
  return c;
}

json to_json(const SplatOptions& c) {
  return {{"background", vec_json(c.background)}, {"low_pass", c.low_pass},       {"cutoff_sigma", c.cutoff_sigma},
          {"coverage_cutoff", c.coverage_cutoff}, {"sh_degree", c.sh_degree}, {"tile_size", c.tile_size}};
}

json read_json_file(const std::filesystem::path& path) {
  if (path.empty()) return json::object();
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw ValidationError(path.string() + ": " + e.what());
  }
}

void write_json_file(const json& j, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

}  // namespace gr
