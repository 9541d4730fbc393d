#pragma once

#include <filesystem>

#include <json.hpp>

#include "gr/deformer.hpp"
#include "gr/drape.hpp"
#include "gr/gaussians.hpp"
#include "gr/smoother.hpp"
#include "gr/texture.hpp"

namespace gr {

/// Settings of the `texture` command: field fit plus bake.
struct TextureConfig {
  NetfFitOptions fit;
  BakeOptions bake;
};

/// Each reader starts from the defaults and overrides only the keys present.
/// Unknown keys and wrongly typed values raise ValidationError naming the key.
DeformConfig deform_config_from_json(const nlohmann::json& j);
nlohmann::json to_json(const DeformConfig& c);

ShellEnergyConfig shell_config_from_json(const nlohmann::json& j);
nlohmann::json to_json(const ShellEnergyConfig& c);

PbdConfig pbd_config_from_json(const nlohmann::json& j);
nlohmann::json to_json(const PbdConfig& c);

TextureConfig texture_config_from_json(const nlohmann::json& j);
nlohmann::json to_json(const TextureConfig& c);

SplatOptions splat_options_from_json(const nlohmann::json& j);
nlohmann::json to_json(const SplatOptions& c);

/// Empty path yields an empty object.
nlohmann::json read_json_file(const std::filesystem::path& path);
void write_json_file(const nlohmann::json& j, const std::filesystem::path& path);

}  // namespace gr
