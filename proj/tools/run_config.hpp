#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "ssgan/pipeline.hpp"
#include "ssgan/simulate.hpp"

namespace ssgan::cli {

// Everything a subcommand may read. Populated from defaults, then a config
// file of `key = value` lines, then command-line overrides.
struct RunConfig {
  std::string dataset;
  std::string out;
  std::optional<std::uint64_t> seed;
  int threads = 1;
  bool tolerance_mode = false;

  SyntheticConfig sim;
  int sim_lvc_voxels = 500;
  int sim_hvc_voxels = 400;
  float sim_noise_scale = 1.0f;

  PipelineConfig pipeline;
  std::vector<std::string> ablate_rois{"V1", "V2", "V3", "LVC", "HVC", "VC"};
  int ablate_reserved = 40;

  // Simulator config with voxel counts, noise scale and seed applied.
  SyntheticConfig synthetic() const;
  // Pipeline config with the seed applied.
  PipelineConfig resolved_pipeline() const;
};

// Sets one key; throws ConfigError for unknown keys or unparsable values.
void set_key(RunConfig& config, std::string_view key, std::string_view value);
// Every key with its current value, in a fixed order.
std::vector<std::pair<std::string, std::string>> snapshot(const RunConfig& config);
std::vector<std::string> known_keys();

// Applies `key = value` lines; '#' starts a comment. Errors name the source
// and line number and quote the offending line.
void apply_config_text(RunConfig& config, std::string_view text, const std::string& source);
void apply_config_file(RunConfig& config, const std::string& path);
// "key=value" as given on the command line.
void apply_override(RunConfig& config, std::string_view assignment);

}  // namespace ssgan::cli
