#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "nlr/exporter.hpp"
#include "nlr/lumigraph.hpp"
#include "nlr/trainer.hpp"

namespace nlr {

// Everything a CLI run can be configured with. Presets: "desk" (default,
// TrainConfig::desk()) and "full" (the full-scale TrainConfig defaults).
struct RunConfig {
  std::string preset = "desk";
  TrainConfig train = TrainConfig::desk();
  MarchingCubesOptions mc;
  int texture_level = 1;
  LumigraphOptions lumigraph;
  int threads = 0;  // 0 = hardware concurrency

  // Sets one key from its textual value. InvalidArgument names unknown keys
  // and malformed values.
  void set(const std::string& key, const std::string& value);
  // Every key with its current value, in registry order.
  nlohmann::ordered_json to_json() const;
  static std::vector<std::string> keys();
  static RunConfig from_preset(const std::string& preset);
};

// Layered resolution: preset (from any layer's "preset" key, last wins), then
// the file, then "key=value" overrides in order. Files are JSON objects or
// key=value lines with '#' comments. ParseError / MissingFile for bad files.
RunConfig resolve_config(const std::filesystem::path* file, const std::vector<std::string>& overrides);

// Reads key/value pairs of a config file without applying them.
std::vector<std::pair<std::string, std::string>> read_config_file(const std::filesystem::path& path);

// manifest.json: resolved config, command line, git hash, build info and
// any subcommand-specific settings in `extra`.
void write_manifest(const std::filesystem::path& dir, const RunConfig& cfg, const std::vector<std::string>& argv,
                    const nlohmann::ordered_json& extra = nlohmann::ordered_json::object());

std::string build_git_hash();

}  // namespace nlr
