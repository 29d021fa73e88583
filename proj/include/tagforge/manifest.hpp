#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>

#include "json.hpp"

namespace tagforge {

// One manifest per command run. Contents are fully determined by the inputs
// and the configuration, so identical runs produce byte-identical manifests;
// wall-clock timing is reported on stdout instead.
struct RunManifest {
  std::string command;
  nlohmann::json config = nlohmann::json::object();
  uint64_t seed = 0;
  std::map<std::string, std::string> inputs;   // path -> content hash
  std::map<std::string, std::string> outputs;  // path -> content hash
};

void add_input(RunManifest& manifest, const std::filesystem::path& path);
void add_output(RunManifest& manifest, const std::filesystem::path& path);
void write_manifest(const std::filesystem::path& path, const RunManifest& manifest);

}  // namespace tagforge
