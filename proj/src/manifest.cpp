#include "tagforge/manifest.hpp"

#include <fstream>
#include <stdexcept>

#include "tagforge/hash.hpp"

namespace tagforge {

namespace {

// Paths are recorded by file name so runs in different directories compare
// byte-identical.
std::string manifest_key(const std::filesystem::path& path) { return path.filename().string(); }

}  // namespace

void add_input(RunManifest& manifest, const std::filesystem::path& path) {
  manifest.inputs[manifest_key(path)] = hash_hex(fnv1a64_file(path));
}

void add_output(RunManifest& manifest, const std::filesystem::path& path) {
  manifest.outputs[manifest_key(path)] = hash_hex(fnv1a64_file(path));
}

void write_manifest(const std::filesystem::path& path, const RunManifest& manifest) {
  nlohmann::json j{{"command", manifest.command},
                   {"config", manifest.config},
                   {"seed", manifest.seed},
                   {"inputs", manifest.inputs},
                   {"outputs", manifest.outputs}};
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write manifest " + path.string());
  out << j.dump(2) << '\n';
}

}  // namespace tagforge
