#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace simeval::cli {

std::string sha256_file(const std::filesystem::path& path);

struct ManifestArtifact {
  std::string kind;
  std::filesystem::path path;
};

/// Writes <out_dir>/manifest.json: tool version, command, master seed, config
/// digest and per-artifact SHA-256 digests. No timestamps; manifests are
/// byte-identical across reruns.
std::filesystem::path write_manifest(
    const std::filesystem::path& out_dir, const std::string& command,
    std::uint64_t master_seed, const std::filesystem::path& config_path,
    const std::vector<ManifestArtifact>& artifacts);

}  // namespace simeval::cli
