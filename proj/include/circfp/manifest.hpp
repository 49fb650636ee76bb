#pragma once
/** @file manifest.hpp
 *  @brief Run manifests: seed, config hash, version and output checksums. */

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace circfp {

inline constexpr const char* kArtifactVersion = "circfp 1.0.0";

std::string sha256_hex(std::string_view data);
std::string file_sha256(const std::filesystem::path& path);

struct RunManifest {
  std::uint64_t seed = 0;
  std::string config_hash;
  std::string version = kArtifactVersion;
  std::map<std::string, std::string> files;  ///< file name -> sha256

  /// Short hash of the manifest inputs (seed, config hash, version).
  std::string hash() const;
};

RunManifest make_manifest(std::uint64_t seed, const std::string& canonical_config);

inline constexpr const char* kManifestFile = "manifest.json";

/// Fills checksums for `names` (relative to dir) and writes dir/manifest.json, embedding the
/// canonical configuration.
void write_manifest(const std::filesystem::path& dir, RunManifest& manifest,
                    const std::string& canonical_config, const std::vector<std::string>& names);

}  // namespace circfp
