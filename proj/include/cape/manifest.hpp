#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace cape {

inline constexpr const char* kToolName = "capeseg";
inline constexpr const char* kToolVersion = "0.1.0";
inline constexpr const char* kManifestName = "manifest.json";

std::string sha256_hex(const std::vector<std::uint8_t>& bytes);
std::string sha256_file(const std::filesystem::path& path);

/// Record of one command run. Written after every other output so that the
/// digests describe the final files.
struct RunManifest {
  std::string command;
  std::uint64_t seed = 0;
  std::string started;                       // ISO-8601 UTC
  std::map<std::string, std::string> config; // resolved parameters
  std::vector<std::string> outputs;          // file names relative to the run directory
};

std::string utc_timestamp();

/// Hashes every listed output in `dir` and writes dir/<name>.
void write_manifest(const std::filesystem::path& dir, const RunManifest& manifest,
                    const std::string& name = kManifestName);

/// Recomputes digests and returns the names whose contents no longer match.
std::vector<std::string> verify_manifest(const std::filesystem::path& dir,
                                         const std::string& name = kManifestName);

}  // namespace cape
