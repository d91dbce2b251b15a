#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace lfi {

std::string sha256_hex(std::string_view bytes);
std::string file_sha256(const std::filesystem::path& path);

std::string read_file(const std::filesystem::path& path);

/// Write to a sibling temporary file and rename over the target.
void write_file_atomic(const std::filesystem::path& path, std::string_view contents);

/// 17 significant digits, enough for strtod to recover the exact double.
std::string format_double(double v);

/// Provenance record stored as <output>.manifest.json next to every artifact.
struct RunManifest {
  std::string command;
  std::vector<std::string> arguments;
  std::string config_hash;
  std::map<std::string, std::string> input_hashes;  // path -> sha256
  std::uint64_t seed = 0;
  std::string tool_version;
  std::map<std::string, std::string> outputs;  // path -> sha256
};

inline constexpr std::string_view kToolVersion = "0.3.0";

std::filesystem::path manifest_path(const std::filesystem::path& artifact);
void write_manifest(const RunManifest& manifest, const std::filesystem::path& artifact);

/// Compare an input file against the manifest written alongside it. Returns a
/// human-readable warning, or an empty string when the hashes agree or no
/// manifest exists.
std::string check_against_manifest(const std::filesystem::path& input);

}  // namespace lfi
