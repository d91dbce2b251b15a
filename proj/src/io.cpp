#include "lfi/io.hpp"

#include "lfi/common.hpp"

#include <fmt/format.h>
#include <json.hpp>
#include <openssl/evp.h>

#include <array>
#include <fstream>
#include <memory>
#include <sstream>

namespace lfi {

namespace fs = std::filesystem;

std::string sha256_hex(std::string_view bytes) {
  std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(), &EVP_MD_CTX_free);
  std::array<unsigned char, EVP_MAX_MD_SIZE> digest{};
  unsigned int len = 0;
  if (!ctx || EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr) != 1 ||
      EVP_DigestUpdate(ctx.get(), bytes.data(), bytes.size()) != 1 ||
      EVP_DigestFinal_ex(ctx.get(), digest.data(), &len) != 1)
    throw Error("sha256: digest failed");
  std::string out;
  out.reserve(2 * len);
  for (unsigned int i = 0; i < len; ++i) out += fmt::format("{:02x}", digest[i]);
  return out;
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open '" + path.string() + "' for reading");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string file_sha256(const fs::path& path) { return sha256_hex(read_file(path)); }

void write_file_atomic(const fs::path& path, std::string_view contents) {
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot open '" + tmp.string() + "' for writing");
    out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
    if (!out) throw Error("write to '" + tmp.string() + "' failed");
  }
  fs::rename(tmp, path);
}

std::string format_double(double v) { return fmt::format("{:.17g}", v); }

fs::path manifest_path(const fs::path& artifact) {
  fs::path p = artifact;
  p += ".manifest.json";
  return p;
}

void write_manifest(const RunManifest& m, const fs::path& artifact) {
  nlohmann::ordered_json j;
  j["command"] = m.command;
  j["arguments"] = m.arguments;
  j["config_hash"] = m.config_hash;
  j["input_hashes"] = m.input_hashes;
  j["seed"] = m.seed;
  j["tool_version"] = m.tool_version;
  j["outputs"] = m.outputs;
  write_file_atomic(manifest_path(artifact), j.dump(2) + "\n");
}

std::string check_against_manifest(const fs::path& input) {
  const fs::path mp = manifest_path(input);
  if (!fs::exists(mp)) return {};
  try {
    const auto j = nlohmann::json::parse(read_file(mp));
    const auto& outputs = j.at("outputs");
    const std::string actual = file_sha256(input);
    for (const auto& [path, hash] : outputs.items()) {
      if (fs::path(path).filename() == input.filename()) {
        if (hash.get<std::string>() != actual)
          return fmt::format("warning: '{}' does not match the hash recorded in '{}'",
                             input.string(), mp.string());
        return {};
      }
    }
    return fmt::format("warning: '{}' is not listed in '{}'", input.string(), mp.string());
  } catch (const nlohmann::json::exception& e) {
    return fmt::format("warning: unreadable manifest '{}': {}", mp.string(), e.what());
  }
}

}  // namespace lfi
