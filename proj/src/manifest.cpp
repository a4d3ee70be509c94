#include "cape/manifest.hpp"

#include <openssl/evp.h>

#include <chrono>
#include <ctime>
#include <fstream>
#include <json.hpp>
#include <memory>

#include "cape/errors.hpp"
#include "cape/storage.hpp"

namespace cape {

std::string sha256_hex(const std::vector<std::uint8_t>& bytes) {
  std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(), EVP_MD_CTX_free);
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (!ctx || EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr) != 1 ||
      EVP_DigestUpdate(ctx.get(), bytes.data(), bytes.size()) != 1 ||
      EVP_DigestFinal_ex(ctx.get(), digest, &len) != 1) {
    throw std::runtime_error("sha256 computation failed");
  }
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out;
  out.reserve(2 * len);
  for (unsigned int i = 0; i < len; ++i) {
    out += kHex[digest[i] >> 4];
    out += kHex[digest[i] & 0xf];
  }
  return out;
}

std::string sha256_file(const std::filesystem::path& path) { return sha256_hex(read_file(path)); }

std::string utc_timestamp() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

void write_manifest(const std::filesystem::path& dir, const RunManifest& manifest,
                    const std::string& name) {
  nlohmann::ordered_json j;
  j["tool"] = kToolName;
  j["version"] = kToolVersion;
  j["command"] = manifest.command;
  j["seed"] = manifest.seed;
  j["started"] = manifest.started;
  j["config"] = manifest.config;
  auto& outputs = j["outputs"] = nlohmann::ordered_json::array();
  for (const auto& output : manifest.outputs) {
    const auto path = dir / output;
    outputs.push_back({{"path", output},
                       {"bytes", std::filesystem::file_size(path)},
                       {"sha256", sha256_file(path)}});
  }
  write_text(dir / name, j.dump(2) + "\n");
}

std::vector<std::string> verify_manifest(const std::filesystem::path& dir, const std::string& name) {
  std::ifstream in(dir / name);
  if (!in) throw FormatError("missing " + (dir / name).string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("malformed manifest: ") + e.what());
  }
  std::vector<std::string> mismatched;
  for (const auto& entry : j.at("outputs")) {
    const auto output = entry.at("path").get<std::string>();
    const auto path = dir / output;
    if (!std::filesystem::exists(path) || sha256_file(path) != entry.at("sha256").get<std::string>()) {
      mismatched.push_back(output);
    }
  }
  return mismatched;
}

}  // namespace cape
