#include "simeval/manifest.hpp"

#include <fstream>
#include <sstream>

#include <fmt/format.h>
#include <json.hpp>
#include <openssl/evp.h>

#include "simeval/common.hpp"

namespace simeval::cli {

std::string sha256_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw DataError(fmt::format("cannot open file for digest: {}",
                                path.string()));
  }
  std::ostringstream buf;
  buf << in.rdbuf();
  const std::string content = buf.str();

  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int digest_len = 0;
  EVP_MD_CTX* ctx = EVP_MD_CTX_new();
  if (ctx == nullptr ||
      EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr) != 1 ||
      EVP_DigestUpdate(ctx, content.data(), content.size()) != 1 ||
      EVP_DigestFinal_ex(ctx, digest, &digest_len) != 1) {
    EVP_MD_CTX_free(ctx);
    throw ComputeError("sha256 digest failed");
  }
  EVP_MD_CTX_free(ctx);

  std::string hex;
  hex.reserve(2 * digest_len);
  for (unsigned int i = 0; i < digest_len; ++i) {
    hex += fmt::format("{:02x}", digest[i]);
  }
  return hex;
}

std::filesystem::path write_manifest(
    const std::filesystem::path& out_dir, const std::string& command,
    std::uint64_t master_seed, const std::filesystem::path& config_path,
    const std::vector<ManifestArtifact>& artifacts) {
  nlohmann::ordered_json j;
  j["tool"] = nlohmann::ordered_json{
      {"name", std::string(kToolName)}, {"version", std::string(kToolVersion)}};
  j["command"] = command;
  j["master_seed"] = master_seed;
  j["config"] = nlohmann::ordered_json{
      {"path", config_path.string()}, {"sha256", sha256_file(config_path)}};
  auto list = nlohmann::ordered_json::array();
  for (const auto& artifact : artifacts) {
    list.push_back(nlohmann::ordered_json{
        {"kind", artifact.kind},
        {"path", artifact.path.filename().string()},
        {"sha256", sha256_file(artifact.path)}});
  }
  j["artifacts"] = std::move(list);

  const auto manifest_path = out_dir / "manifest.json";
  std::ofstream file(manifest_path, std::ios::binary | std::ios::trunc);
  if (!file) {
    throw DataError(fmt::format("cannot write manifest: {}",
                                manifest_path.string()));
  }
  file << j.dump(2) << '\n';
  return manifest_path;
}

}  // namespace simeval::cli
