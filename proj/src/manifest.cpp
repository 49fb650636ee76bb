#include "circfp/manifest.hpp"

#include <openssl/evp.h>

#include <array>
#include <fstream>
#include <memory>
#include <stdexcept>

#include <json.hpp>

namespace circfp {

namespace {

struct Sha256 {
  std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx{EVP_MD_CTX_new(), &EVP_MD_CTX_free};

  Sha256() {
    if (!ctx || EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr) != 1)
      throw std::runtime_error("sha256 init failed");
  }
  void update(const void* data, std::size_t n) {
    if (EVP_DigestUpdate(ctx.get(), data, n) != 1) throw std::runtime_error("sha256 update failed");
  }
  std::string hex() {
    std::array<unsigned char, EVP_MAX_MD_SIZE> md{};
    unsigned int len = 0;
    if (EVP_DigestFinal_ex(ctx.get(), md.data(), &len) != 1)
      throw std::runtime_error("sha256 final failed");
    static constexpr char kHex[] = "0123456789abcdef";
    std::string out;
    for (unsigned i = 0; i < len; ++i) {
      out.push_back(kHex[md[i] >> 4]);
      out.push_back(kHex[md[i] & 15]);
    }
    return out;
  }
};

}  // namespace

std::string sha256_hex(std::string_view data) {
  Sha256 h;
  h.update(data.data(), data.size());
  return h.hex();
}

std::string file_sha256(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error(path.string() + ": cannot open for hashing");
  Sha256 h;
  std::array<char, 1 << 16> buf{};
  while (is) {
    is.read(buf.data(), buf.size());
    h.update(buf.data(), static_cast<std::size_t>(is.gcount()));
  }
  return h.hex();
}

std::string RunManifest::hash() const {
  return sha256_hex(std::to_string(seed) + "|" + config_hash + "|" + version).substr(0, 16);
}

RunManifest make_manifest(std::uint64_t seed, const std::string& canonical_config) {
  RunManifest m;
  m.seed = seed;
  m.config_hash = sha256_hex(canonical_config);
  return m;
}

void write_manifest(const std::filesystem::path& dir, RunManifest& manifest,
                    const std::string& canonical_config, const std::vector<std::string>& names) {
  for (const auto& n : names) manifest.files[n] = file_sha256(dir / n);
  nlohmann::ordered_json j;
  j["manifest_hash"] = manifest.hash();
  j["seed"] = manifest.seed;
  j["config_hash"] = manifest.config_hash;
  j["version"] = manifest.version;
  j["files"] = manifest.files;
  j["config"] = nlohmann::ordered_json::parse(canonical_config);
  std::ofstream os(dir / kManifestFile, std::ios::binary);
  if (!os) throw std::runtime_error((dir / kManifestFile).string() + ": cannot open for writing");
  os << j.dump(2) << '\n';
}

}  // namespace circfp
