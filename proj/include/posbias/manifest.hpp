#pragma once

#include <openssl/evp.h>

#include <cstdint>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "posbias/version.hpp"

namespace posbias::cli {

inline std::string sha256_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open for digest: " + path);
  EVP_MD_CTX* ctx = EVP_MD_CTX_new();
  if (!ctx || EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr) != 1) {
    EVP_MD_CTX_free(ctx);
    throw std::runtime_error("sha256 init failed");
  }
  char buf[1 << 16];
  while (in) {
    in.read(buf, sizeof(buf));
    const std::streamsize got = in.gcount();
    if (got > 0 && EVP_DigestUpdate(ctx, buf, static_cast<std::size_t>(got)) != 1) {
      EVP_MD_CTX_free(ctx);
      throw std::runtime_error("sha256 update failed");
    }
  }
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  const int ok = EVP_DigestFinal_ex(ctx, digest, &len);
  EVP_MD_CTX_free(ctx);
  if (ok != 1) throw std::runtime_error("sha256 final failed");
  std::string hex;
  hex.reserve(2 * len);
  for (unsigned int i = 0; i < len; ++i) {
    char b[3];
    std::snprintf(b, sizeof(b), "%02x", digest[i]);
    hex += b;
  }
  return hex;
}

/// Everything needed to reproduce a run: resolved configuration, content
/// digests of the input files, tool version, and the seed list. Written to
/// the output directory before any run output.
struct RunManifest {
  std::string command;
  nlohmann::json config;
  std::vector<std::pair<std::string, std::string>> inputs;  // path, sha256
  std::vector<std::uint64_t> seeds;

  void add_input(const std::string& path) {
    inputs.emplace_back(path, sha256_file(path));
  }

  nlohmann::json to_json() const {
    nlohmann::json j;
    j["tool"] = "posbias";
    j["version"] = kVersion;
    j["command"] = command;
    j["config"] = config;
    nlohmann::json ins = nlohmann::json::array();
    for (const auto& [path, digest] : inputs)
      ins.push_back({{"path", path}, {"sha256", digest}});
    j["inputs"] = std::move(ins);
    j["seeds"] = seeds;
    char stamp[32];
    const std::time_t now = std::time(nullptr);
    std::tm tm_utc{};
    gmtime_r(&now, &tm_utc);
    std::strftime(stamp, sizeof(stamp), "%Y-%m-%dT%H:%M:%SZ", &tm_utc);
    j["created"] = stamp;
    return j;
  }

  void write(const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write manifest: " + path);
    out << to_json().dump(2) << '\n';
  }
};

}  // namespace posbias::cli
