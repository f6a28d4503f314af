#pragma once

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <openssl/evp.h>

#include "error.hpp"
#include "io.hpp"

namespace blinksim {

inline std::string sha256_hex(std::span<const std::uint8_t> bytes) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr) != 1)
    throw Error("sha256 computation failed");
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out;
  out.reserve(2 * len);
  for (unsigned int i = 0; i < len; ++i) {
    out.push_back(kHex[digest[i] >> 4]);
    out.push_back(kHex[digest[i] & 0xF]);
  }
  return out;
}

/// "sha256  relative/path" lines for every regular file under root, sorted by path,
/// in sha256sum format. A top-level manifest.sha256 is skipped.
inline std::string sha256_manifest(const std::filesystem::path& root) {
  namespace fs = std::filesystem;
  std::vector<std::string> files;
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (!e.is_regular_file()) continue;
    const auto rel = fs::relative(e.path(), root).generic_string();
    if (rel != "manifest.sha256") files.push_back(rel);
  }
  std::sort(files.begin(), files.end());
  std::string out;
  for (const auto& f : files) out += sha256_hex(read_file_bytes(root / f)) + "  " + f + "\n";
  return out;
}

}  // namespace blinksim
