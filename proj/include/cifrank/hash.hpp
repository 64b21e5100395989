#pragma once

#include <cstdint>
#include <cstdio>
#include <string>
#include <string_view>

namespace cifrank {

// FNV-1a, 64 bit. Used for provenance fingerprints, not for security.
inline std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t hash = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    hash ^= c;
    hash *= 0x100000001b3ULL;
  }
  return hash;
}

inline std::string hex_digest(std::string_view bytes) {
  char buffer[17];
  std::snprintf(buffer, sizeof(buffer), "%016llx",
                static_cast<unsigned long long>(fnv1a64(bytes)));
  return buffer;
}

}  // namespace cifrank
