#pragma once

#include <cstdint>
#include <cstdio>
#include <cstring>
#include <string>

namespace setgen {

// FNV-1a, used for content fingerprints (PCA bases, parameter freezes) and
// for deriving named rng streams. Not cryptographic.
inline uint64_t fnv1a64(const void* data, size_t n, uint64_t h = 0xcbf29ce484222325ull) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (size_t i = 0; i < n; ++i) {
        h ^= p[i];
        h *= 0x100000001b3ull;
    }
    return h;
}

inline uint64_t fnv1a64(const std::string& s, uint64_t h = 0xcbf29ce484222325ull) {
    return fnv1a64(s.data(), s.size(), h);
}

inline uint64_t hash_combine(uint64_t a, uint64_t b) {
    return fnv1a64(&b, sizeof(b), a ^ 0x9e3779b97f4a7c15ull);
}

inline std::string hex64(uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
    return std::string(buf);
}

// Fingerprint of a double buffer via its exact bit pattern.
inline uint64_t fingerprint_doubles(const double* p, size_t n) {
    return fnv1a64(p, n * sizeof(double));
}

}  // namespace setgen
