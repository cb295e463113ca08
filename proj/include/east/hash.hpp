#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>

namespace east {

std::string sha256_hex(std::string_view bytes);
std::string sha256_hex(std::span<const unsigned char> bytes);
std::string sha256_file(const std::filesystem::path & path);

// FNV-1a, used for cheap seeded hashing of transcript text
constexpr uint64_t fnv1a64(std::string_view bytes, uint64_t basis = 0xcbf29ce484222325ull) noexcept {
    uint64_t h = basis;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ull;
    }
    return h;
}

} // namespace east
