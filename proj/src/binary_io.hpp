#pragma once

// Little-endian scalar encoding shared by the vector and sidecar formats.

#include "east/error.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <string>

namespace east::detail {

static_assert(std::endian::native == std::endian::little || std::endian::native == std::endian::big);

template <typename T>
T to_le(T v) {
    if constexpr (std::endian::native == std::endian::big) {
        auto bytes = std::bit_cast<std::array<unsigned char, sizeof(T)>>(v);
        std::reverse(bytes.begin(), bytes.end());
        return std::bit_cast<T>(bytes);
    }
    return v;
}

template <typename T>
void put(std::ostream & out, T v) {
    v = to_le(v);
    char buf[sizeof(T)];
    std::memcpy(buf, &v, sizeof(T));
    out.write(buf, sizeof(T));
}

template <typename T>
T get(std::istream & in, const char * what) {
    char buf[sizeof(T)];
    in.read(buf, sizeof(T));
    if (in.gcount() != static_cast<std::streamsize>(sizeof(T))) {
        throw error(errc::truncated, std::string("truncated file while reading ") + what);
    }
    T v;
    std::memcpy(&v, buf, sizeof(T));
    return to_le(v);
}

inline void expect_magic(std::istream & in, const char (&magic)[5]) {
    char buf[4] = {};
    in.read(buf, 4);
    if (in.gcount() != 4) {
        throw error(errc::truncated, "truncated file while reading magic");
    }
    if (std::memcmp(buf, magic, 4) != 0) {
        throw error(errc::bad_magic, std::string("bad magic, expected ") + magic);
    }
}

} // namespace east::detail
