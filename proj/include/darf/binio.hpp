#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <string>
#include <type_traits>

#include "darf/error.hpp"

namespace darf::io {

template <class T>
    requires std::is_arithmetic_v<T>
void put(std::ostream& os, T v) {
    unsigned char b[sizeof(T)];
    std::memcpy(b, &v, sizeof(T));
    if constexpr (std::endian::native == std::endian::big) {
        for (std::size_t i = 0; i < sizeof(T) / 2; ++i) std::swap(b[i], b[sizeof(T) - 1 - i]);
    }
    os.write(reinterpret_cast<const char*>(b), sizeof(T));
}

template <class T>
    requires std::is_arithmetic_v<T>
T get(std::istream& is) {
    unsigned char b[sizeof(T)];
    if (!is.read(reinterpret_cast<char*>(b), sizeof(T))) throw IoError("unexpected end of stream");
    if constexpr (std::endian::native == std::endian::big) {
        for (std::size_t i = 0; i < sizeof(T) / 2; ++i) std::swap(b[i], b[sizeof(T) - 1 - i]);
    }
    T v;
    std::memcpy(&v, b, sizeof(T));
    return v;
}

inline void put_floats(std::ostream& os, const float* v, std::size_t n) {
    if constexpr (std::endian::native == std::endian::little) {
        os.write(reinterpret_cast<const char*>(v), static_cast<std::streamsize>(n * sizeof(float)));
    } else {
        for (std::size_t i = 0; i < n; ++i) put<float>(os, v[i]);
    }
}

inline void get_floats(std::istream& is, float* v, std::size_t n) {
    if constexpr (std::endian::native == std::endian::little) {
        if (!is.read(reinterpret_cast<char*>(v), static_cast<std::streamsize>(n * sizeof(float))))
            throw IoError("unexpected end of stream");
    } else {
        for (std::size_t i = 0; i < n; ++i) v[i] = get<float>(is);
    }
}

inline void put_magic(std::ostream& os, const char (&m)[5]) { os.write(m, 4); }

inline void expect_magic(std::istream& is, const char (&m)[5], const std::string& what) {
    char b[4];
    if (!is.read(b, 4) || std::memcmp(b, m, 4) != 0) throw IoError(what + ": bad magic, expected " + std::string(m, 4));
}

}  // namespace darf::io
