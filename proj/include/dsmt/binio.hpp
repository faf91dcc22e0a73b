#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <string>

#include "dsmt/common.hpp"

namespace dsmt {

// Little-endian primitives for the cache and checkpoint formats.

inline std::uint64_t to_le64(std::uint64_t v) {
    if constexpr (std::endian::native == std::endian::little) return v;
    std::uint64_t r = 0;
    for (int i = 0; i < 8; ++i) r |= ((v >> (8 * i)) & 0xffULL) << (8 * (7 - i));
    return r;
}

inline std::uint32_t to_le32(std::uint32_t v) {
    if constexpr (std::endian::native == std::endian::little) return v;
    return ((v & 0xffu) << 24) | ((v & 0xff00u) << 8) | ((v >> 8) & 0xff00u) | (v >> 24);
}

inline void write_u32(std::ostream& os, std::uint32_t v) {
    const std::uint32_t le = to_le32(v);
    os.write(reinterpret_cast<const char*>(&le), 4);
}

inline void write_u64(std::ostream& os, std::uint64_t v) {
    const std::uint64_t le = to_le64(v);
    os.write(reinterpret_cast<const char*>(&le), 8);
}

inline void write_f64(std::ostream& os, double v) {
    write_u64(os, std::bit_cast<std::uint64_t>(v));
}

inline void write_str(std::ostream& os, const std::string& s) {
    write_u32(os, static_cast<std::uint32_t>(s.size()));
    os.write(s.data(), static_cast<std::streamsize>(s.size()));
}

inline std::uint32_t read_u32(std::istream& is) {
    std::uint32_t v = 0;
    is.read(reinterpret_cast<char*>(&v), 4);
    if (!is) throw DataError("binary read: unexpected end of stream");
    return to_le32(v);
}

inline std::uint64_t read_u64(std::istream& is) {
    std::uint64_t v = 0;
    is.read(reinterpret_cast<char*>(&v), 8);
    if (!is) throw DataError("binary read: unexpected end of stream");
    return to_le64(v);
}

inline double read_f64(std::istream& is) { return std::bit_cast<double>(read_u64(is)); }

inline std::string read_str(std::istream& is) {
    const std::uint32_t n = read_u32(is);
    std::string s(n, '\0');
    is.read(s.data(), n);
    if (!is) throw DataError("binary read: unexpected end of stream");
    return s;
}

}  // namespace dsmt
