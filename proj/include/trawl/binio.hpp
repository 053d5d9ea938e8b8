#pragma once

// Little-endian primitives for the versioned binary index files.

#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>

#include "trawl/errors.hpp"

namespace trawl::binio {

inline void write_u32(std::ostream& out, uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                          static_cast<unsigned char>(v >> 16),
                          static_cast<unsigned char>(v >> 24)};
    out.write(reinterpret_cast<const char*>(b), 4);
}

inline uint32_t read_u32(std::istream& in) {
    unsigned char b[4];
    if (!in.read(reinterpret_cast<char*>(b), 4)) throw DataError("index file: truncated");
    return static_cast<uint32_t>(b[0]) | static_cast<uint32_t>(b[1]) << 8 |
           static_cast<uint32_t>(b[2]) << 16 | static_cast<uint32_t>(b[3]) << 24;
}

inline void write_u64(std::ostream& out, uint64_t v) {
    write_u32(out, static_cast<uint32_t>(v));
    write_u32(out, static_cast<uint32_t>(v >> 32));
}

inline uint64_t read_u64(std::istream& in) {
    uint64_t lo = read_u32(in);
    uint64_t hi = read_u32(in);
    return lo | hi << 32;
}

inline void write_f64(std::ostream& out, double v) {
    uint64_t bits;
    std::memcpy(&bits, &v, 8);
    write_u64(out, bits);
}

inline double read_f64(std::istream& in) {
    uint64_t bits = read_u64(in);
    double v;
    std::memcpy(&v, &bits, 8);
    return v;
}

inline void write_f32(std::ostream& out, float v) {
    uint32_t bits;
    std::memcpy(&bits, &v, 4);
    write_u32(out, bits);
}

inline float read_f32(std::istream& in) {
    uint32_t bits = read_u32(in);
    float v;
    std::memcpy(&v, &bits, 4);
    return v;
}

inline void write_string(std::ostream& out, const std::string& s) {
    write_u32(out, static_cast<uint32_t>(s.size()));
    out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

inline std::string read_string(std::istream& in) {
    uint32_t len = read_u32(in);
    std::string s(len, '\0');
    if (len && !in.read(s.data(), len)) throw DataError("index file: truncated");
    return s;
}

inline void write_magic(std::ostream& out, const char (&magic)[9], uint32_t version) {
    out.write(magic, 8);
    write_u32(out, version);
}

inline uint32_t read_magic(std::istream& in, const char (&magic)[9]) {
    char got[8];
    if (!in.read(got, 8) || std::memcmp(got, magic, 8) != 0)
        throw DataError(std::string("index file: bad magic, expected ") + magic);
    return read_u32(in);
}

} // namespace trawl::binio
