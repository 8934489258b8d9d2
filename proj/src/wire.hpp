#pragma once

// Little-endian stream primitives shared by the model containers.

#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <string>

#include "odxu/errors.hpp"

namespace odxu::wire {

inline void put_u8(std::ostream& out, std::uint8_t v) {
    out.put(static_cast<char>(v));
}

inline void put_u32(std::ostream& out, std::uint32_t v) {
    char b[4];
    for (int i = 0; i < 4; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xFF);
    out.write(b, 4);
}

inline void put_i32(std::ostream& out, std::int32_t v) {
    put_u32(out, static_cast<std::uint32_t>(v));
}

inline void put_u64(std::ostream& out, std::uint64_t v) {
    char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xFF);
    out.write(b, 8);
}

inline void put_f64(std::ostream& out, double v) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, 8);
    put_u64(out, bits);
}

inline std::uint8_t get_u8(std::istream& in) {
    const int c = in.get();
    if (c == EOF) throw TruncationError("model container: unexpected end of stream");
    return static_cast<std::uint8_t>(c);
}

inline std::uint32_t get_u32(std::istream& in) {
    unsigned char b[4];
    in.read(reinterpret_cast<char*>(b), 4);
    if (in.gcount() != 4) throw TruncationError("model container: unexpected end of stream");
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
    return v;
}

inline std::int32_t get_i32(std::istream& in) {
    return static_cast<std::int32_t>(get_u32(in));
}

inline std::uint64_t get_u64(std::istream& in) {
    unsigned char b[8];
    in.read(reinterpret_cast<char*>(b), 8);
    if (in.gcount() != 8) throw TruncationError("model container: unexpected end of stream");
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
    return v;
}

inline double get_f64(std::istream& in) {
    const std::uint64_t bits = get_u64(in);
    double v;
    std::memcpy(&v, &bits, 8);
    return v;
}

inline void put_magic(std::ostream& out, const char (&magic)[8]) {
    out.write(magic, 7);
}

inline void expect_magic(std::istream& in, const char (&magic)[8], const char* what) {
    char got[7];
    in.read(got, 7);
    if (in.gcount() != 7)
        throw FormatError(std::string("model container: file too short for a magic (want ") +
                          what + ")");
    if (std::memcmp(got, magic, 7) != 0)
        throw FormatError(std::string("model container: expected ") + what + " magic '" + magic +
                          "', found '" + std::string(got, 7) + "'");
}

} // namespace odxu::wire
