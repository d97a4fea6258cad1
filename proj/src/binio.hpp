#pragma once

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <string_view>

#include <Eigen/Core>

#include "errors.hpp"

// Little-endian primitives for the RDPB / RDBS / RDRG cache formats.
namespace riskdiff::binio {

template <typename T>
inline T to_le(T value) {
    if constexpr (std::endian::native == std::endian::little) {
        return value;
    } else {
        std::array<unsigned char, sizeof(T)> bytes;
        std::memcpy(bytes.data(), &value, sizeof(T));
        for (std::size_t i = 0; i < sizeof(T) / 2; ++i) std::swap(bytes[i], bytes[sizeof(T) - 1 - i]);
        std::memcpy(&value, bytes.data(), sizeof(T));
        return value;
    }
}

inline void write_magic(std::ostream& out, std::string_view magic) {
    out.write(magic.data(), static_cast<std::streamsize>(magic.size()));
}

inline void expect_magic(std::istream& in, std::string_view magic) {
    char buf[4] = {};
    in.read(buf, 4);
    if (!in || std::string_view(buf, 4) != magic) {
        throw IoError("bad magic, expected " + std::string(magic));
    }
}

template <typename T>
inline void write(std::ostream& out, T value) {
    const T le = to_le(value);
    out.write(reinterpret_cast<const char*>(&le), sizeof(T));
}

template <typename T>
inline T read(std::istream& in) {
    T value{};
    in.read(reinterpret_cast<char*>(&value), sizeof(T));
    if (!in) throw IoError("truncated binary stream");
    return to_le(value);
}

inline void write_u32(std::ostream& out, std::uint32_t v) { write(out, v); }
inline void write_u64(std::ostream& out, std::uint64_t v) { write(out, v); }
inline void write_f64(std::ostream& out, double v) {
    write(out, std::bit_cast<std::uint64_t>(v));
}
inline std::uint32_t read_u32(std::istream& in) { return read<std::uint32_t>(in); }
inline std::uint64_t read_u64(std::istream& in) { return read<std::uint64_t>(in); }
inline double read_f64(std::istream& in) { return std::bit_cast<double>(read<std::uint64_t>(in)); }

// Row-major dense block.
template <typename M>
void write_block(std::ostream& out, const M& m) {
    for (Eigen::Index r = 0; r < m.rows(); ++r)
        for (Eigen::Index c = 0; c < m.cols(); ++c) write_f64(out, m(r, c));
}

template <typename M>
void read_block(std::istream& in, M& m) {
    for (Eigen::Index r = 0; r < m.rows(); ++r)
        for (Eigen::Index c = 0; c < m.cols(); ++c) m(r, c) = read_f64(in);
}

} // namespace riskdiff::binio
