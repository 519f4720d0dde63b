#include "dflmoe/serialize.hpp"

#include <bit>
#include <cstring>
#include <fstream>

namespace dflmoe {

void write_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void write_u64(std::vector<std::uint8_t>& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void write_f64(std::vector<std::uint8_t>& out, double v) {
    write_u64(out, std::bit_cast<std::uint64_t>(v));
}

namespace {

void ensure_available(const std::vector<std::uint8_t>& buf, std::size_t offset, std::size_t n) {
    if (offset + n > buf.size()) {
        throw Error(ErrorCode::ParseError, "truncated binary payload");
    }
}

}  // namespace

std::uint32_t read_u32(const std::vector<std::uint8_t>& buf, std::size_t& offset) {
    ensure_available(buf, offset, 4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(buf[offset + i]) << (8 * i);
    offset += 4;
    return v;
}

std::uint64_t read_u64(const std::vector<std::uint8_t>& buf, std::size_t& offset) {
    ensure_available(buf, offset, 8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(buf[offset + i]) << (8 * i);
    offset += 8;
    return v;
}

double read_f64(const std::vector<std::uint8_t>& buf, std::size_t& offset) {
    return std::bit_cast<double>(read_u64(buf, offset));
}

void write_tensor(std::vector<std::uint8_t>& out, const Tensor& t) {
    write_u32(out, static_cast<std::uint32_t>(t.rank()));
    for (std::size_t d : t.shape()) write_u64(out, d);
    for (double v : t.values()) write_f64(out, v);
}

Tensor read_tensor(const std::vector<std::uint8_t>& buf, std::size_t& offset) {
    std::uint32_t rank = read_u32(buf, offset);
    if (rank > 8) throw Error(ErrorCode::ParseError, "implausible tensor rank");
    Shape shape(rank);
    std::size_t n = 1;
    for (auto& d : shape) {
        d = static_cast<std::size_t>(read_u64(buf, offset));
        n *= d;
    }
    std::vector<double> data(n);
    for (auto& v : data) v = read_f64(buf, offset);
    return Tensor::from_data(std::move(shape), std::move(data));
}

void write_file(const std::string& path, const std::vector<std::uint8_t>& bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::MissingArtifacts, "cannot open " + path + " for writing");
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw Error(ErrorCode::MissingArtifacts, "failed writing " + path);
}

std::vector<std::uint8_t> read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary | std::ios::ate);
    if (!in) throw Error(ErrorCode::MissingArtifacts, "cannot open " + path);
    auto size = in.tellg();
    in.seekg(0);
    std::vector<std::uint8_t> bytes(static_cast<std::size_t>(size));
    in.read(reinterpret_cast<char*>(bytes.data()), size);
    if (!in) throw Error(ErrorCode::ParseError, "failed reading " + path);
    return bytes;
}

}  // namespace dflmoe
