#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "dflmoe/tensor.hpp"

namespace dflmoe {

/// Binary tensor layout, little-endian throughout:
///   u32 rank, u64 dim[rank], f64 value[prod(dims)] (row-major, raw IEEE-754
///   bit patterns). Round-trips bit-exactly.
void write_tensor(std::vector<std::uint8_t>& out, const Tensor& t);

/// Reads one tensor starting at `offset`; advances `offset` past it.
Tensor read_tensor(const std::vector<std::uint8_t>& buf, std::size_t& offset);

void write_u32(std::vector<std::uint8_t>& out, std::uint32_t v);
void write_u64(std::vector<std::uint8_t>& out, std::uint64_t v);
void write_f64(std::vector<std::uint8_t>& out, double v);
std::uint32_t read_u32(const std::vector<std::uint8_t>& buf, std::size_t& offset);
std::uint64_t read_u64(const std::vector<std::uint8_t>& buf, std::size_t& offset);
double read_f64(const std::vector<std::uint8_t>& buf, std::size_t& offset);

void write_file(const std::string& path, const std::vector<std::uint8_t>& bytes);
std::vector<std::uint8_t> read_file(const std::string& path);

}  // namespace dflmoe
