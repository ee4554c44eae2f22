#pragma once

#include <cstdint>
#include <istream>
#include <ostream>
#include <span>
#include <string>
#include <string_view>

namespace i2s::io {

// Little-endian primitives shared by every on-disk format (grids, coefficient
// blobs, datasets, checkpoints, distributions).
void write_magic(std::ostream& os, std::string_view magic);
void expect_magic(std::istream& is, std::string_view magic);

void write_u8(std::ostream& os, std::uint8_t v);
void write_u32(std::ostream& os, std::uint32_t v);
void write_u64(std::ostream& os, std::uint64_t v);
void write_f32(std::ostream& os, float v);
void write_f64(std::ostream& os, double v);
void write_f64s(std::ostream& os, std::span<const double> v);
void write_string(std::ostream& os, const std::string& s);  // u64 length + bytes

std::uint8_t read_u8(std::istream& is);
std::uint32_t read_u32(std::istream& is);
std::uint64_t read_u64(std::istream& is);
float read_f32(std::istream& is);
double read_f64(std::istream& is);
void read_f64s(std::istream& is, std::span<double> out);
std::string read_string(std::istream& is, std::uint64_t max_len = 1u << 26);

// FNV-1a over a file's bytes; used for determinism checks.
std::uint64_t file_hash(const std::string& path);

}  // namespace i2s::io
