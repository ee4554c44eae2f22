#include "i2s/binary_io.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace i2s::io {
namespace {

static_assert(std::endian::native == std::endian::little || std::endian::native == std::endian::big);

template <typename T>
void put(std::ostream& os, T v) {
  std::array<char, sizeof(T)> bytes;
  std::memcpy(bytes.data(), &v, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) {
    std::reverse(bytes.begin(), bytes.end());
  }
  os.write(bytes.data(), sizeof(T));
  if (!os) throw std::runtime_error("write failed");
}

template <typename T>
T get(std::istream& is) {
  std::array<char, sizeof(T)> bytes;
  is.read(bytes.data(), sizeof(T));
  if (!is) throw std::runtime_error("unexpected end of file");
  if constexpr (std::endian::native == std::endian::big) {
    std::reverse(bytes.begin(), bytes.end());
  }
  T v;
  std::memcpy(&v, bytes.data(), sizeof(T));
  return v;
}

}  // namespace

void write_magic(std::ostream& os, std::string_view magic) {
  os.write(magic.data(), static_cast<std::streamsize>(magic.size()));
  if (!os) throw std::runtime_error("write failed");
}

void expect_magic(std::istream& is, std::string_view magic) {
  std::string got(magic.size(), '\0');
  is.read(got.data(), static_cast<std::streamsize>(got.size()));
  if (!is || got != magic) {
    throw std::runtime_error("bad file magic: expected '" + std::string(magic) + "'");
  }
}

void write_u8(std::ostream& os, std::uint8_t v) { put(os, v); }
void write_u32(std::ostream& os, std::uint32_t v) { put(os, v); }
void write_u64(std::ostream& os, std::uint64_t v) { put(os, v); }
void write_f32(std::ostream& os, float v) { put(os, v); }
void write_f64(std::ostream& os, double v) { put(os, v); }

void write_f64s(std::ostream& os, std::span<const double> v) {
  if constexpr (std::endian::native == std::endian::little) {
    os.write(reinterpret_cast<const char*>(v.data()), static_cast<std::streamsize>(v.size_bytes()));
    if (!os) throw std::runtime_error("write failed");
  } else {
    for (double x : v) put(os, x);
  }
}

void write_string(std::ostream& os, const std::string& s) {
  write_u64(os, s.size());
  os.write(s.data(), static_cast<std::streamsize>(s.size()));
  if (!os) throw std::runtime_error("write failed");
}

std::uint8_t read_u8(std::istream& is) { return get<std::uint8_t>(is); }
std::uint32_t read_u32(std::istream& is) { return get<std::uint32_t>(is); }
std::uint64_t read_u64(std::istream& is) { return get<std::uint64_t>(is); }
float read_f32(std::istream& is) { return get<float>(is); }
double read_f64(std::istream& is) { return get<double>(is); }

void read_f64s(std::istream& is, std::span<double> out) {
  if constexpr (std::endian::native == std::endian::little) {
    is.read(reinterpret_cast<char*>(out.data()), static_cast<std::streamsize>(out.size_bytes()));
    if (!is) throw std::runtime_error("unexpected end of file");
  } else {
    for (double& x : out) x = get<double>(is);
  }
}

std::string read_string(std::istream& is, std::uint64_t max_len) {
  const auto n = read_u64(is);
  if (n > max_len) throw std::runtime_error("string field too long");
  std::string s(n, '\0');
  is.read(s.data(), static_cast<std::streamsize>(n));
  if (!is) throw std::runtime_error("unexpected end of file");
  return s;
}

std::uint64_t file_hash(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::uint64_t h = 1469598103934665603ull;
  std::array<char, 1 << 16> buf;
  while (in) {
    in.read(buf.data(), buf.size());
    for (std::streamsize i = 0; i < in.gcount(); ++i) {
      h ^= static_cast<unsigned char>(buf[static_cast<std::size_t>(i)]);
      h *= 1099511628211ull;
    }
  }
  return h;
}

}  // namespace i2s::io
