// SPDX-License-Identifier: Apache-2.0
#include "affect/serialize.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace affect::serialize {

namespace {

static_assert(sizeof(double) == 8);

void write_u32(std::ostream& os, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v),
                        static_cast<unsigned char>(v >> 8),
                        static_cast<unsigned char>(v >> 16),
                        static_cast<unsigned char>(v >> 24)};
  os.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t read_u32(std::istream& is, const char* what) {
  unsigned char b[4];
  if (!is.read(reinterpret_cast<char*>(b), 4))
    throw std::runtime_error(std::string("AFEN: truncated reading ") + what);
  return std::uint32_t(b[0]) | std::uint32_t(b[1]) << 8 |
         std::uint32_t(b[2]) << 16 | std::uint32_t(b[3]) << 24;
}

}  // namespace

void save_afen(const std::string& path, const NamedMatrices& arrays) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("AFEN: cannot open " + path + " for write");
  os.write("AFEN", 4);
  write_u32(os, kFormatVersion);
  write_u32(os, std::uint32_t(arrays.size()));
  for (const auto& [name, m] : arrays) {
    write_u32(os, std::uint32_t(name.size()));
    os.write(name.data(), std::streamsize(name.size()));
    write_u32(os, std::uint32_t(m.rows()));
    write_u32(os, std::uint32_t(m.cols()));
    // little-endian host assumed; doubles written verbatim
    os.write(reinterpret_cast<const char*>(m.data()),
             std::streamsize(m.size() * sizeof(double)));
  }
  if (!os) throw std::runtime_error("AFEN: write failed for " + path);
}

NamedMatrices load_afen(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("AFEN: cannot open " + path);
  char magic[4];
  if (!is.read(magic, 4) || std::memcmp(magic, "AFEN", 4) != 0)
    throw std::runtime_error("AFEN: bad magic in " + path);
  const std::uint32_t version = read_u32(is, "version");
  if (version != kFormatVersion)
    throw std::runtime_error("AFEN: unsupported version " +
                             std::to_string(version));
  const std::uint32_t count = read_u32(is, "array count");
  NamedMatrices arrays;
  arrays.reserve(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::uint32_t name_len = read_u32(is, "name length");
    std::string name(name_len, '\0');
    if (!is.read(name.data(), name_len))
      throw std::runtime_error("AFEN: truncated name");
    const std::uint32_t rows = read_u32(is, "rows");
    const std::uint32_t cols = read_u32(is, "cols");
    Matrix m(rows, cols);
    if (!is.read(reinterpret_cast<char*>(m.data()),
                 std::streamsize(m.size() * sizeof(double))))
      throw std::runtime_error("AFEN: truncated data for " + name);
    arrays.emplace_back(std::move(name), std::move(m));
  }
  return arrays;
}

const Matrix* find(const NamedMatrices& arrays, const std::string& name) {
  for (const auto& [n, m] : arrays)
    if (n == name) return &m;
  return nullptr;
}

}  // namespace affect::serialize
