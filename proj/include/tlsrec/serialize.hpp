#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <string>

#include "tlsrec/error.hpp"

namespace tlsrec {

// Little-endian scalar IO for the binary artifact files. Explicit byte order
// keeps the files portable and byte-identical across platforms.

inline void write_bytes(std::ostream& out, const void* data, std::size_t n) {
  out.write(static_cast<const char*>(data), static_cast<std::streamsize>(n));
  if (!out) throw IoError("write failed");
}

inline void read_bytes(std::istream& in, void* data, std::size_t n) {
  in.read(static_cast<char*>(data), static_cast<std::streamsize>(n));
  if (static_cast<std::size_t>(in.gcount()) != n) throw IoError("unexpected end of file");
}

inline void write_u8(std::ostream& out, std::uint8_t v) { write_bytes(out, &v, 1); }

inline std::uint8_t read_u8(std::istream& in) {
  std::uint8_t v;
  read_bytes(in, &v, 1);
  return v;
}

inline void write_u32(std::ostream& out, std::uint32_t v) {
  unsigned char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
  write_bytes(out, b, 4);
}

inline std::uint32_t read_u32(std::istream& in) {
  unsigned char b[4];
  read_bytes(in, b, 4);
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
  return v;
}

inline void write_u64(std::ostream& out, std::uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
  write_bytes(out, b, 8);
}

inline std::uint64_t read_u64(std::istream& in) {
  unsigned char b[8];
  read_bytes(in, b, 8);
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return v;
}

inline void write_i64(std::ostream& out, std::int64_t v) {
  write_u64(out, static_cast<std::uint64_t>(v));
}

inline std::int64_t read_i64(std::istream& in) {
  return static_cast<std::int64_t>(read_u64(in));
}

inline void write_f64(std::ostream& out, double v) {
  write_u64(out, std::bit_cast<std::uint64_t>(v));
}

inline double read_f64(std::istream& in) { return std::bit_cast<double>(read_u64(in)); }

inline void write_string(std::ostream& out, const std::string& s) {
  write_u64(out, s.size());
  if (!s.empty()) write_bytes(out, s.data(), s.size());
}

inline std::string read_string(std::istream& in) {
  const std::uint64_t n = read_u64(in);
  std::string s(n, '\0');
  if (n) read_bytes(in, s.data(), n);
  return s;
}

/// Reads a fixed magic tag and fails with the artifact's name if it differs.
inline void expect_magic(std::istream& in, const char (&magic)[5], const std::string& what) {
  char got[4];
  read_bytes(in, got, 4);
  if (std::memcmp(got, magic, 4) != 0) throw IoError("not a " + what + " file (bad magic)");
}

}  // namespace tlsrec
