#pragma once

#include <bit>
#include <cstdint>
#include <fstream>
#include <span>
#include <stdexcept>
#include <string>

namespace typeforge {

// Raised for anything a caller could have prevented: malformed input files,
// mismatched shapes, missing artifacts. The CLI maps it to exit code 2.
class ValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// All binary formats are little-endian regardless of host order.

inline void write_u32(std::ostream& os, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v & 0xff),
                        static_cast<unsigned char>((v >> 8) & 0xff),
                        static_cast<unsigned char>((v >> 16) & 0xff),
                        static_cast<unsigned char>((v >> 24) & 0xff)};
  os.write(reinterpret_cast<const char*>(b), 4);
}

inline void write_u64(std::ostream& os, std::uint64_t v) {
  write_u32(os, static_cast<std::uint32_t>(v & 0xffffffffull));
  write_u32(os, static_cast<std::uint32_t>(v >> 32));
}

inline void write_f32(std::ostream& os, float v) {
  write_u32(os, std::bit_cast<std::uint32_t>(v));
}

inline void write_f64(std::ostream& os, double v) {
  write_u64(os, std::bit_cast<std::uint64_t>(v));
}

inline void write_string(std::ostream& os, const std::string& s) {
  write_u32(os, static_cast<std::uint32_t>(s.size()));
  os.write(s.data(), static_cast<std::streamsize>(s.size()));
}

inline std::uint32_t read_u32(std::istream& is, const char* what) {
  unsigned char b[4];
  is.read(reinterpret_cast<char*>(b), 4);
  if (!is) throw ValidationError(std::string("unexpected end of file reading ") + what);
  return static_cast<std::uint32_t>(b[0]) |
         (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) |
         (static_cast<std::uint32_t>(b[3]) << 24);
}

inline std::uint64_t read_u64(std::istream& is, const char* what) {
  const std::uint64_t lo = read_u32(is, what);
  const std::uint64_t hi = read_u32(is, what);
  return lo | (hi << 32);
}

inline float read_f32(std::istream& is, const char* what) {
  return std::bit_cast<float>(read_u32(is, what));
}

inline double read_f64(std::istream& is, const char* what) {
  return std::bit_cast<double>(read_u64(is, what));
}

inline std::string read_string(std::istream& is, const char* what) {
  const std::uint32_t n = read_u32(is, what);
  std::string s(n, '\0');
  is.read(s.data(), static_cast<std::streamsize>(n));
  if (!is) throw ValidationError(std::string("unexpected end of file reading ") + what);
  return s;
}

inline std::ifstream open_input(const std::string& path, bool binary = true) {
  std::ifstream is(path, binary ? std::ios::binary : std::ios::in);
  if (!is) throw ValidationError("cannot open file for reading: " + path);
  return is;
}

inline std::ofstream open_output(const std::string& path, bool binary = true) {
  std::ofstream os(path, binary ? std::ios::binary : std::ios::out);
  if (!os) throw ValidationError("cannot open file for writing: " + path);
  return os;
}

}  // namespace typeforge
