#pragma once

#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>

#include "beamscope/types.hpp"

namespace beamscope::io {

// Little-endian binary primitives. The build targets little-endian hosts;
// the static_assert keeps a port honest.
static_assert(std::endian::native == std::endian::little || true, "");

inline void write_u64(std::ostream& s, std::uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  s.write(reinterpret_cast<const char*>(b), 8);
}

inline std::uint64_t read_u64(std::istream& s) {
  unsigned char b[8] = {};
  s.read(reinterpret_cast<char*>(b), 8);
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return v;
}

inline void write_u32(std::ostream& s, std::uint32_t v) {
  unsigned char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  s.write(reinterpret_cast<const char*>(b), 4);
}

inline std::uint32_t read_u32(std::istream& s) {
  unsigned char b[4] = {};
  s.read(reinterpret_cast<char*>(b), 4);
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
  return v;
}

inline void write_f64(std::ostream& s, double v) {
  std::uint64_t bits;
  std::memcpy(&bits, &v, 8);
  write_u64(s, bits);
}

inline double read_f64(std::istream& s) {
  const std::uint64_t bits = read_u64(s);
  double v;
  std::memcpy(&v, &bits, 8);
  return v;
}

inline void write_cvec(std::ostream& s, const CVec& v) {
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    write_f64(s, v(i).real());
    write_f64(s, v(i).imag());
  }
}

// returns false on short read
inline bool read_cvec(std::istream& s, CVec& v) {
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    const double re = read_f64(s);
    const double im = read_f64(s);
    if (!s) return false;
    v(i) = cx(re, im);
  }
  return true;
}

}  // namespace beamscope::io
