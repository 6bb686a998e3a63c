#pragma once

// Tensor dump format.
//
//   header: "SVTT 1 <dtype> <rank> <d0> ... <d{rank-1}>\n"   (ASCII/UTF-8)
//           dtype is "f32" or "f64"; rank 0 denotes a scalar
//   body:   product(d) values, IEEE-754, little-endian, row-major
//
// Loading converts between f32 and f64 when the requested type differs.

#include <bit>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>

#include "svt/tensor.hpp"

namespace svt {

template <class T>
constexpr const char* dtype_name() {
  return std::is_same_v<T, float> ? "f32" : "f64";
}

namespace detail {

template <class U>
void write_le(std::ostream& os, U value) {
  using Bits = std::conditional_t<sizeof(U) == 4, std::uint32_t, std::uint64_t>;
  Bits bits;
  std::memcpy(&bits, &value, sizeof bits);
  unsigned char bytes[sizeof bits];
  for (std::size_t i = 0; i < sizeof bits; ++i) bytes[i] = static_cast<unsigned char>(bits >> (8 * i));
  os.write(reinterpret_cast<const char*>(bytes), sizeof bytes);
}

template <class U>
U read_le(std::istream& is) {
  using Bits = std::conditional_t<sizeof(U) == 4, std::uint32_t, std::uint64_t>;
  unsigned char bytes[sizeof(Bits)];
  if (!is.read(reinterpret_cast<char*>(bytes), sizeof bytes)) throw IoError("tensor: truncated data block");
  Bits bits = 0;
  for (std::size_t i = 0; i < sizeof bits; ++i) bits |= static_cast<Bits>(bytes[i]) << (8 * i);
  U value;
  std::memcpy(&value, &bits, sizeof value);
  return value;
}

}  // namespace detail

template <class T>
void write_tensor(std::ostream& os, const Tensor<T>& t) {
  os << "SVTT 1 " << dtype_name<T>() << ' ' << t.rank();
  for (auto d : t.shape()) os << ' ' << d;
  os << '\n';
  for (auto v : t.data()) detail::write_le<T>(os, v);
  if (!os) throw IoError("tensor: write failed");
}

template <class T>
Tensor<T> read_tensor(std::istream& is) {
  std::string line;
  if (!std::getline(is, line)) throw IoError("tensor: missing header line");
  std::istringstream hs(line);
  std::string magic, dtype;
  int version = 0;
  std::size_t rank = 0;
  if (!(hs >> magic >> version >> dtype >> rank) || magic != "SVTT" || version != 1) {
    throw IoError("tensor: bad header '" + line + "'");
  }
  Shape shape(rank);
  for (auto& d : shape) {
    if (!(hs >> d) || d == 0) throw IoError("tensor: bad shape in header '" + line + "'");
  }
  const std::size_t n = numel(shape);
  std::vector<T> data(n);
  if (dtype == "f32") {
    for (auto& v : data) v = static_cast<T>(detail::read_le<float>(is));
  } else if (dtype == "f64") {
    for (auto& v : data) v = static_cast<T>(detail::read_le<double>(is));
  } else {
    throw IoError("tensor: unknown dtype '" + dtype + "'");
  }
  return Tensor<T>(std::move(shape), std::move(data));
}

}  // namespace svt
