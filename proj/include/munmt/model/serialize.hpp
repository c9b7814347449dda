#pragma once

#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <stdexcept>
#include <string>

#include "munmt/model/tape.hpp"

// Little-endian binary helpers shared by the model and trainer checkpoints.
namespace munmt::io {

template <class P>
void write_pod(std::ostream& out, P value) {
  out.write(reinterpret_cast<const char*>(&value), sizeof(P));
}

template <class P>
P read_pod(std::istream& in) {
  P value{};
  in.read(reinterpret_cast<char*>(&value), sizeof(P));
  if (!in) throw std::runtime_error("truncated checkpoint");
  return value;
}

inline void write_magic(std::ostream& out, const char (&magic)[8]) { out.write(magic, 8); }

inline void expect_magic(std::istream& in, const char (&magic)[8], const char* what) {
  char buf[8];
  in.read(buf, 8);
  if (!in) throw std::runtime_error("truncated checkpoint");
  if (std::memcmp(buf, magic, 8) != 0) throw std::runtime_error(std::string("bad magic for ") + what);
}

inline void write_string(std::ostream& out, const std::string& s) {
  write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(s.size()));
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

inline std::string read_string(std::istream& in, std::uint32_t max_len = 1u << 20) {
  const auto n = read_pod<std::uint32_t>(in);
  if (n > max_len) throw std::runtime_error("corrupt checkpoint string length");
  std::string s(n, '\0');
  in.read(s.data(), static_cast<std::streamsize>(n));
  if (!in) throw std::runtime_error("truncated checkpoint");
  return s;
}

template <class T>
void write_matrix(std::ostream& out, const ad::Matrix<T>& m) {
  write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(m.rows()));
  write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(m.cols()));
  out.write(reinterpret_cast<const char*>(m.data()), static_cast<std::streamsize>(m.size() * sizeof(T)));
}

// Reads into a pre-shaped matrix; shapes must match exactly.
template <class T>
void read_matrix(std::istream& in, ad::Matrix<T>& m) {
  const auto rows = read_pod<std::uint32_t>(in);
  const auto cols = read_pod<std::uint32_t>(in);
  if (rows != m.rows() || cols != m.cols()) throw std::runtime_error("checkpoint tensor shape mismatch");
  in.read(reinterpret_cast<char*>(m.data()), static_cast<std::streamsize>(m.size() * sizeof(T)));
  if (!in) throw std::runtime_error("truncated checkpoint");
}

}  // namespace munmt::io
