#pragma once

// Little-endian-native binary helpers shared by the table and checkpoint formats.

#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <string>
#include <string_view>
#include <type_traits>
#include <vector>

#include "tabdpt/common.hpp"

namespace tabdpt::io {

class Writer {
 public:
  explicit Writer(std::ostream& out) : out_(out) {}

  void bytes(const void* data, std::size_t n) {
    out_.write(static_cast<const char*>(data), static_cast<std::streamsize>(n));
  }
  template <typename T>
    requires std::is_arithmetic_v<T>
  void put(T value) {
    bytes(&value, sizeof(T));
  }
  void str(std::string_view s) {
    put<std::uint32_t>(static_cast<std::uint32_t>(s.size()));
    bytes(s.data(), s.size());
  }
  template <typename T>
  void array(const std::vector<T>& v) {
    put<std::uint64_t>(v.size());
    if (!v.empty()) bytes(v.data(), v.size() * sizeof(T));
  }

 private:
  std::ostream& out_;
};

class Reader {
 public:
  explicit Reader(std::istream& in) : in_(in) {}

  void bytes(void* data, std::size_t n) {
    in_.read(static_cast<char*>(data), static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(in_.gcount()) != n) throw data_error("truncated binary file");
  }
  template <typename T>
    requires std::is_arithmetic_v<T>
  T get() {
    T value{};
    bytes(&value, sizeof(T));
    return value;
  }
  std::string str() {
    const auto n = get<std::uint32_t>();
    if (n > (1u << 30)) throw data_error("corrupt string length");
    std::string s(n, '\0');
    if (n) bytes(s.data(), n);
    return s;
  }
  template <typename T>
  std::vector<T> array() {
    const auto n = get<std::uint64_t>();
    if (n > (std::uint64_t{1} << 34)) throw data_error("corrupt array length");
    std::vector<T> v(n);
    if (n) bytes(v.data(), n * sizeof(T));
    return v;
  }
  void expect_magic(std::string_view magic) {
    std::string got(magic.size(), '\0');
    bytes(got.data(), got.size());
    if (got != magic) throw data_error("bad magic: expected " + std::string(magic));
  }

 private:
  std::istream& in_;
};

}  // namespace tabdpt::io
