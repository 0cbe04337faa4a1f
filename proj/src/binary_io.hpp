#pragma once

#include <istream>
#include <ostream>
#include <string>

#include "eelab/common.hpp"

namespace eelab::io {

template <typename T>
void put(std::ostream& os, T v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::istream& is) {
  T v{};
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!is) throw FormatError("unexpected end of file");
  return v;
}

inline void expect_magic(std::istream& is, const char* magic, const std::string& path) {
  char buf[4];
  is.read(buf, 4);
  if (!is || std::string(buf, 4) != std::string(magic, 4))
    throw FormatError(path + " is not a " + std::string(magic, 4) + " file");
}

}  // namespace eelab::io
