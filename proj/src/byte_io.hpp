// Copyright 2026 The evipan Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Little-endian encode/decode helpers shared by the binary file formats.

#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>
#include <vector>

#include "evipan/errors.hpp"

namespace evipan::detail {

template <typename U>
inline void put_le(std::vector<unsigned char>& out, U value) {
  static_assert(std::is_unsigned_v<U>);
  for (std::size_t i = 0; i < sizeof(U); ++i) {
    out.push_back(static_cast<unsigned char>(value >> (8 * i)));
  }
}

template <typename U>
inline U get_le(const unsigned char* in) {
  static_assert(std::is_unsigned_v<U>);
  U value = 0;
  for (std::size_t i = 0; i < sizeof(U); ++i) {
    value |= static_cast<U>(in[i]) << (8 * i);
  }
  return value;
}

inline void put_f32(std::vector<unsigned char>& out, float v) {
  put_le(out, std::bit_cast<std::uint32_t>(v));
}
inline void put_f64(std::vector<unsigned char>& out, double v) {
  put_le(out, std::bit_cast<std::uint64_t>(v));
}
inline void put_i64(std::vector<unsigned char>& out, std::int64_t v) {
  put_le(out, static_cast<std::uint64_t>(v));
}
inline float get_f32(const unsigned char* in) {
  return std::bit_cast<float>(get_le<std::uint32_t>(in));
}
inline double get_f64(const unsigned char* in) {
  return std::bit_cast<double>(get_le<std::uint64_t>(in));
}
inline std::int64_t get_i64(const unsigned char* in) {
  return static_cast<std::int64_t>(get_le<std::uint64_t>(in));
}

inline std::vector<unsigned char> read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw IoError("cannot open file: " + path.string());
  }
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                   std::istreambuf_iterator<char>());
  if (in.bad()) {
    throw IoError("read failed: " + path.string());
  }
  return bytes;
}

inline void write_file_bytes(const std::filesystem::path& path,
                             const std::vector<unsigned char>& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) {
    throw IoError("cannot open file for writing: " + path.string());
  }
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) {
    throw IoError("write failed: " + path.string());
  }
}

}  // namespace evipan::detail
