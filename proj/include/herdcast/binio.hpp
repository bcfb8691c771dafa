/*
 * Copyright 2026 The herdcast Authors.
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "herdcast/common.hpp"

namespace herdcast::binio {

enum class FormatErrorKind { bad_magic, bad_version, truncated, corrupt };

// Error raised while decoding one of the binary artifact formats.
class FormatError : public Error {
 public:
  FormatError(FormatErrorKind kind, std::string code, const std::string& message)
      : Error(std::move(code), message), kind_(kind) {}
  FormatErrorKind kind() const noexcept { return kind_; }

 private:
  FormatErrorKind kind_;
};

// Little-endian byte sink.
class Writer {
 public:
  void bytes(std::string_view s) { buf_.insert(buf_.end(), s.begin(), s.end()); }
  void u8(std::uint8_t v) { buf_.push_back(v); }
  void u16(std::uint16_t v) { put(v, 2); }
  void u32(std::uint32_t v) { put(v, 4); }
  void u64(std::uint64_t v) { put(v, 8); }
  void f64(double v) { put(std::bit_cast<std::uint64_t>(v), 8); }
  void f64s(std::span<const double> vs) {
    for (double v : vs) f64(v);
  }
  // u32 length prefix followed by raw bytes.
  void str(std::string_view s) {
    u32(static_cast<std::uint32_t>(s.size()));
    bytes(s);
  }

  const std::vector<std::uint8_t>& buffer() const { return buf_; }
  void save(const std::filesystem::path& path) const;

 private:
  void put(std::uint64_t v, int n) {
    for (int i = 0; i < n; ++i) buf_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  std::vector<std::uint8_t> buf_;
};

// Little-endian byte source over an in-memory buffer. Reading past the end
// throws a FormatError of kind `truncated` carrying `what` in its message.
class Reader {
 public:
  Reader(std::vector<std::uint8_t> data, std::string what)
      : data_(std::move(data)), what_(std::move(what)) {}

  static Reader from_file(const std::filesystem::path& path, std::string what);

  std::string bytes(std::size_t n) {
    need(n);
    std::string s(reinterpret_cast<const char*>(data_.data() + pos_), n);
    pos_ += n;
    return s;
  }
  std::uint8_t u8() { return static_cast<std::uint8_t>(get(1)); }
  std::uint16_t u16() { return static_cast<std::uint16_t>(get(2)); }
  std::uint32_t u32() { return static_cast<std::uint32_t>(get(4)); }
  std::uint64_t u64() { return get(8); }
  double f64() { return std::bit_cast<double>(get(8)); }
  void f64s(std::span<double> out) {
    for (double& v : out) v = f64();
  }
  std::string str() { return bytes(u32()); }

  std::size_t remaining() const { return data_.size() - pos_; }
  const std::string& what() const { return what_; }

 private:
  void need(std::size_t n) const;
  std::uint64_t get(int n) {
    need(static_cast<std::size_t>(n));
    std::uint64_t v = 0;
    for (int i = 0; i < n; ++i) v |= std::uint64_t{data_[pos_ + i]} << (8 * i);
    pos_ += static_cast<std::size_t>(n);
    return v;
  }

  std::vector<std::uint8_t> data_;
  std::size_t pos_ = 0;
  std::string what_;
};

// Reads the 4-byte magic and u32 version, throwing the documented errors.
std::uint32_t expect_header(Reader& in, std::string_view magic, std::uint32_t version);

// 64-bit FNV-1a, used for content hashes of artifacts and configs.
std::uint64_t fnv1a(std::span<const std::uint8_t> data, std::uint64_t h = 0xcbf29ce484222325ULL);
std::uint64_t fnv1a(std::string_view data, std::uint64_t h = 0xcbf29ce484222325ULL);
std::uint64_t hash_file(const std::filesystem::path& path);
std::string hex64(std::uint64_t v);

}  // namespace herdcast::binio
