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

#include "herdcast/binio.hpp"

#include <cstdio>
#include <fstream>
#include <iterator>

namespace herdcast::binio {

void Writer::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("IO_OPEN", "cannot open '" + path.string() + "' for writing");
  out.write(reinterpret_cast<const char*>(buf_.data()), static_cast<std::streamsize>(buf_.size()));
  if (!out) throw Error("IO_WRITE", "write failed for '" + path.string() + "'");
}

Reader Reader::from_file(const std::filesystem::path& path, std::string what) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("IO_OPEN", "cannot open '" + path.string() + "'");
  std::vector<std::uint8_t> data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return Reader(std::move(data), std::move(what));
}

void Reader::need(std::size_t n) const {
  if (pos_ + n > data_.size()) {
    throw FormatError(FormatErrorKind::truncated, "TRUNCATED",
                      "truncated " + what_ + ": needed " + std::to_string(n) + " bytes at offset " +
                          std::to_string(pos_) + ", file has " + std::to_string(data_.size()));
  }
}

std::uint32_t expect_header(Reader& in, std::string_view magic, std::uint32_t version) {
  if (in.remaining() < magic.size() || in.bytes(magic.size()) != magic) {
    throw FormatError(FormatErrorKind::bad_magic, "BAD_MAGIC", "not a " + in.what());
  }
  const std::uint32_t found = in.u32();
  if (found != version) {
    throw FormatError(FormatErrorKind::bad_version, "BAD_VERSION",
                      "unsupported " + in.what() + " version " + std::to_string(found) +
                          " (expected " + std::to_string(version) + ")");
  }
  return found;
}

std::uint64_t fnv1a(std::span<const std::uint8_t> data, std::uint64_t h) {
  for (std::uint8_t b : data) {
    h ^= b;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::uint64_t fnv1a(std::string_view data, std::uint64_t h) {
  return fnv1a(std::span(reinterpret_cast<const std::uint8_t*>(data.data()), data.size()), h);
}

std::uint64_t hash_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("IO_OPEN", "cannot open '" + path.string() + "'");
  std::uint64_t h = 0xcbf29ce484222325ULL;
  std::vector<char> chunk(1 << 16);
  while (in) {
    in.read(chunk.data(), static_cast<std::streamsize>(chunk.size()));
    const auto n = static_cast<std::size_t>(in.gcount());
    h = fnv1a(std::span(reinterpret_cast<const std::uint8_t*>(chunk.data()), n), h);
  }
  return h;
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

}  // namespace herdcast::binio
