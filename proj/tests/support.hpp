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

#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>
#include <vector>

#include <unistd.h>

#include "herdcast/trial.hpp"

namespace herdcast::testing {

// Fresh scratch directory removed on destruction.
class TempDir {
 public:
  TempDir() {
    std::string tmpl = (std::filesystem::temp_directory_path() / "herdcast-test-XXXXXX").string();
    if (!::mkdtemp(tmpl.data())) throw std::runtime_error("mkdtemp failed");
    path_ = tmpl;
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

inline std::vector<char> read_bytes(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void write_text(const std::filesystem::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  out << text;
}

// Trial whose agents sit still: herders at h0/h1, targets at `targets`.
inline Trial static_trial(std::size_t frames, Vec2 h0, Vec2 h1, std::array<Vec2, kNumTargets> targets,
                          double hz = 50.0) {
  Trial t;
  t.trial_id = "static";
  t.hz = hz;
  t.success = true;
  for (std::size_t i = 0; i < frames; ++i) {
    Frame f;
    f.t = static_cast<double>(i) / hz;
    f.herders[0].pos = h0;
    f.herders[1].pos = h1;
    for (int k = 0; k < kNumTargets; ++k) f.targets[k].pos = targets[k];
    t.frames.push_back(f);
  }
  return t;
}

}  // namespace herdcast::testing
