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

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>

namespace herdcast {

// Base of every error the library throws. `code()` is a stable
// machine-readable identifier used by the command line front end.
class Error : public std::runtime_error {
 public:
  Error(std::string code, const std::string& message)
      : std::runtime_error(message), code_(std::move(code)) {}

  const std::string& code() const noexcept { return code_; }

 private:
  std::string code_;
};

inline constexpr int kNumHerders = 2;
inline constexpr int kNumTargets = 4;
// Target IDs 1..4 plus 0 for "no target".
inline constexpr int kNumClasses = kNumTargets + 1;

enum class Expertise : std::uint8_t { expert = 0, novice = 1 };

inline std::string_view to_string(Expertise e) {
  return e == Expertise::expert ? "expert" : "novice";
}

inline Expertise parse_expertise(std::string_view s) {
  if (s == "expert") return Expertise::expert;
  if (s == "novice") return Expertise::novice;
  throw Error("BAD_EXPERTISE", "unknown expertise '" + std::string(s) + "'");
}

struct Vec2 {
  double x = 0.0;
  double y = 0.0;

  friend Vec2 operator+(Vec2 a, Vec2 b) { return {a.x + b.x, a.y + b.y}; }
  friend Vec2 operator-(Vec2 a, Vec2 b) { return {a.x - b.x, a.y - b.y}; }
  friend Vec2 operator*(double s, Vec2 a) { return {s * a.x, s * a.y}; }
  friend Vec2 operator*(Vec2 a, double s) { return {s * a.x, s * a.y}; }
  friend bool operator==(Vec2 a, Vec2 b) = default;

  double norm() const { return std::hypot(x, y); }
  bool finite() const { return std::isfinite(x) && std::isfinite(y); }
};

inline double dot(Vec2 a, Vec2 b) { return a.x * b.x + a.y * b.y; }
inline double cross(Vec2 a, Vec2 b) { return a.x * b.y - a.y * b.x; }
inline double distance(Vec2 a, Vec2 b) { return (b - a).norm(); }

// Maps atan2 output onto (-pi, pi].
inline double wrap_angle(double a) {
  constexpr double kPi = 3.14159265358979323846;
  a = std::remainder(a, 2.0 * kPi);
  return a <= -kPi ? a + 2.0 * kPi : a;
}

}  // namespace herdcast
